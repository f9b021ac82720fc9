#pragma once

#include <stdexcept>
#include <string>

namespace mrmf {

// Coarse error categories; the CLI maps each category to a distinct exit code.
enum class ErrorCode {
    config,
    data,
    shape,
    training,
    fusion,
    internal,
};

// Fine-grained conditions for dataset/checkpoint container parsing.
enum class DataErrorKind {
    bad_magic,
    bad_version,
    truncated,
    extent_overflow,
    bad_header,
    not_divisible,
    invalid,
    io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorCode::config, what) {}
};

class DataError : public Error {
public:
    DataError(DataErrorKind kind, const std::string& what) : Error(ErrorCode::data, what), kind_(kind) {}
    DataErrorKind kind() const { return kind_; }

private:
    DataErrorKind kind_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(ErrorCode::shape, what) {}
};

class TrainError : public Error {
public:
    explicit TrainError(const std::string& what) : Error(ErrorCode::training, what) {}
};

class FusionError : public Error {
public:
    explicit FusionError(const std::string& what) : Error(ErrorCode::fusion, what) {}
};

}  // namespace mrmf
