#pragma once

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mrmf/errors.hpp"

namespace mrmf {

enum class Phase : int { coarse = 0, dense = 1, finetune = 2 };

inline const char* phase_name(Phase p) {
    switch (p) {
        case Phase::coarse: return "coarse";
        case Phase::dense: return "dense";
        case Phase::finetune: return "finetune";
    }
    return "?";
}

inline Phase phase_from_name(const std::string& s) {
    if (s == "coarse") return Phase::coarse;
    if (s == "dense") return Phase::dense;
    if (s == "finetune") return Phase::finetune;
    throw DataError(DataErrorKind::invalid, "unknown phase name: " + s);
}

struct MetricsRecord {
    std::size_t stage = 0;
    Phase phase = Phase::finetune;
    std::size_t epoch = 0;  // 1-based within its phase
    double train_loss = 0.0;
    double val_loss = 0.0;
    double epoch_seconds = 0.0;
    double samples_per_sec = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "stage,phase,epoch,train_loss,val_loss,epoch_seconds,samples_per_sec";

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string metrics_row(const MetricsRecord& r) {
    std::string row = std::to_string(r.stage);
    row += ',';
    row += phase_name(r.phase);
    row += ',';
    row += std::to_string(r.epoch);
    row += ',';
    row += format_double(r.train_loss);
    row += ',';
    row += format_double(r.val_loss);
    row += ',';
    row += format_double(r.epoch_seconds);
    row += ',';
    row += format_double(r.samples_per_sec);
    return row;
}

inline void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError(DataErrorKind::io, "cannot open for writing: " + path);
    out << kMetricsHeader << '\n';
    for (const auto& r : records) out << metrics_row(r) << '\n';
    out.flush();
    if (!out) throw DataError(DataErrorKind::io, "write failed: " + path);
}

inline std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(DataErrorKind::io, "cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader)
        throw DataError(DataErrorKind::bad_header, "metrics file missing expected header: " + path);

    std::vector<MetricsRecord> records;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(fields, cell, ',')) cells.push_back(cell);
        if (cells.size() != 7)
            throw DataError(DataErrorKind::invalid, path + ":" + std::to_string(lineno) +
                                                        ": expected 7 columns, got " +
                                                        std::to_string(cells.size()));
        MetricsRecord r;
        try {
            r.stage = std::stoul(cells[0]);
            r.phase = phase_from_name(cells[1]);
            r.epoch = std::stoul(cells[2]);
            r.train_loss = std::stod(cells[3]);
            r.val_loss = std::stod(cells[4]);
            r.epoch_seconds = std::stod(cells[5]);
            r.samples_per_sec = std::stod(cells[6]);
        } catch (const std::exception&) {
            throw DataError(DataErrorKind::invalid,
                            path + ":" + std::to_string(lineno) + ": malformed numeric field");
        }
        records.push_back(r);
    }
    return records;
}

}  // namespace mrmf
