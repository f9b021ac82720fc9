#pragma once

#include <barrier>
#include <chrono>
#include <exception>
#include <string>
#include <thread>
#include <utility>

#include "mrmf/errors.hpp"
#include "mrmf/train.hpp"

namespace mrmf {

struct ConcurrentStageResult {
    TrainResult coarse;
    TrainResult dense;
    // Seconds from stage start: when each job finished training and when it
    // was released from the completion barrier. The early finisher's
    // released time ~= the slower job's done time.
    double coarse_done_s = 0.0;
    double coarse_released_s = 0.0;
    double dense_done_s = 0.0;
    double dense_released_s = 0.0;
};

// Runs the coarse and dense trainings simultaneously in disjoint worker
// groups (each job's `workers` field carries its allocation), synchronizing
// at a completion barrier. Because the jobs share no mutable state, results
// are bitwise identical to running the two jobs sequentially with the same
// per-group worker counts.
inline ConcurrentStageResult concurrent_stage(const TrainJob& coarse_job,
                                              const TrainJob& dense_job) {
    ConcurrentStageResult result;
    std::barrier<> completion(2);
    const auto start = std::chrono::steady_clock::now();
    auto since_start = [&start]() {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    std::exception_ptr coarse_error;
    std::exception_ptr dense_error;

    auto run = [&](const TrainJob& job, TrainResult& out, double& done_s, double& released_s,
                   std::exception_ptr& error) {
        try {
            out = train_until_stop(job);
        } catch (...) {
            error = std::current_exception();
        }
        done_s = since_start();
        completion.arrive_and_wait();
        released_s = since_start();
    };

    std::thread coarse_thread(run, std::cref(coarse_job), std::ref(result.coarse),
                              std::ref(result.coarse_done_s), std::ref(result.coarse_released_s),
                              std::ref(coarse_error));
    std::thread dense_thread(run, std::cref(dense_job), std::ref(result.dense),
                             std::ref(result.dense_done_s), std::ref(result.dense_released_s),
                             std::ref(dense_error));
    coarse_thread.join();
    dense_thread.join();

    if (coarse_error || dense_error) {
        auto describe = [](std::exception_ptr e) -> std::string {
            if (!e) return "completed";
            try {
                std::rethrow_exception(e);
            } catch (const std::exception& ex) {
                return ex.what();
            } catch (...) {
                return "unknown error";
            }
        };
        throw TrainError("concurrent stage aborted; coarse: " + describe(coarse_error) +
                         "; dense: " + describe(dense_error));
    }
    return result;
}

}  // namespace mrmf
