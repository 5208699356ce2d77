#pragma once

// Result types shared by the estimators.

#include "ecd/core.hpp"
#include "ecd/manifold.hpp"

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ecd {

/// A ground-truth point and the metric weights used to measure distances to it.
struct Reference {
    ThetaParams theta;
    MetricWeights weights;
};

struct TraceRecord {
    std::size_t iter = 0;
    std::optional<double> d2_to_ref;
    double grad_norm = 0.0;
    std::int64_t elapsed_ns = 0;
    double beta_hat = 0.0;
};

struct EstimateTrace {
    ThetaParams theta_hat;
    std::vector<TraceRecord> records;
    std::vector<std::string> warnings;
    std::size_t iterations = 0;
};

/// Thrown when an iterative estimator gives up; carries the trace up to the last iterate.
class EstimationFailure : public Error {
public:
    EstimationFailure(const std::string& what, EstimateTrace trace) : Error(what), trace_(std::move(trace)) {}
    [[nodiscard]] const EstimateTrace& trace() const { return trace_; }

private:
    EstimateTrace trace_;
};

namespace detail {

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    [[nodiscard]] std::int64_t ns() const {
        return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline std::optional<double> distance_to(const std::optional<Reference>& ref, const ThetaParams& theta) {
    if (!ref) return std::nullopt;
    return product_distance_sq(ref->theta, theta, ref->weights);
}

}  // namespace detail

}  // namespace ecd
