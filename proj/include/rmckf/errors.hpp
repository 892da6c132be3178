#pragma once

#include <stdexcept>
#include <string>

namespace rmckf {

// Base for all recoverable filter/benchmark failures. step() stamps the
// time index of the failing update onto in-flight errors.
class FilterError : public std::runtime_error {
public:
    explicit FilterError(const std::string& msg) : std::runtime_error(msg) {}

    void set_time_index(long k) {
        if (time_index_ >= 0) return;
        time_index_ = k;
        annotated_ = "step " + std::to_string(k) + ": " + std::runtime_error::what();
    }
    long time_index() const { return time_index_; }

    const char* what() const noexcept override {
        return annotated_.empty() ? std::runtime_error::what() : annotated_.c_str();
    }

private:
    long time_index_ = -1;
    std::string annotated_;
};

// (P^-1 - 2*mu1*I) lost positive definiteness; mu1 must be reduced.
struct RiskTooLarge : FilterError {
    using FilterError::FilterError;
};

// Cholesky factorization of a covariance failed (matrix not numerically PD).
struct FactorizationFailed : FilterError {
    using FilterError::FilterError;
};

// A diagonal entry of Pi underflowed to zero; sigma too small or error too large.
struct PiSingular : FilterError {
    using FilterError::FilterError;
};

// Innovation covariance H*Pbar*H^T + Rbar is numerically singular.
struct InnovationSingular : FilterError {
    using FilterError::FilterError;
};

// Every candidate bandwidth in the grid failed the fixed-point iteration.
struct AllCandidatesFailed : FilterError {
    using FilterError::FilterError;
};

// Baseline bandwidth rule produced sigma = 0.
struct ZeroInnovation : FilterError {
    using FilterError::FilterError;
};

// Observability Grammian is singular; stability condition undefined.
struct ObservabilityDegenerate : FilterError {
    using FilterError::FilterError;
};

// Weighted Gram matrix in the contraction bounds has no positive minimum eigenvalue.
struct GramSingular : FilterError {
    using FilterError::FilterError;
};

}  // namespace rmckf
