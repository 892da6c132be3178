#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rmckf/errors.hpp"
#include "rmckf/noise.hpp"

namespace rmckf {

// Candidate kernel bandwidths for the per-step search, plus the constant
// selection-cost bandwidth sigma_c.
struct BandwidthGrid {
    std::vector<double> values;  // strictly increasing, all > 0
    double sigma_c = 1.0;

    BandwidthGrid(std::vector<double> v, double sc) : values(std::move(v)), sigma_c(sc) {
        if (values.empty()) throw std::invalid_argument("BandwidthGrid: empty grid");
        if (!(sigma_c > 0.0)) throw std::invalid_argument("BandwidthGrid: sigma_c must be > 0");
        double prev = 0.0;
        for (double s : values) {
            if (!(s > prev))
                throw std::invalid_argument(
                    "BandwidthGrid: values must be strictly increasing and positive");
            prev = s;
        }
    }

    static BandwidthGrid logspace(double lo, double hi, int count, double sigma_c = 1.0) {
        if (!(lo > 0.0) || !(hi > lo) || count < 2)
            throw std::invalid_argument("BandwidthGrid::logspace: need 0 < lo < hi, count >= 2");
        std::vector<double> v(count);
        const double step = std::log(hi / lo) / (count - 1);
        for (int i = 0; i < count; ++i) v[i] = lo * std::exp(step * i);
        v.back() = hi;
        return BandwidthGrid(std::move(v), sigma_c);
    }
};

// Correntropy cost for bandwidth selection:
//   J_KB(e) = log( (1/L) * sum_i exp(-e_i^2 / (2 sigma_c^2)) ),
// always in (-inf, 0]; zero iff every error is zero.
inline double jkb(const Eigen::VectorXd& errors, double sigma_c) {
    if (errors.size() == 0) throw std::invalid_argument("jkb: empty error vector");
    return std::log(sample_correntropy(errors, sigma_c));
}

enum class BaselineRule { euclidean, mahalanobis, weighted_innovation };

// Heuristic one-shot bandwidth rules from earlier selection schemes, kept as
// baselines: ||nu||, ||nu^T R^-1 nu||, and (||nu||_{R^-1} + H P H^T)^-1 with
// nu = Y - H * prior_mean. Matrix measurement case uses the induced norm
// (largest singular value) of the 1x1-or-larger products.
inline double baseline_bandwidth(BaselineRule rule, const Eigen::VectorXd& Y,
                                 const Eigen::MatrixXd& H, const Eigen::VectorXd& prior_mean,
                                 const Eigen::MatrixXd& prior_cov, const Eigen::MatrixXd& R) {
    const Eigen::VectorXd nu = Y - H * prior_mean;
    double sigma = 0.0;
    switch (rule) {
        case BaselineRule::euclidean:
            sigma = nu.norm();
            break;
        case BaselineRule::mahalanobis: {
            const Eigen::VectorXd Rinv_nu = R.llt().solve(nu);
            sigma = std::abs(nu.dot(Rinv_nu));
            break;
        }
        case BaselineRule::weighted_innovation: {
            const Eigen::VectorXd Rinv_nu = R.llt().solve(nu);
            const double weighted = std::sqrt(std::abs(nu.dot(Rinv_nu)));
            const Eigen::MatrixXd HPH = H * prior_cov * H.transpose();
            const double denom = weighted + HPH.operatorNorm();
            sigma = denom > 0.0 ? 1.0 / denom : 0.0;
            break;
        }
    }
    if (sigma == 0.0)
        throw ZeroInnovation("baseline_bandwidth: rule produced sigma = 0");
    return sigma;
}

}  // namespace rmckf
