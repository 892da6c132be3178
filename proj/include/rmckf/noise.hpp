#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rmckf/errors.hpp"

namespace rmckf {

using Rng = std::mt19937_64;

// Zero-mean Gaussian mixture noise: sum_i a_i * N(0, Sigma_i).
// Weights must sum to 1, every component covariance must be symmetric
// positive definite, all components share one dimension. Immutable after
// construction; sampling takes a caller-owned rng.
class GaussianMixture {
public:
    struct Component {
        double weight;
        Eigen::MatrixXd covariance;
    };

    explicit GaussianMixture(std::vector<Component> components)
        : components_(std::move(components)) {
        if (components_.empty())
            throw std::invalid_argument("GaussianMixture: no components");
        dim_ = static_cast<int>(components_[0].covariance.rows());
        double total = 0.0;
        double cum = 0.0;
        for (const auto& c : components_) {
            if (c.weight < 0.0 || c.weight > 1.0)
                throw std::invalid_argument("GaussianMixture: weight outside [0,1]");
            if (c.covariance.rows() != dim_ || c.covariance.cols() != dim_)
                throw std::invalid_argument("GaussianMixture: component dimension mismatch");
            if ((c.covariance - c.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12)
                throw std::invalid_argument("GaussianMixture: covariance not symmetric");
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.covariance,
                                                              Eigen::EigenvaluesOnly);
            if (es.eigenvalues().minCoeff() <= 0.0)
                throw std::invalid_argument(
                    "GaussianMixture: covariance not positive definite");
            total += c.weight;
            cum += c.weight;
            cumulative_.push_back(cum);
            chol_.push_back(Eigen::LLT<Eigen::MatrixXd>(c.covariance).matrixL());
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("GaussianMixture: weights must sum to 1");
        cumulative_.back() = 1.0;
    }

    // Scalar convenience: list of (weight, variance) pairs.
    static GaussianMixture scalar(std::vector<std::pair<double, double>> parts) {
        std::vector<Component> comps;
        comps.reserve(parts.size());
        for (const auto& [w, v] : parts) {
            Eigen::MatrixXd cov(1, 1);
            cov(0, 0) = v;
            comps.push_back({w, cov});
        }
        return GaussianMixture(std::move(comps));
    }

    // Isotropic d-dimensional convenience: each component is variance * I.
    static GaussianMixture isotropic(int d, std::vector<std::pair<double, double>> parts) {
        std::vector<Component> comps;
        comps.reserve(parts.size());
        for (const auto& [w, v] : parts)
            comps.push_back({w, v * Eigen::MatrixXd::Identity(d, d)});
        return GaussianMixture(std::move(comps));
    }

    int dimension() const { return dim_; }
    const std::vector<Component>& components() const { return components_; }

    // Second moment of the mixture: sum_i a_i * Sigma_i (exact, zero means).
    Eigen::MatrixXd equivalent_covariance() const {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim_, dim_);
        for (const auto& c : components_) out += c.weight * c.covariance;
        return out;
    }

    // Component chosen by inverse CDF from one uniform draw, then a zero-mean
    // normal with that component's covariance.
    Eigen::VectorXd sample(Rng& rng) const {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double u = unif(rng);
        std::size_t pick = cumulative_.size() - 1;
        for (std::size_t i = 0; i < cumulative_.size(); ++i) {
            if (u <= cumulative_[i]) {
                pick = i;
                break;
            }
        }
        std::normal_distribution<double> gauss(0.0, 1.0);
        Eigen::VectorXd z(dim_);
        for (int i = 0; i < dim_; ++i) z(i) = gauss(rng);
        return chol_[pick] * z;
    }

private:
    std::vector<Component> components_;
    std::vector<Eigen::MatrixXd> chol_;
    std::vector<double> cumulative_;
    int dim_ = 0;
};

// Kernel bandwidth sigma plus the constant selection-cost bandwidth sigma_c.
struct KernelParams {
    double sigma;
    double sigma_c;

    KernelParams(double s, double sc) : sigma(s), sigma_c(sc) {
        if (!(sigma > 0.0)) throw std::invalid_argument("KernelParams: sigma must be > 0");
        if (!(sigma_c > 0.0)) throw std::invalid_argument("KernelParams: sigma_c must be > 0");
    }
};

// G_sigma(e) = exp(-e^2 / (2 sigma^2)), in (0, 1].
inline double gaussian_kernel(double e, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
    return std::exp(-(e * e) / (2.0 * sigma * sigma));
}

// Sample-mean correntropy of an error vector, (1/L) * sum_i G_sigma(e_i).
inline double sample_correntropy(const Eigen::VectorXd& errors, double sigma) {
    if (errors.size() == 0)
        throw std::invalid_argument("sample_correntropy: empty error vector");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < errors.size(); ++i)
        acc += gaussian_kernel(errors(i), sigma);
    return acc / static_cast<double>(errors.size());
}

// Draw from N(mean, L*L^T) given the lower Cholesky factor L.
inline Eigen::VectorXd sample_gaussian(Rng& rng, const Eigen::VectorXd& mean,
                                       const Eigen::MatrixXd& chol_lower) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = gauss(rng);
    return mean + chol_lower * z;
}

}  // namespace rmckf
