#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "rmckf/noise.hpp"

namespace rmckf {

// Uncertain linear time-invariant system:
//   X_{k+1} = (F + dF) X_k + G q_k,   Y_k = H X_k + r_k,
// with zero-mean Gaussian-mixture q_k, r_k. The truth evolves with dF;
// filters assume dF = 0 and use the mixtures' equivalent covariances.
class UncertainLinearModel {
public:
    UncertainLinearModel(Eigen::MatrixXd F, Eigen::MatrixXd deltaF, Eigen::MatrixXd G,
                         Eigen::MatrixXd H, GaussianMixture q_mix, GaussianMixture r_mix)
        : F_(std::move(F)),
          deltaF_(std::move(deltaF)),
          G_(std::move(G)),
          H_(std::move(H)),
          q_mix_(std::move(q_mix)),
          r_mix_(std::move(r_mix)) {
        const auto n = F_.rows();
        if (F_.cols() != n) throw std::invalid_argument("model: F must be square");
        if (deltaF_.rows() != n || deltaF_.cols() != n)
            throw std::invalid_argument("model: deltaF must be n x n");
        if (G_.rows() != n) throw std::invalid_argument("model: G must have n rows");
        if (H_.cols() != n) throw std::invalid_argument("model: H must have n columns");
        if (q_mix_.dimension() != G_.cols())
            throw std::invalid_argument("model: q_mix dimension must match G columns");
        if (r_mix_.dimension() != H_.rows())
            throw std::invalid_argument("model: r_mix dimension must match H rows");
        Eigen::EigenSolver<Eigen::MatrixXd> es(F_ + deltaF_, false);
        if (es.eigenvalues().cwiseAbs().maxCoeff() > 1.0 + 1e-9)
            throw std::invalid_argument("model: perturbed system is unstable");
    }

    const Eigen::MatrixXd& F() const { return F_; }
    const Eigen::MatrixXd& deltaF() const { return deltaF_; }
    const Eigen::MatrixXd& G() const { return G_; }
    const Eigen::MatrixXd& H() const { return H_; }
    const GaussianMixture& q_mix() const { return q_mix_; }
    const GaussianMixture& r_mix() const { return r_mix_; }

    int state_dim() const { return static_cast<int>(F_.rows()); }
    int meas_dim() const { return static_cast<int>(H_.rows()); }

    // Process noise covariance as seen by a filter: G * E[q q^T] * G^T.
    Eigen::MatrixXd process_noise_covariance() const {
        return G_ * q_mix_.equivalent_covariance() * G_.transpose();
    }
    Eigen::MatrixXd measurement_noise_covariance() const {
        return r_mix_.equivalent_covariance();
    }

private:
    Eigen::MatrixXd F_, deltaF_, G_, H_;
    GaussianMixture q_mix_, r_mix_;
};

// Ground truth X_0..X_K plus measurements Y_1..Y_K.
struct Trajectory {
    std::vector<Eigen::VectorXd> states;
    std::vector<Eigen::VectorXd> measurements;
};

// Simulate K steps of truth (with dF) and measurements. One q draw and one
// r draw per step, in that order.
inline Trajectory simulate(const UncertainLinearModel& model, const Eigen::VectorXd& x0,
                           int steps, Rng& rng) {
    if (steps < 1) throw std::invalid_argument("simulate: steps must be >= 1");
    if (x0.size() != model.state_dim())
        throw std::invalid_argument("simulate: x0 dimension mismatch");
    const Eigen::MatrixXd A = model.F() + model.deltaF();
    Trajectory traj;
    traj.states.reserve(steps + 1);
    traj.measurements.reserve(steps);
    traj.states.push_back(x0);
    Eigen::VectorXd x = x0;
    for (int k = 1; k <= steps; ++k) {
        x = A * x + model.G() * model.q_mix().sample(rng);
        traj.states.push_back(x);
        traj.measurements.push_back(model.H() * x + model.r_mix().sample(rng));
    }
    return traj;
}

// Noise-free propagation X_{k+1} = (F + dF) X_k; oracle for simulate's mean.
inline std::vector<Eigen::VectorXd> propagate_deterministic(const UncertainLinearModel& model,
                                                            const Eigen::VectorXd& x0,
                                                            int steps) {
    if (steps < 0) throw std::invalid_argument("propagate_deterministic: steps must be >= 0");
    const Eigen::MatrixXd A = model.F() + model.deltaF();
    std::vector<Eigen::VectorXd> states;
    states.reserve(steps + 1);
    states.push_back(x0);
    Eigen::VectorXd x = x0;
    for (int k = 0; k < steps; ++k) {
        x = A * x;
        states.push_back(x);
    }
    return states;
}

}  // namespace rmckf
