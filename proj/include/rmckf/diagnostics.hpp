#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rmckf/errors.hpp"
#include "rmckf/system.hpp"

// Runtime stability and convergence checks. These are advisory: they never
// halt the filter, only annotate benchmark output.

namespace rmckf {

struct GrammianReport {
    Eigen::MatrixXd controllability;  // sum over the window of Phi^T Q Phi
    Eigen::MatrixXd observability;    // sum over the window of Phi^T H^T R^-1 H Phi
    int window = 0;
    double controllability_min_eig = 0.0;
    double controllability_max_eig = 0.0;
    double observability_min_eig = 0.0;
    double observability_max_eig = 0.0;
};

namespace detail {

inline double spectral_radius(const Eigen::MatrixXd& M) {
    if (M.size() == 0) return 0.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace detail

// Windowed controllability and observability Grammians of the perturbed
// system, with transition products formed as powers of (F + dF). Uniform
// bounds on their eigenvalues certify complete controllability/observability.
inline GrammianReport grammians(const UncertainLinearModel& model,
                                const Eigen::MatrixXd& R_equiv,
                                const Eigen::MatrixXd& Q_equiv, long k, int window) {
    if (window < 1) throw std::invalid_argument("grammians: window must be >= 1");
    if (k < window) throw std::invalid_argument("grammians: need k >= window");
    const int n = model.state_dim();
    const Eigen::MatrixXd A = model.F() + model.deltaF();
    const Eigen::MatrixXd HtRinvH =
        model.H().transpose() * R_equiv.llt().solve(model.H());

    GrammianReport rep;
    rep.window = window;
    rep.controllability = Eigen::MatrixXd::Zero(n, n);
    rep.observability = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(n, n);
    for (int j = 0; j <= window; ++j) {
        rep.observability += phi.transpose() * HtRinvH * phi;
        if (j < window) rep.controllability += phi.transpose() * Q_equiv * phi;
        phi = A * phi;
    }
    rep.controllability = 0.5 * (rep.controllability + rep.controllability.transpose());
    rep.observability = 0.5 * (rep.observability + rep.observability.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esc(rep.controllability,
                                                       Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eso(rep.observability,
                                                       Eigen::EigenvaluesOnly);
    rep.controllability_min_eig = esc.eigenvalues().minCoeff();
    rep.controllability_max_eig = esc.eigenvalues().maxCoeff();
    rep.observability_min_eig = eso.eigenvalues().minCoeff();
    rep.observability_max_eig = eso.eigenvalues().maxCoeff();
    return rep;
}

struct StabilityReport {
    bool stable = false;
    double spectral_radius = 0.0;
};

// Perturbation condition on the observability Grammian: the filter is stable
// while the spectral radius of O^-1 dO stays below 1. O is built from the
// nominal transitions F^j; dO uses the first-order perturbation of (F+dF)^j,
//   dPhi_j = sum_{s<j} F^s dF F^{j-1-s},
// so the radius scales linearly with the size of dF.
inline StabilityReport stability_condition(const UncertainLinearModel& model,
                                           const Eigen::MatrixXd& R_equiv, long k,
                                           int window) {
    if (window < 1) throw std::invalid_argument("stability_condition: window must be >= 1");
    if (k < window) throw std::invalid_argument("stability_condition: need k >= window");
    const int n = model.state_dim();
    const Eigen::MatrixXd& F = model.F();
    const Eigen::MatrixXd& dF = model.deltaF();
    const Eigen::MatrixXd HtRinvH =
        model.H().transpose() * R_equiv.llt().solve(model.H());

    Eigen::MatrixXd obs = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd d_obs = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd d_phi = Eigen::MatrixXd::Zero(n, n);
    for (int j = 0; j <= window; ++j) {
        obs += phi.transpose() * HtRinvH * phi;
        d_obs += phi.transpose() * HtRinvH * d_phi;
        // dPhi_{j+1} = F dPhi_j + dF Phi_j
        d_phi = F * d_phi + dF * phi;
        phi = F * phi;
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(obs);
    if (!lu.isInvertible())
        throw ObservabilityDegenerate("stability_condition: observability Grammian singular");
    StabilityReport rep;
    rep.spectral_radius = detail::spectral_radius(lu.solve(d_obs));
    rep.stable = rep.spectral_radius < 1.0;
    return rep;
}

// Per-step check that (P^-1 - 2 mu1 I) stays positive definite, i.e.
// 1/lambda_max(P) > 2 mu1.
inline std::vector<bool> risk_positivity_audit(const std::vector<Eigen::MatrixXd>& P_trace,
                                               double mu1) {
    std::vector<bool> ok;
    ok.reserve(P_trace.size());
    for (const auto& P : P_trace) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P, Eigen::EigenvaluesOnly);
        const double lam_max = es.eigenvalues().maxCoeff();
        ok.push_back(lam_max > 0.0 && 1.0 / lam_max - 2.0 * mu1 > 0.0);
    }
    return ok;
}

struct ContractionReport {
    double phi = 0.0;   // bound on ||f||_1 of the fixed-point map
    double psi = 0.0;   // bound on ||df/dX||_1
    double beta = 0.0;
    double alpha = 0.0;  // attained psi value
    bool contraction_ok = false;
};

// Scalar convergence bounds for the fixed-point iteration, evaluated on one
// augmented instance (D, W). Row i contributes weight G_sigma(beta ||w_i||_1
// + |d_i|) to the Gram matrix; phi and psi divide by its minimum eigenvalue.
// psi decays like 1/sigma^2 for large sigma and blows up as sigma -> 0+.
inline ContractionReport contraction_bounds(const Eigen::VectorXd& D,
                                            const Eigen::MatrixXd& W, double beta,
                                            double mu2, double sigma) {
    if (!(beta > 0.0)) throw std::invalid_argument("contraction_bounds: beta must be > 0");
    if (!(sigma > 0.0)) throw std::invalid_argument("contraction_bounds: sigma must be > 0");
    if (D.size() != W.rows())
        throw std::invalid_argument("contraction_bounds: D/W row mismatch");
    const auto L = W.rows();
    const auto n = W.cols();
    const double sqrtL = std::sqrt(static_cast<double>(L));

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
    double phi_num = 0.0;
    double psi_num = 0.0;
    for (Eigen::Index i = 0; i < L; ++i) {
        const Eigen::VectorXd w = W.row(i).transpose();
        const double w1 = w.lpNorm<1>();
        const double d = std::abs(D(i));
        const double c = beta * w1 + d;
        const double g = std::exp(-c * c / (2.0 * sigma * sigma));
        gram += g * (w * w.transpose());
        phi_num += d * w1;
        // ||w w^T||_1 = max abs column sum of the outer product
        const double outer1 = (w * w.transpose()).cwiseAbs().colwise().sum().maxCoeff();
        psi_num += c * w1 * (beta * outer1 + d * w1);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (gram + gram.transpose()),
                                                      Eigen::EigenvaluesOnly);
    const double lam_min = es.eigenvalues().minCoeff();
    if (lam_min <= 0.0)
        throw GramSingular("contraction_bounds: weighted Gram matrix not positive definite");

    ContractionReport rep;
    rep.beta = beta;
    rep.phi = sqrtL * phi_num / lam_min;
    rep.psi = sqrtL * mu2 * psi_num / (sigma * sigma * lam_min);
    rep.alpha = rep.psi;
    rep.contraction_ok = rep.phi <= beta && rep.psi < 1.0;
    return rep;
}

}  // namespace rmckf
