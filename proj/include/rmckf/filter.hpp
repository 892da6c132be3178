#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "rmckf/bandwidth.hpp"
#include "rmckf/errors.hpp"

// Robust maximum-correntropy Kalman recursion.
//
// Prediction:  Xp = F * X,  Pp = F (P^-1 - 2 mu1 I)^-1 F^T + Q
// Update:      X  = Xp + K (Y - H Xp)
//              K  = Pbar H^T (H Pbar H^T + Rbar)^-1
//              Pbar = Bp Pi_p^-1 Bp^T,  Rbar = Br Pi_r^-1 Br^T
//              Pi entries exp(rho_i - mu2 e_i^2 / (2 sigma^2)), with
//              e_p = -Bp^-1 (X - Xp), e_r = Br^-1 (Y - H X)
//              solved for X by fixed-point iteration.
// Posterior covariance uses the Joseph form with nominal Pp and R.
//
// Parameter limits recover the classical family: mu1 = 0, sigma = inf is the
// Kalman filter; mu1 > 0, sigma = inf the risk-sensitive KF; mu1 = 0, finite
// sigma the maximum-correntropy KF.

namespace rmckf {

struct InfiniteBandwidth {};
struct FixedBandwidth {
    double sigma;
};
struct SelectedBandwidth {
    BandwidthGrid grid;
};
using BandwidthPolicy = std::variant<InfiniteBandwidth, FixedBandwidth, SelectedBandwidth>;

struct FilterConfig {
    double mu1 = 0.0;  // past-error risk weight; inflates the predicted covariance
    double mu2 = 1.0;  // present-error kernel weight
    BandwidthPolicy bandwidth = InfiniteBandwidth{};
    double epsilon = 1e-6;  // FPI relative stopping threshold
    int t_max = 100;        // FPI iteration cap
    bool include_past_errors = false;  // accumulate rho terms into Pi

    void validate() const {
        if (mu1 < 0.0) throw std::invalid_argument("FilterConfig: mu1 must be >= 0");
        if (!(mu2 > 0.0)) throw std::invalid_argument("FilterConfig: mu2 must be > 0");
        if (!(epsilon > 0.0)) throw std::invalid_argument("FilterConfig: epsilon must be > 0");
        if (t_max < 1) throw std::invalid_argument("FilterConfig: t_max must be >= 1");
        if (const auto* fixed = std::get_if<FixedBandwidth>(&bandwidth))
            if (!(fixed->sigma > 0.0))
                throw std::invalid_argument("FilterConfig: fixed sigma must be > 0");
    }
};

// Posterior mean/covariance plus the accumulated weighted past errors.
struct FilterState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    Eigen::VectorXd rho_p;  // <= 0 elementwise
    Eigen::VectorXd rho_r;
    long k = 0;

    static FilterState initial(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                               int meas_dim) {
        FilterState s;
        s.mean = mean;
        s.cov = cov;
        s.rho_p = Eigen::VectorXd::Zero(mean.size());
        s.rho_r = Eigen::VectorXd::Zero(meas_dim);
        s.k = 0;
        return s;
    }
};

// Block factors of the augmented model: B_p B_p^T = P_{k|k-1},
// B_r B_r^T = R, D = B^-1 [Xp; Y], W = B^-1 [I; H].
struct AugmentedFactors {
    Eigen::MatrixXd B_p;
    Eigen::MatrixXd B_r;
    Eigen::VectorXd D;
    Eigen::MatrixXd W;
};

namespace detail {

inline Eigen::MatrixXd chol_lower(const Eigen::MatrixXd& M, const char* label) {
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success)
        throw FactorizationFailed(std::string(label) + ": matrix not positive definite");
    return llt.matrixL();
}

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& M) {
    return 0.5 * (M + M.transpose());
}

}  // namespace detail

// Prior mean F*mean and prior covariance F (P^-1 - 2 mu1 I)^-1 F^T + Q.
// Throws RiskTooLarge when (P^-1 - 2 mu1 I) is not positive definite.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> predict(const FilterState& state,
                                                           const Eigen::MatrixXd& F,
                                                           const Eigen::MatrixXd& Q,
                                                           double mu1) {
    const Eigen::VectorXd prior_mean = F * state.mean;
    Eigen::MatrixXd inflated;
    if (mu1 == 0.0) {
        inflated = state.cov;
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(state.cov);
        if (es.info() != Eigen::Success)
            throw FactorizationFailed("predict: eigendecomposition of P failed");
        const Eigen::VectorXd lam = es.eigenvalues();
        if (lam.minCoeff() <= 0.0)
            throw FactorizationFailed("predict: P not positive definite");
        // min eigenvalue of (P^-1 - 2 mu1 I) is 1/lam_max - 2 mu1
        if (1.0 / lam.maxCoeff() - 2.0 * mu1 <= 0.0)
            throw RiskTooLarge("predict: (P^-1 - 2 mu1 I) not positive definite");
        Eigen::VectorXd inflated_lam(lam.size());
        for (Eigen::Index i = 0; i < lam.size(); ++i)
            inflated_lam(i) = 1.0 / (1.0 / lam(i) - 2.0 * mu1);
        inflated = es.eigenvectors() * inflated_lam.asDiagonal() * es.eigenvectors().transpose();
    }
    Eigen::MatrixXd prior_cov =
        detail::symmetrized(F * inflated * F.transpose() + Q);
    return {prior_mean, prior_cov};
}

// Lower Cholesky factors of P_{k|k-1} and R plus the whitened data D and
// regressor W, computed blockwise.
inline AugmentedFactors build_augmented(const Eigen::VectorXd& prior_mean,
                                        const Eigen::MatrixXd& prior_cov,
                                        const Eigen::MatrixXd& R, const Eigen::MatrixXd& H,
                                        const Eigen::VectorXd& Y) {
    const auto n = prior_mean.size();
    const auto m = Y.size();
    AugmentedFactors f;
    f.B_p = detail::chol_lower(prior_cov, "build_augmented: prior covariance");
    f.B_r = detail::chol_lower(R, "build_augmented: measurement covariance");
    f.D.resize(n + m);
    f.D.head(n) = f.B_p.triangularView<Eigen::Lower>().solve(prior_mean);
    f.D.tail(m) = f.B_r.triangularView<Eigen::Lower>().solve(Y);
    f.W.resize(n + m, n);
    f.W.topRows(n) =
        f.B_p.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
    f.W.bottomRows(m) = f.B_r.triangularView<Eigen::Lower>().solve(H);
    return f;
}

// Whitened process and measurement errors at a candidate posterior mean:
// e_p = -Bp^-1 (candidate - prior_mean), e_r = Br^-1 (Y - H candidate).
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> weighted_errors(
    const Eigen::VectorXd& candidate, const Eigen::VectorXd& prior_mean,
    const Eigen::VectorXd& Y, const Eigen::MatrixXd& H, const Eigen::MatrixXd& B_p,
    const Eigen::MatrixXd& B_r) {
    Eigen::VectorXd e_p =
        -(B_p.triangularView<Eigen::Lower>().solve(candidate - prior_mean));
    Eigen::VectorXd e_r = B_r.triangularView<Eigen::Lower>().solve(Y - H * candidate);
    return {std::move(e_p), std::move(e_r)};
}

// Diagonal of Pi: entries exp(rho_i - mu2 e_i^2 / (2 sigma^2)). sigma may be
// infinite, in which case the present-error term vanishes. Entries that
// underflow below 1e-300 are rejected; the gain would be meaningless.
inline Eigen::VectorXd compute_pi(const Eigen::VectorXd& e, const Eigen::VectorXd& rho,
                                  double mu2, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("compute_pi: sigma must be > 0");
    if (e.size() != rho.size()) throw std::invalid_argument("compute_pi: size mismatch");
    Eigen::VectorXd pi(e.size());
    const bool infinite = std::isinf(sigma);
    for (Eigen::Index i = 0; i < e.size(); ++i) {
        const double present = infinite ? 0.0 : mu2 * e(i) * e(i) / (2.0 * sigma * sigma);
        pi(i) = std::exp(rho(i) - present);
        if (pi(i) < 1e-300)
            throw PiSingular("compute_pi: Pi entry underflowed");
    }
    return pi;
}

// K = Pbar H^T (H Pbar H^T + Rbar)^-1 with Pbar = Bp Pi_p^-1 Bp^T and
// Rbar = Br Pi_r^-1 Br^T. The innovation solve uses a Cholesky factorization.
inline Eigen::MatrixXd gain(const Eigen::MatrixXd& B_p, const Eigen::MatrixXd& B_r,
                            const Eigen::VectorXd& pi_p, const Eigen::VectorXd& pi_r,
                            const Eigen::MatrixXd& H) {
    const Eigen::MatrixXd Pbar = detail::symmetrized(
        B_p * pi_p.cwiseInverse().asDiagonal() * B_p.transpose());
    const Eigen::MatrixXd Rbar = detail::symmetrized(
        B_r * pi_r.cwiseInverse().asDiagonal() * B_r.transpose());
    const Eigen::MatrixXd S = detail::symmetrized(H * Pbar * H.transpose() + Rbar);
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success)
        throw InnovationSingular("gain: innovation covariance not positive definite");
    // K^T = S^-1 H Pbar since S and Pbar are symmetric
    return llt.solve(H * Pbar).transpose();
}

// Joseph-form posterior covariance with the nominal prior covariance and R:
// (I - K H) P (I - K H)^T + K R K^T, symmetrized.
inline Eigen::MatrixXd posterior_covariance(const Eigen::MatrixXd& prior_cov,
                                            const Eigen::MatrixXd& K,
                                            const Eigen::MatrixXd& H,
                                            const Eigen::MatrixXd& R) {
    const Eigen::MatrixXd IKH =
        Eigen::MatrixXd::Identity(prior_cov.rows(), prior_cov.cols()) - K * H;
    return detail::symmetrized(IKH * prior_cov * IKH.transpose() + K * R * K.transpose());
}

struct FpiResult {
    Eigen::VectorXd mean;
    Eigen::MatrixXd K;
    Eigen::VectorXd e_p;  // whitened errors evaluated at the returned mean
    Eigen::VectorXd e_r;
    int iterations = 0;
    bool converged = false;
};

// Fixed-point iteration for the posterior mean at a resolved bandwidth.
// Starts from the prior mean; each pass recomputes the whitened errors, Pi,
// and gain, then re-evaluates X = Xp + K (Y - H Xp). Stops when the relative
// step falls below epsilon (absolute when the iterate norm is below 1e-12).
// A non-converged result is returned flagged, not thrown.
inline FpiResult fpi_update(const Eigen::VectorXd& prior_mean,
                            const Eigen::MatrixXd& prior_cov, const Eigen::VectorXd& Y,
                            const Eigen::MatrixXd& H, const Eigen::MatrixXd& R,
                            const FilterConfig& config, double sigma,
                            const Eigen::VectorXd& rho_p, const Eigen::VectorXd& rho_r) {
    const AugmentedFactors f = build_augmented(prior_mean, prior_cov, R, H, Y);
    const Eigen::VectorXd innovation = Y - H * prior_mean;

    FpiResult out;
    Eigen::VectorXd x = prior_mean;
    for (int t = 1; t <= config.t_max; ++t) {
        const auto [e_p, e_r] = weighted_errors(x, prior_mean, Y, H, f.B_p, f.B_r);
        const Eigen::VectorXd pi_p = compute_pi(e_p, rho_p, config.mu2, sigma);
        const Eigen::VectorXd pi_r = compute_pi(e_r, rho_r, config.mu2, sigma);
        out.K = gain(f.B_p, f.B_r, pi_p, pi_r, H);
        const Eigen::VectorXd x_next = prior_mean + out.K * innovation;
        const double delta = (x_next - x).norm();
        const double base = x.norm();
        const bool done =
            base < 1e-12 ? delta <= config.epsilon : delta / base <= config.epsilon;
        x = x_next;
        out.iterations = t;
        if (done) {
            out.converged = true;
            break;
        }
    }
    out.mean = x;
    auto [e_p, e_r] = weighted_errors(x, prior_mean, Y, H, f.B_p, f.B_r);
    out.e_p = std::move(e_p);
    out.e_r = std::move(e_r);
    return out;
}

struct CandidateDiagnostic {
    double sigma = 0.0;
    double jkb = 0.0;
    bool ok = false;
    int iterations = 0;
};

struct SelectionResult {
    double sigma = 0.0;
    FpiResult update;
    std::vector<CandidateDiagnostic> candidates;
};

// Per-step bandwidth search: run the fixed-point update for every candidate
// sigma, score the converged error vector with jkb, and keep the maximizer.
// Ties resolve to the largest sigma. Candidates whose FPI fails to converge
// or throws are skipped but recorded.
inline SelectionResult select_bandwidth(const Eigen::VectorXd& prior_mean,
                                        const Eigen::MatrixXd& prior_cov,
                                        const Eigen::VectorXd& Y, const Eigen::MatrixXd& H,
                                        const Eigen::MatrixXd& R, const FilterConfig& config,
                                        const BandwidthGrid& grid,
                                        const Eigen::VectorXd& rho_p,
                                        const Eigen::VectorXd& rho_r) {
    SelectionResult sel;
    sel.candidates.reserve(grid.values.size());
    bool have_best = false;
    double best_score = 0.0;
    for (double sigma : grid.values) {
        CandidateDiagnostic diag;
        diag.sigma = sigma;
        try {
            FpiResult r =
                fpi_update(prior_mean, prior_cov, Y, H, R, config, sigma, rho_p, rho_r);
            diag.iterations = r.iterations;
            if (!r.converged) {
                sel.candidates.push_back(diag);
                continue;
            }
            Eigen::VectorXd e(r.e_p.size() + r.e_r.size());
            e << r.e_p, r.e_r;
            diag.jkb = jkb(e, grid.sigma_c);
            diag.ok = true;
            sel.candidates.push_back(diag);
            // larger sigma wins ties; grid is ascending so >= keeps the last
            if (!have_best || diag.jkb > best_score ||
                (diag.jkb == best_score && sigma > sel.sigma)) {
                have_best = true;
                best_score = diag.jkb;
                sel.sigma = sigma;
                sel.update = std::move(r);
            }
        } catch (const PiSingular&) {
            sel.candidates.push_back(diag);
        } catch (const InnovationSingular&) {
            sel.candidates.push_back(diag);
        }
    }
    if (!have_best)
        throw AllCandidatesFailed("select_bandwidth: every candidate sigma failed");
    return sel;
}

struct StepResult {
    FilterState state;
    double sigma = std::numeric_limits<double>::infinity();  // bandwidth used
    int iterations = 0;
    bool converged = false;
    std::vector<CandidateDiagnostic> candidates;  // populated for selected bandwidth
};

// One full filter update: predict, factorize, (optionally select bandwidth),
// fixed-point update, Joseph covariance, and rho accumulation when enabled.
// Sub-operation errors are rethrown with the failing time index attached.
inline StepResult step(const FilterState& state, const Eigen::VectorXd& Y,
                       const Eigen::MatrixXd& F, const Eigen::MatrixXd& H,
                       const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                       const FilterConfig& config) {
    try {
        const auto [prior_mean, prior_cov] = predict(state, F, Q, config.mu1);

        StepResult out;
        FpiResult update;
        if (const auto* fixed = std::get_if<FixedBandwidth>(&config.bandwidth)) {
            out.sigma = fixed->sigma;
            update = fpi_update(prior_mean, prior_cov, Y, H, R, config, out.sigma,
                                state.rho_p, state.rho_r);
        } else if (const auto* selected = std::get_if<SelectedBandwidth>(&config.bandwidth)) {
            SelectionResult sel = select_bandwidth(prior_mean, prior_cov, Y, H, R, config,
                                                   selected->grid, state.rho_p, state.rho_r);
            out.sigma = sel.sigma;
            update = std::move(sel.update);
            out.candidates = std::move(sel.candidates);
        } else {
            out.sigma = std::numeric_limits<double>::infinity();
            update = fpi_update(prior_mean, prior_cov, Y, H, R, config, out.sigma,
                                state.rho_p, state.rho_r);
        }

        out.iterations = update.iterations;
        out.converged = update.converged;
        out.state.mean = update.mean;
        out.state.cov = posterior_covariance(prior_cov, update.K, H, R);
        out.state.rho_p = state.rho_p;
        out.state.rho_r = state.rho_r;
        out.state.k = state.k + 1;
        if (config.include_past_errors && !std::isinf(out.sigma)) {
            const double scale = config.mu1 / (2.0 * out.sigma * out.sigma);
            out.state.rho_p -= scale * update.e_p.cwiseAbs2();
            out.state.rho_r -= scale * update.e_r.cwiseAbs2();
        }
        return out;
    } catch (FilterError& err) {
        err.set_time_index(state.k + 1);
        throw;
    }
}

}  // namespace rmckf
