#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rmckf/diagnostics.hpp"
#include "rmckf/filter.hpp"
#include "rmckf/system.hpp"

// Monte Carlo benchmark harness. Every run draws a random truth initial
// state, simulates the perturbed system once, and feeds the same measurement
// sequence to every filter (common random numbers). Per-run seeds derive from
// the experiment seed, and the reduction to RMSE happens in run order, so
// reports are byte-identical regardless of thread count.

namespace rmckf {

struct NamedFilter {
    std::string name;
    FilterConfig config;
};

struct StateGroup {
    std::string name;
    std::vector<int> states;  // 0-based indices
};

// Shared knobs the named filter bank is built from.
struct FilterBankParams {
    double mu1 = 0.01;
    double mu2 = 1.0;
    double sigma = 2.0;  // fixed-bandwidth filters
    double grid_lo = 0.5;
    double grid_hi = 50.0;
    int grid_count = 25;
    double sigma_c = 1.0;
};

inline BandwidthGrid make_grid(const FilterBankParams& p) {
    return BandwidthGrid::logspace(p.grid_lo, p.grid_hi, p.grid_count, p.sigma_c);
}

// kf / rskf / mckf / rmckf-fk / mckf-sk / rmckf-sk from one parameter set.
inline std::vector<NamedFilter> make_filter_bank(const std::vector<std::string>& names,
                                                 const FilterBankParams& p) {
    std::vector<NamedFilter> bank;
    bank.reserve(names.size());
    for (const auto& name : names) {
        FilterConfig cfg;
        cfg.mu2 = p.mu2;
        if (name == "kf") {
            cfg.mu1 = 0.0;
            cfg.bandwidth = InfiniteBandwidth{};
        } else if (name == "rskf") {
            cfg.mu1 = p.mu1;
            cfg.bandwidth = InfiniteBandwidth{};
        } else if (name == "mckf") {
            cfg.mu1 = 0.0;
            cfg.bandwidth = FixedBandwidth{p.sigma};
        } else if (name == "rmckf-fk") {
            cfg.mu1 = p.mu1;
            cfg.bandwidth = FixedBandwidth{p.sigma};
        } else if (name == "mckf-sk") {
            cfg.mu1 = 0.0;
            cfg.bandwidth = SelectedBandwidth{make_grid(p)};
        } else if (name == "rmckf-sk") {
            cfg.mu1 = p.mu1;
            cfg.bandwidth = SelectedBandwidth{make_grid(p)};
        } else {
            throw std::invalid_argument("unknown filter name: " + name);
        }
        cfg.validate();
        bank.push_back({name, cfg});
    }
    return bank;
}

struct Experiment {
    std::string problem;  // builtin problem name, recorded for replay
    Eigen::MatrixXd F, G, H;
    std::function<Eigen::MatrixXd(double)> delta_to_dF;
    GaussianMixture q_mix{{{1.0, Eigen::MatrixXd::Identity(1, 1)}}};
    GaussianMixture r_mix{{{1.0, Eigen::MatrixXd::Identity(1, 1)}}};
    Eigen::VectorXd x0;
    Eigen::MatrixXd P0;
    int steps = 1;
    int runs = 1;
    std::vector<double> delta_sweep;
    std::vector<std::string> filter_names;
    FilterBankParams params;
    std::vector<NamedFilter> filters;
    std::vector<StateGroup> state_groups;
    std::uint64_t seed = 1;
    int threads = 0;  // 0 = hardware concurrency
    int diagnostics_window = 5;

    void refresh_filters() { filters = make_filter_bank(filter_names, params); }

    void validate() const {
        if (steps < 1) throw std::invalid_argument("experiment: steps must be >= 1");
        if (runs < 1) throw std::invalid_argument("experiment: runs must be >= 1");
        if (filters.empty()) throw std::invalid_argument("experiment: no filters");
        std::set<std::string> names;
        for (const auto& f : filters)
            if (!names.insert(f.name).second)
                throw std::invalid_argument("experiment: duplicate filter name " + f.name);
        if (state_groups.empty()) throw std::invalid_argument("experiment: no state groups");
        for (const auto& g : state_groups)
            for (int s : g.states)
                if (s < 0 || s >= x0.size())
                    throw std::invalid_argument("experiment: state index out of range");
    }
};

// Results for one (delta, filter) pair.
struct FilterCell {
    std::string filter;
    double delta = 0.0;
    Eigen::MatrixXd rmse;                      // steps x n
    std::vector<double> avg_rmse_state;        // per state
    std::vector<double> avg_rmse_group;        // per state group
    std::vector<std::vector<double>> run_score_group;  // [group][valid runs kept in order]
    std::vector<double> sigmas;                // runs*steps, NaN where unused/invalid
    bool selected_bandwidth = false;
    long halving_events = 0;
    long fpi_nonconverged = 0;
    long jkb_violations = 0;
    double min_cov_eig = std::numeric_limits<double>::infinity();
    double max_cov_asym = 0.0;
};

struct DeltaBlock {
    double delta = 0.0;
    std::vector<FilterCell> cells;
    long invalid_runs = 0;
    GrammianReport grammian;
    StabilityReport stability;
};

struct BenchReport {
    std::string problem;
    int steps = 0;
    int runs = 0;
    std::uint64_t seed = 0;
    std::vector<double> deltas;
    std::vector<std::string> filter_names;
    FilterBankParams params;
    std::vector<StateGroup> state_groups;
    std::vector<DeltaBlock> blocks;

    const FilterCell& cell(double delta, const std::string& filter) const {
        for (const auto& b : blocks) {
            if (b.delta != delta) continue;
            for (const auto& c : b.cells)
                if (c.filter == filter) return c;
        }
        throw std::out_of_range("BenchReport: no cell for requested delta/filter");
    }

    double avg_rmse(double delta, const std::string& filter,
                    const std::string& group) const {
        const FilterCell& c = cell(delta, filter);
        for (std::size_t g = 0; g < state_groups.size(); ++g)
            if (state_groups[g].name == group) return c.avg_rmse_group[g];
        throw std::out_of_range("BenchReport: unknown state group " + group);
    }
};

namespace detail {

struct RunScratch {
    // per filter: steps x n squared errors; NaN marks invalid
    std::vector<Eigen::MatrixXd> errsq;
    std::vector<std::vector<double>> sigmas;  // per filter, steps entries
    std::vector<long> halvings;
    std::vector<long> nonconverged;
    std::vector<long> jkb_violations;
    std::vector<double> min_cov_eig;
    std::vector<double> max_cov_asym;
    bool ok = true;
};

inline void audit_selection(const StepResult& res, long& violations) {
    bool any = false;
    double best_j = 0.0;
    double best_sigma = 0.0;
    for (const auto& c : res.candidates) {
        if (!c.ok) continue;
        if (!any || c.jkb > best_j || (c.jkb == best_j && c.sigma > best_sigma)) {
            any = true;
            best_j = c.jkb;
            best_sigma = c.sigma;
        }
    }
    if (!any || res.sigma != best_sigma) ++violations;
}

}  // namespace detail

// Run the full sweep. Failures inside a run invalidate that run for every
// filter of that delta block (comparisons stay paired) and are counted.
inline BenchReport run_experiment(const Experiment& exp) {
    exp.validate();
    const int n = static_cast<int>(exp.x0.size());
    const int K = exp.steps;
    const int M = exp.runs;
    const int nf = static_cast<int>(exp.filters.size());
    const Eigen::MatrixXd R = exp.r_mix.equivalent_covariance();
    const Eigen::MatrixXd Qf = exp.G * exp.q_mix.equivalent_covariance() * exp.G.transpose();
    const Eigen::MatrixXd P0_chol = Eigen::LLT<Eigen::MatrixXd>(exp.P0).matrixL();

    BenchReport report;
    report.problem = exp.problem;
    report.steps = K;
    report.runs = M;
    report.seed = exp.seed;
    report.deltas = exp.delta_sweep;
    report.filter_names = exp.filter_names;
    report.params = exp.params;
    report.state_groups = exp.state_groups;

    for (double delta : exp.delta_sweep) {
        const UncertainLinearModel model(exp.F, exp.delta_to_dF(delta), exp.G, exp.H,
                                         exp.q_mix, exp.r_mix);
        std::vector<detail::RunScratch> runs(M);

        auto run_one = [&](int m) {
            detail::RunScratch& sc = runs[m];
            sc.errsq.assign(nf, Eigen::MatrixXd::Constant(
                                    K, n, std::numeric_limits<double>::quiet_NaN()));
            sc.sigmas.assign(nf, std::vector<double>(
                                     K, std::numeric_limits<double>::quiet_NaN()));
            sc.halvings.assign(nf, 0);
            sc.nonconverged.assign(nf, 0);
            sc.jkb_violations.assign(nf, 0);
            sc.min_cov_eig.assign(nf, std::numeric_limits<double>::infinity());
            sc.max_cov_asym.assign(nf, 0.0);

            Rng rng(exp.seed ^ static_cast<std::uint64_t>(m));
            // truth starts at the nominal x0; each run randomizes the initial
            // estimate as N(x0, P0)
            const Eigen::VectorXd x_est0 = sample_gaussian(rng, exp.x0, P0_chol);
            const Trajectory traj = simulate(model, exp.x0, K, rng);

            for (int fi = 0; fi < nf && sc.ok; ++fi) {
                const NamedFilter& nfilt = exp.filters[fi];
                const bool sk = std::holds_alternative<SelectedBandwidth>(
                    nfilt.config.bandwidth);
                FilterState st = FilterState::initial(x_est0, exp.P0, model.meas_dim());
                for (int k = 1; k <= K; ++k) {
                    StepResult res;
                    FilterConfig cfg = nfilt.config;
                    bool stepped = false;
                    try {
                        for (;;) {
                            try {
                                res = step(st, traj.measurements[k - 1], exp.F, exp.H, Qf,
                                           R, cfg);
                                stepped = true;
                                break;
                            } catch (const RiskTooLarge&) {
                                // reduce mu1 for this step only and retry
                                cfg.mu1 *= 0.5;
                                ++sc.halvings[fi];
                                if (cfg.mu1 < 1e-300) throw;
                            }
                        }
                    } catch (const FilterError&) {
                        sc.ok = false;
                    }
                    if (!stepped) break;
                    st = res.state;

                    const Eigen::VectorXd err = traj.states[k] - st.mean;
                    sc.errsq[fi].row(k - 1) = err.cwiseAbs2().transpose();
                    if (sk) {
                        sc.sigmas[fi][k - 1] = res.sigma;
                        detail::audit_selection(res, sc.jkb_violations[fi]);
                    }
                    if (!res.converged) ++sc.nonconverged[fi];
                    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
                        st.cov, Eigen::EigenvaluesOnly);
                    sc.min_cov_eig[fi] = std::min(sc.min_cov_eig[fi],
                                                  es.eigenvalues().minCoeff());
                    sc.max_cov_asym[fi] =
                        std::max(sc.max_cov_asym[fi],
                                 (st.cov - st.cov.transpose()).cwiseAbs().maxCoeff());
                }
            }
        };

        int nthreads = exp.threads > 0
                           ? exp.threads
                           : static_cast<int>(std::thread::hardware_concurrency());
        if (nthreads < 1) nthreads = 1;
        nthreads = std::min(nthreads, M);
        std::atomic<int> next{0};
        auto worker = [&]() {
            for (int m = next.fetch_add(1); m < M; m = next.fetch_add(1)) run_one(m);
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads - 1; ++t) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();

        // deterministic reduction in run order
        DeltaBlock block;
        block.delta = delta;
        long valid = 0;
        for (int m = 0; m < M; ++m)
            if (runs[m].ok) ++valid;
        block.invalid_runs = M - valid;

        for (int fi = 0; fi < nf; ++fi) {
            FilterCell cell;
            cell.filter = exp.filters[fi].name;
            cell.delta = delta;
            cell.selected_bandwidth =
                std::holds_alternative<SelectedBandwidth>(exp.filters[fi].config.bandwidth);
            cell.rmse = Eigen::MatrixXd::Zero(K, n);
            if (valid > 0) {
                Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(K, n);
                for (int m = 0; m < M; ++m) {
                    if (!runs[m].ok) continue;
                    acc += runs[m].errsq[fi];
                }
                cell.rmse = (acc / static_cast<double>(valid)).cwiseSqrt();
            } else {
                cell.rmse.setConstant(std::numeric_limits<double>::quiet_NaN());
            }
            cell.avg_rmse_state.resize(n);
            for (int j = 0; j < n; ++j)
                cell.avg_rmse_state[j] = cell.rmse.col(j).mean();
            for (const auto& g : exp.state_groups) {
                double acc = 0.0;
                for (int s : g.states) acc += cell.avg_rmse_state[s];
                cell.avg_rmse_group.push_back(acc / static_cast<double>(g.states.size()));
            }
            // per-run scores for paired significance checks
            cell.run_score_group.assign(exp.state_groups.size(), {});
            for (int m = 0; m < M; ++m) {
                if (!runs[m].ok) continue;
                for (std::size_t g = 0; g < exp.state_groups.size(); ++g) {
                    double acc = 0.0;
                    for (int s : exp.state_groups[g].states)
                        acc += std::sqrt(runs[m].errsq[fi].col(s).mean());
                    cell.run_score_group[g].push_back(
                        acc / static_cast<double>(exp.state_groups[g].states.size()));
                }
            }
            if (cell.selected_bandwidth) {
                cell.sigmas.assign(static_cast<std::size_t>(M) * K,
                                   std::numeric_limits<double>::quiet_NaN());
                for (int m = 0; m < M; ++m) {
                    if (!runs[m].ok) continue;
                    for (int k = 0; k < K; ++k)
                        cell.sigmas[static_cast<std::size_t>(m) * K + k] =
                            runs[m].sigmas[fi][k];
                }
            }
            for (int m = 0; m < M; ++m) {
                cell.halving_events += runs[m].halvings[fi];
                cell.fpi_nonconverged += runs[m].nonconverged[fi];
                cell.jkb_violations += runs[m].jkb_violations[fi];
                if (runs[m].ok) {
                    cell.min_cov_eig = std::min(cell.min_cov_eig, runs[m].min_cov_eig[fi]);
                    cell.max_cov_asym =
                        std::max(cell.max_cov_asym, runs[m].max_cov_asym[fi]);
                }
            }
            block.cells.push_back(std::move(cell));
        }

        const int window = std::min(exp.diagnostics_window, K);
        block.grammian = grammians(model, R, Qf, window, window);
        try {
            block.stability = stability_condition(model, R, window, window);
        } catch (const ObservabilityDegenerate&) {
            block.stability = StabilityReport{false,
                                              std::numeric_limits<double>::infinity()};
        }
        report.blocks.push_back(std::move(block));
    }
    return report;
}

inline std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot open for writing: " + p.string());
    return out;
}

}  // namespace detail

// Emit rmse.csv, table.csv, sigma.csv and manifest.json into out_dir.
// All floats carry 17 significant digits. The stated column triple
// step,run,sigma of sigma.csv (and step,filter,state,rmse of rmse.csv) is
// prefixed with delta/filter identifiers so one file covers a whole sweep.
inline void write_report(const BenchReport& report, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory: " + out_dir.string());

    {
        auto out = detail::open_out(out_dir / "rmse.csv");
        out << "delta,step,filter,state,rmse\n";
        for (const auto& b : report.blocks)
            for (const auto& c : b.cells)
                for (int k = 0; k < c.rmse.rows(); ++k)
                    for (int j = 0; j < c.rmse.cols(); ++j)
                        out << fmt17(b.delta) << ',' << (k + 1) << ',' << c.filter << ','
                            << (j + 1) << ',' << fmt17(c.rmse(k, j)) << '\n';
    }
    {
        auto out = detail::open_out(out_dir / "table.csv");
        out << "delta,filter,avg_rmse,state_group\n";
        for (const auto& b : report.blocks)
            for (const auto& c : b.cells)
                for (std::size_t g = 0; g < report.state_groups.size(); ++g)
                    out << fmt17(b.delta) << ',' << c.filter << ','
                        << fmt17(c.avg_rmse_group[g]) << ',' << report.state_groups[g].name
                        << '\n';
    }
    {
        auto out = detail::open_out(out_dir / "sigma.csv");
        out << "delta,filter,step,run,sigma\n";
        for (const auto& b : report.blocks)
            for (const auto& c : b.cells) {
                if (!c.selected_bandwidth) continue;
                const int K = static_cast<int>(c.rmse.rows());
                for (int m = 0; m * K < static_cast<int>(c.sigmas.size()); ++m)
                    for (int k = 0; k < K; ++k) {
                        const double s = c.sigmas[static_cast<std::size_t>(m) * K + k];
                        if (std::isnan(s)) continue;
                        out << fmt17(b.delta) << ',' << c.filter << ',' << (k + 1) << ','
                            << m << ',' << fmt17(s) << '\n';
                    }
            }
    }
    {
        nlohmann::json j;
        j["problem"] = report.problem;
        j["steps"] = report.steps;
        j["runs"] = report.runs;
        j["seed"] = report.seed;
        j["deltas"] = report.deltas;
        j["filters"] = report.filter_names;
        j["params"] = {{"mu1", report.params.mu1},
                       {"mu2", report.params.mu2},
                       {"sigma", report.params.sigma},
                       {"grid_lo", report.params.grid_lo},
                       {"grid_hi", report.params.grid_hi},
                       {"grid_count", report.params.grid_count},
                       {"sigma_c", report.params.sigma_c}};
        nlohmann::json groups = nlohmann::json::array();
        for (const auto& g : report.state_groups)
            groups.push_back({{"name", g.name}, {"states", g.states}});
        j["state_groups"] = groups;
        j["rmse_definition"] =
            "rmse(k,j) = sqrt(mean over runs of squared error); avg_rmse = time mean; "
            "group value = mean of member-state avg_rmse";
        nlohmann::json diags = nlohmann::json::array();
        for (const auto& b : report.blocks) {
            nlohmann::json d;
            d["delta"] = b.delta;
            d["invalid_runs"] = b.invalid_runs;
            d["grammian"] = {{"window", b.grammian.window},
                             {"controllability_min_eig", b.grammian.controllability_min_eig},
                             {"controllability_max_eig", b.grammian.controllability_max_eig},
                             {"observability_min_eig", b.grammian.observability_min_eig},
                             {"observability_max_eig", b.grammian.observability_max_eig}};
            d["stability"] = {{"spectral_radius", b.stability.spectral_radius},
                              {"stable", b.stability.stable}};
            nlohmann::json cells = nlohmann::json::array();
            for (const auto& c : b.cells)
                cells.push_back({{"filter", c.filter},
                                 {"halving_events", c.halving_events},
                                 {"fpi_nonconverged", c.fpi_nonconverged},
                                 {"jkb_violations", c.jkb_violations},
                                 {"min_cov_eig", c.min_cov_eig},
                                 {"max_cov_asym", c.max_cov_asym}});
            d["filters"] = cells;
            diags.push_back(d);
        }
        j["diagnostics"] = diags;
        auto out = detail::open_out(out_dir / "manifest.json");
        out << j.dump(2) << '\n';
    }
}

// The paper's two benchmark parameterizations with desk-scale defaults.
inline Experiment builtin_problem(const std::string& name) {
    Experiment exp;
    exp.problem = name;
    if (name == "problem1") {
        exp.F = Eigen::MatrixXd{{0.99, 0.01}, {0.0, 0.99}};
        exp.G = Eigen::MatrixXd{{5.0}, {1.0}};
        exp.H = Eigen::MatrixXd{{1.0, -1.0}};
        exp.delta_to_dF = [](double delta) {
            return Eigen::MatrixXd{{0.0, delta}, {0.0, 0.0}};
        };
        exp.q_mix = GaussianMixture::scalar({{0.8, 0.01}, {0.2, 1.0}});
        exp.r_mix = GaussianMixture::scalar({{0.8, 1.0}, {0.2, 1000.0}});
        exp.x0 = Eigen::VectorXd{{10.0, 20.0}};
        exp.P0 = Eigen::MatrixXd{{35.0 * 35.0, 0.0}, {0.0, 70.0 * 70.0}};
        exp.steps = 500;
        exp.runs = 100;
        exp.delta_sweep = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
        exp.state_groups = {{"x2", {1}}};
    } else if (name == "problem2") {
        const double T = 0.1;
        exp.F = Eigen::MatrixXd{{1.0, T, 0.5 * T * T}, {0.0, 1.0, T}, {0.0, 0.0, 1.0}};
        exp.G = Eigen::MatrixXd::Identity(3, 3);
        exp.H = Eigen::MatrixXd{{1.0, 1.0, 0.0}};
        exp.delta_to_dF = [T](double delta2) {
            const double delta1 = delta2 > 0.0 ? 0.005 : (delta2 < 0.0 ? -0.005 : 0.0);
            return Eigen::MatrixXd{{0.0, 0.0, delta1 * T * T},
                                   {0.0, 0.0, delta2 * T},
                                   {0.0, 0.0, 0.0}};
        };
        exp.q_mix = GaussianMixture::isotropic(3, {{0.9, 0.0005}, {0.1, 0.05}});
        exp.r_mix = GaussianMixture::scalar({{0.8, 0.005}, {0.2, 50.0}});
        exp.x0 = Eigen::VectorXd{{50.0, 4.0, 1.0}};
        exp.P0 = Eigen::MatrixXd{{0.25, 0.0, 0.0}, {0.0, 0.25, 0.0}, {0.0, 0.0, 0.01}};
        exp.steps = 200;
        exp.runs = 100;
        exp.delta_sweep = {0.0,   0.005, 0.01,  0.015, 0.02, 0.025,
                           0.03,  0.035, 0.04,  0.045, 0.05};
        exp.state_groups = {{"position", {0}}, {"velocity", {1}}};
    } else {
        throw std::invalid_argument("unknown problem: " + name);
    }
    exp.filter_names = {"kf", "rskf", "mckf", "rmckf-fk", "mckf-sk", "rmckf-sk"};
    exp.refresh_filters();
    return exp;
}

// Rebuild an experiment from a written manifest (for deterministic replays).
inline Experiment experiment_from_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path.string());
    nlohmann::json j;
    in >> j;
    Experiment exp = builtin_problem(j.at("problem").get<std::string>());
    exp.steps = j.at("steps").get<int>();
    exp.runs = j.at("runs").get<int>();
    exp.seed = j.at("seed").get<std::uint64_t>();
    exp.delta_sweep = j.at("deltas").get<std::vector<double>>();
    exp.filter_names = j.at("filters").get<std::vector<std::string>>();
    const auto& p = j.at("params");
    exp.params.mu1 = p.at("mu1").get<double>();
    exp.params.mu2 = p.at("mu2").get<double>();
    exp.params.sigma = p.at("sigma").get<double>();
    exp.params.grid_lo = p.at("grid_lo").get<double>();
    exp.params.grid_hi = p.at("grid_hi").get<double>();
    exp.params.grid_count = p.at("grid_count").get<int>();
    exp.params.sigma_c = p.at("sigma_c").get<double>();
    exp.refresh_filters();
    return exp;
}

}  // namespace rmckf
