#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rmckf/rmckf.hpp"

namespace {

void print_matrix(const char* label, const Eigen::MatrixXd& M) {
    std::cout << label << " =\n";
    for (int r = 0; r < M.rows(); ++r) {
        std::cout << "  [";
        for (int c = 0; c < M.cols(); ++c)
            std::cout << (c ? ", " : " ") << M(r, c);
        std::cout << " ]\n";
    }
}

void print_mixture(const char* label, const rmckf::GaussianMixture& mix) {
    std::cout << label << ": ";
    bool first = true;
    for (const auto& c : mix.components()) {
        if (!first) std::cout << " + ";
        first = false;
        if (mix.dimension() == 1)
            std::cout << c.weight << " * N(0, " << c.covariance(0, 0) << ")";
        else
            std::cout << c.weight << " * N(0, Sigma" << mix.dimension() << "x"
                      << mix.dimension() << ")";
    }
    std::cout << "  [equivalent covariance: ";
    const Eigen::MatrixXd eq = mix.equivalent_covariance();
    if (eq.size() == 1)
        std::cout << eq(0, 0);
    else
        std::cout << eq.format(Eigen::IOFormat(Eigen::StreamPrecision, 0, ", ", "; "));
    std::cout << "]\n";
}

void describe(const rmckf::Experiment& exp) {
    std::cout << "problem: " << exp.problem << "\n";
    print_matrix("F", exp.F);
    print_matrix("deltaF(delta=1)", exp.delta_to_dF(1.0));
    print_matrix("G", exp.G);
    print_matrix("H", exp.H);
    print_mixture("q", exp.q_mix);
    print_mixture("r", exp.r_mix);
    print_matrix("P0", exp.P0);
    std::cout << "x0 = [" << exp.x0.transpose() << " ]\n";
    std::cout << "defaults: steps=" << exp.steps << " runs=" << exp.runs
              << " seed=" << exp.seed << "\n";
    std::cout << "delta sweep:";
    for (double d : exp.delta_sweep) std::cout << ' ' << d;
    std::cout << "\nfilters:";
    for (const auto& f : exp.filter_names) std::cout << ' ' << f;
    std::cout << "\nfilter params: mu1=" << exp.params.mu1 << " mu2=" << exp.params.mu2
              << " sigma=" << exp.params.sigma << " grid=[" << exp.params.grid_lo << ", "
              << exp.params.grid_hi << "] x" << exp.params.grid_count
              << " sigma_c=" << exp.params.sigma_c << "\n";
    std::cout << "state groups:";
    for (const auto& g : exp.state_groups) {
        std::cout << ' ' << g.name << "{";
        for (std::size_t i = 0; i < g.states.size(); ++i)
            std::cout << (i ? "," : "") << (g.states[i] + 1);
        std::cout << "}";
    }
    std::cout << "\n";
}

void print_table(const rmckf::BenchReport& report) {
    std::printf("%8s  %-10s  %-10s  %12s\n", "delta", "filter", "group", "avg_rmse");
    for (const auto& b : report.blocks)
        for (const auto& c : b.cells)
            for (std::size_t g = 0; g < report.state_groups.size(); ++g)
                std::printf("%8g  %-10s  %-10s  %12.6g\n", b.delta, c.filter.c_str(),
                            report.state_groups[g].name.c_str(), c.avg_rmse_group[g]);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo benchmark for the robust maximum-correntropy Kalman filter family"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run a benchmark sweep and write CSV reports");
    std::string problem = "problem1";
    std::vector<double> deltas;
    std::vector<std::string> filters;
    std::vector<double> grid;
    int runs = -1, steps = -1, threads = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double sigma = -1.0, sigma_c = -1.0, mu1 = -1.0, mu2 = -1.0;
    std::string out_dir = "bench_out";
    run->add_option("--problem", problem, "problem1 or problem2")->required();
    run->add_option("--delta", deltas, "uncertainty values to sweep")->delimiter(',');
    run->add_option("--runs", runs, "Monte Carlo runs");
    run->add_option("--steps", steps, "time steps per run");
    run->add_option("--seed", seed, "experiment seed")->each([&](const std::string&) {
        seed_set = true;
    });
    run->add_option("--filters", filters,
                    "subset of kf,rskf,mckf,rmckf-fk,mckf-sk,rmckf-sk")
        ->delimiter(',');
    run->add_option("--sigma", sigma, "fixed kernel bandwidth for mckf/rmckf-fk");
    run->add_option("--grid", grid, "lo,hi,count for the bandwidth search grid")
        ->delimiter(',');
    run->add_option("--sigma-c", sigma_c, "selection-cost bandwidth");
    run->add_option("--mu1", mu1, "risk parameter mu1");
    run->add_option("--mu2", mu2, "risk parameter mu2");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--threads", threads, "worker threads (0 = hardware)");
    run->set_config("--config", "", "plain-text key=value config file; flags override");

    auto* desc = app.add_subcommand("describe", "print a problem's exact parameterization");
    std::string desc_problem;
    desc->add_option("--problem", desc_problem, "problem1 or problem2")->required();

    try {
        app.parse(argc, argv);

        if (desc->parsed()) {
            describe(rmckf::builtin_problem(desc_problem));
            return 0;
        }

        rmckf::Experiment exp = rmckf::builtin_problem(problem);
        if (!deltas.empty()) exp.delta_sweep = deltas;
        if (runs > 0) exp.runs = runs;
        if (steps > 0) exp.steps = steps;
        if (seed_set) exp.seed = seed;
        if (!filters.empty()) exp.filter_names = filters;
        if (sigma > 0.0) exp.params.sigma = sigma;
        if (sigma_c > 0.0) exp.params.sigma_c = sigma_c;
        if (mu1 >= 0.0) exp.params.mu1 = mu1;
        if (mu2 > 0.0) exp.params.mu2 = mu2;
        if (!grid.empty()) {
            if (grid.size() != 3)
                throw CLI::ValidationError("--grid", "expected lo,hi,count");
            exp.params.grid_lo = grid[0];
            exp.params.grid_hi = grid[1];
            exp.params.grid_count = static_cast<int>(grid[2]);
        }
        exp.threads = threads;
        exp.refresh_filters();

        const rmckf::BenchReport report = rmckf::run_experiment(exp);
        rmckf::write_report(report, out_dir);
        print_table(report);
        std::cout << "report written to " << out_dir << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
