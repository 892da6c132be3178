#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rmckf/filter.hpp"

using namespace rmckf;

TEST_CASE("jkb values") {
    Eigen::VectorXd zeros = Eigen::VectorXd::Zero(3);
    CHECK(jkb(zeros, 0.7) == 0.0);
    CHECK(jkb(zeros, 5.0) == 0.0);

    Eigen::VectorXd ones(2);
    ones << 1.0, 1.0;
    CHECK(jkb(ones, 1.0) == Catch::Approx(-0.5).epsilon(1e-14));

    Eigen::VectorXd e(2);
    e << 0.0, 2.0;
    CHECK(jkb(e, 1.0) ==
          Catch::Approx(std::log((1.0 + std::exp(-2.0)) / 2.0)).epsilon(1e-12));
}

TEST_CASE("jkb is nonpositive and non-decreasing in sigma_c") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd e(4);
        for (int i = 0; i < 4; ++i) e(i) = g(gen);
        double prev = jkb(e, 0.2);
        CHECK(prev <= 0.0);
        for (double sc = 0.4; sc < 20.0; sc *= 2.0) {
            const double v = jkb(e, sc);
            CHECK(v >= prev);
            CHECK(v <= 0.0);
            prev = v;
        }
    }
}

TEST_CASE("bandwidth grid validation and spacing") {
    CHECK_THROWS_AS(BandwidthGrid({}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(BandwidthGrid({1.0, 1.0}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(BandwidthGrid({-1.0, 2.0}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(BandwidthGrid({1.0, 2.0}, 0.0), std::invalid_argument);

    const auto grid = BandwidthGrid::logspace(0.5, 50.0, 25);
    REQUIRE(grid.values.size() == 25);
    CHECK(grid.values.front() == Catch::Approx(0.5));
    CHECK(grid.values.back() == Catch::Approx(50.0));
    // uniform ratio between neighbors
    const double ratio = grid.values[1] / grid.values[0];
    for (std::size_t i = 1; i + 1 < grid.values.size(); ++i)
        CHECK(grid.values[i + 1] / grid.values[i] == Catch::Approx(ratio).epsilon(1e-10));
}

TEST_CASE("select_bandwidth: zero innovation ties resolve to the largest sigma") {
    const Eigen::MatrixXd Pp{{2.0, 0.0}, {0.0, 1.0}};
    const Eigen::MatrixXd R{{1.0}};
    const Eigen::MatrixXd H{{1.0, 1.0}};
    const Eigen::VectorXd prior{{1.0, 2.0}};
    const Eigen::VectorXd Y = H * prior;
    FilterConfig cfg;
    const BandwidthGrid grid({0.5, 1.0, 2.0, 5.0, 10.0}, 1.0);

    const auto sel = select_bandwidth(prior, Pp, Y, H, R, cfg, grid,
                                      Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1));
    CHECK(sel.sigma == 10.0);
    for (const auto& c : sel.candidates) {
        CHECK(c.ok);
        CHECK(c.jkb == 0.0);
    }
}

TEST_CASE("select_bandwidth: singleton grid matches a direct update") {
    const Eigen::MatrixXd Pp{{1.5}};
    const Eigen::MatrixXd R{{0.8}};
    const Eigen::MatrixXd H{{1.0}};
    const Eigen::VectorXd prior{{0.0}};
    const Eigen::VectorXd Y{{2.0}};
    FilterConfig cfg;
    const BandwidthGrid grid({1.3}, 1.0);

    const auto sel = select_bandwidth(prior, Pp, Y, H, R, cfg, grid,
                                      Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1));
    const auto direct = fpi_update(prior, Pp, Y, H, R, cfg, 1.3, Eigen::VectorXd::Zero(1),
                                   Eigen::VectorXd::Zero(1));
    CHECK(sel.sigma == 1.3);
    CHECK(sel.update.mean == direct.mean);
    CHECK(sel.update.K == direct.K);
}

TEST_CASE("select_bandwidth agrees with an exhaustive oracle pass") {
    const Eigen::MatrixXd Pp{{1.0}};
    const Eigen::MatrixXd R{{1.0}};
    const Eigen::MatrixXd H{{1.0}};
    const Eigen::VectorXd prior{{0.0}};
    const Eigen::VectorXd Y{{5.0}};
    FilterConfig cfg;
    const BandwidthGrid grid({0.5, 1.0, 2.0, 5.0, 10.0}, 1.0);

    const auto sel = select_bandwidth(prior, Pp, Y, H, R, cfg, grid,
                                      Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1));

    // independent recomputation of jkb over the same grid
    double best = -std::numeric_limits<double>::infinity();
    double best_sigma = 0.0;
    for (double s : grid.values) {
        FpiResult r;
        try {
            r = fpi_update(prior, Pp, Y, H, R, cfg, s, Eigen::VectorXd::Zero(1),
                           Eigen::VectorXd::Zero(1));
        } catch (const FilterError&) {
            continue;
        }
        if (!r.converged) continue;
        Eigen::VectorXd e(2);
        e << r.e_p(0), r.e_r(0);
        const double j = jkb(e, grid.sigma_c);
        if (j > best || (j == best && s > best_sigma)) {
            best = j;
            best_sigma = s;
        }
    }
    CHECK(sel.sigma == best_sigma);

    // the recorded diagnostics themselves certify optimality
    for (const auto& c : sel.candidates) {
        if (!c.ok) continue;
        CHECK(best >= c.jkb);
    }
}

TEST_CASE("select_bandwidth throws when every candidate fails") {
    const Eigen::MatrixXd Pp{{1.0}};
    const Eigen::MatrixXd R{{1.0}};
    const Eigen::MatrixXd H{{1.0}};
    const Eigen::VectorXd prior{{0.0}};
    const Eigen::VectorXd Y{{1e6}};  // enormous innovation underflows Pi
    FilterConfig cfg;
    const BandwidthGrid grid({1e-3, 2e-3}, 1.0);
    CHECK_THROWS_AS(select_bandwidth(prior, Pp, Y, H, R, cfg, grid,
                                     Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)),
                    AllCandidatesFailed);
}

TEST_CASE("baseline bandwidth rules") {
    const Eigen::MatrixXd H{{1.0, 0.0}, {0.0, 1.0}};
    const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(2, 2);
    const Eigen::MatrixXd R = Eigen::MatrixXd::Identity(2, 2);
    const Eigen::VectorXd prior{{0.0, 0.0}};

    SECTION("euclidean norm of the innovation") {
        const Eigen::VectorXd Y{{3.0, 4.0}};
        CHECK(baseline_bandwidth(BaselineRule::euclidean, Y, H, prior, P, R) ==
              Catch::Approx(5.0).epsilon(1e-14));
    }

    SECTION("mahalanobis rule, scalar hand value") {
        const Eigen::MatrixXd H1{{1.0}};
        const Eigen::MatrixXd R4{{4.0}};
        const Eigen::MatrixXd P1{{1.0}};
        CHECK(baseline_bandwidth(BaselineRule::mahalanobis, Eigen::VectorXd{{2.0}}, H1,
                                 Eigen::VectorXd{{0.0}}, P1, R4) ==
              Catch::Approx(1.0).epsilon(1e-14));
    }

    SECTION("weighted innovation rule, scalar hand value") {
        const Eigen::MatrixXd H1{{1.0}};
        const Eigen::MatrixXd R1{{1.0}};
        const Eigen::MatrixXd P2{{2.0}};
        // 1 / (sqrt(nu^T R^-1 nu) + H P H^T) = 1 / (3 + 2)
        CHECK(baseline_bandwidth(BaselineRule::weighted_innovation,
                                 Eigen::VectorXd{{3.0}}, H1, Eigen::VectorXd{{0.0}}, P2,
                                 R1) == Catch::Approx(0.2).epsilon(1e-12));
    }

    SECTION("zero innovation rejected") {
        const Eigen::VectorXd Y = Eigen::VectorXd::Zero(2);
        CHECK_THROWS_AS(baseline_bandwidth(BaselineRule::euclidean, Y, H, prior, P, R),
                        ZeroInnovation);
        CHECK_THROWS_AS(baseline_bandwidth(BaselineRule::mahalanobis, Y, H, prior, P, R),
                        ZeroInnovation);
    }
}
