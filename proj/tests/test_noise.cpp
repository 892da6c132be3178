#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "rmckf/noise.hpp"

using rmckf::GaussianMixture;
using rmckf::Rng;

TEST_CASE("equivalent covariance is the weighted sum of component covariances") {
    const auto heavy = GaussianMixture::scalar({{0.8, 1.0}, {0.2, 1000.0}});
    CHECK(heavy.equivalent_covariance()(0, 0) == Catch::Approx(200.8).epsilon(1e-14));

    const auto process = GaussianMixture::scalar({{0.8, 0.01}, {0.2, 1.0}});
    CHECK(process.equivalent_covariance()(0, 0) == Catch::Approx(0.208).epsilon(1e-14));

    Eigen::MatrixXd Q(2, 2);
    Q << 2.0, 0.3, 0.3, 1.0;
    const GaussianMixture single({{1.0, Q}});
    CHECK((single.equivalent_covariance() - Q).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mixture invariants are enforced at construction") {
    CHECK_THROWS_AS(GaussianMixture::scalar({{0.5, 1.0}, {0.4, 1.0}}),
                    std::invalid_argument);  // weights sum to 0.9
    CHECK_THROWS_AS(GaussianMixture::scalar({{1.0, 0.0}}), std::invalid_argument);
    CHECK_THROWS_AS(GaussianMixture::scalar({{1.0, -1.0}}), std::invalid_argument);

    Eigen::MatrixXd asym(2, 2);
    asym << 1.0, 0.5, 0.2, 1.0;
    CHECK_THROWS_AS(GaussianMixture({{1.0, asym}}), std::invalid_argument);

    Eigen::MatrixXd c1 = Eigen::MatrixXd::Identity(2, 2);
    Eigen::MatrixXd c2 = Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(GaussianMixture({{0.5, c1}, {0.5, c2}}), std::invalid_argument);

    CHECK_THROWS_AS(GaussianMixture({}), std::invalid_argument);
}

TEST_CASE("sampling is deterministic for a fixed seed") {
    const auto mix = GaussianMixture::scalar({{1.0, 1.0}});
    Rng a(12345), b(12345);
    for (int i = 0; i < 10; ++i) CHECK(mix.sample(a)(0) == mix.sample(b)(0));
}

TEST_CASE("sample variance matches the equivalent covariance") {
    const auto mix = GaussianMixture::scalar({{0.8, 0.01}, {0.2, 1.0}});
    Rng rng(2024);
    const int N = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < N; ++i) {
        const double x = mix.sample(rng)(0);
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / N;
    const double var = sumsq / N - mean * mean;
    CHECK(var == Catch::Approx(0.208).epsilon(0.05));
}

TEST_CASE("empirical covariance of a 2-D mixture converges") {
    Eigen::MatrixXd c1(2, 2), c2(2, 2);
    c1 << 1.0, 0.4, 0.4, 2.0;
    c2 << 10.0, -1.0, -1.0, 5.0;
    const GaussianMixture mix({{0.7, c1}, {0.3, c2}});
    const Eigen::MatrixXd expected = mix.equivalent_covariance();

    Rng rng(99);
    const int N = 200000;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(2, 2);
    for (int i = 0; i < N; ++i) {
        const Eigen::VectorXd x = mix.sample(rng);
        acc += x * x.transpose();
    }
    acc /= N;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            CHECK(acc(r, c) == Catch::Approx(expected(r, c)).epsilon(0.05));
}

TEST_CASE("gaussian kernel values and limits") {
    CHECK(rmckf::gaussian_kernel(0.0, 1.0) == 1.0);
    CHECK(rmckf::gaussian_kernel(std::sqrt(2.0), 1.0) ==
          Catch::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(rmckf::gaussian_kernel(3.0 * std::sqrt(2.0), 3.0) ==
          Catch::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK_THROWS_AS(rmckf::gaussian_kernel(1.0, 0.0), std::invalid_argument);

    // approaches 1 monotonically as sigma grows
    double prev = rmckf::gaussian_kernel(1.0, 0.5);
    for (double sigma = 1.0; sigma < 1e6; sigma *= 10.0) {
        const double v = rmckf::gaussian_kernel(1.0, sigma);
        CHECK(v > prev);
        CHECK(v <= 1.0);
        prev = v;
    }
    CHECK(prev == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("gaussian kernel monotonicity properties") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> err(0.01, 5.0), bw(0.1, 10.0);
    for (int i = 0; i < 200; ++i) {
        const double e = err(gen);
        const double s = bw(gen);
        // strictly decreasing in |e|
        CHECK(rmckf::gaussian_kernel(e * 1.1, s) < rmckf::gaussian_kernel(e, s));
        // strictly increasing in sigma for fixed e != 0
        CHECK(rmckf::gaussian_kernel(e, s * 1.1) > rmckf::gaussian_kernel(e, s));
    }
}

TEST_CASE("sample correntropy values") {
    Eigen::VectorXd zeros = Eigen::VectorXd::Zero(4);
    CHECK(rmckf::sample_correntropy(zeros, 2.0) == 1.0);

    Eigen::VectorXd e(2);
    e << 0.0, 2.0;
    CHECK(rmckf::sample_correntropy(e, 1.0) ==
          Catch::Approx((1.0 + std::exp(-2.0)) / 2.0).epsilon(1e-14));

    Eigen::VectorXd empty(0);
    CHECK_THROWS_AS(rmckf::sample_correntropy(empty, 1.0), std::invalid_argument);
}

TEST_CASE("sample correntropy stays in (0,1] and is 1 only at zero error") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> err(-4.0, 4.0);
    for (int i = 0; i < 100; ++i) {
        Eigen::VectorXd e(5);
        for (int j = 0; j < 5; ++j) e(j) = err(gen);
        const double v = rmckf::sample_correntropy(e, 1.3);
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
        if (e.cwiseAbs().maxCoeff() > 1e-12) CHECK(v < 1.0);
    }
}

// Truncated even-moment series of the Gaussian kernel:
// sum_{N=0..6} (-1)^N e^{2N} / (2^N sigma^{2N} N!)
static double kernel_series(double e, double sigma, int terms) {
    double acc = 0.0;
    double fact = 1.0;
    for (int N = 0; N < terms; ++N) {
        if (N > 0) fact *= N;
        acc += (N % 2 ? -1.0 : 1.0) * std::pow(e * e / (2.0 * sigma * sigma), N) / fact;
    }
    return acc;
}

TEST_CASE("gaussian kernel matches its truncated even-moment expansion") {
    for (double ratio : {0.05, 0.1, 0.25, 0.4, 0.5}) {
        for (double sigma : {0.5, 1.0, 3.0}) {
            const double e = ratio * sigma;
            CHECK(rmckf::gaussian_kernel(e, sigma) ==
                  Catch::Approx(kernel_series(e, sigma, 7)).margin(1e-6));
        }
    }
}
