#include <doctest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "robustlr/error.hpp"
#include "robustlr/inference.hpp"
#include "robustlr/simlab.hpp"

using rlr::LossSpec;
using rlr::Matrix;
using rlr::TrimConfig;
using rlr::Vector;

namespace {

std::pair<Vector, Vector> random_pair(std::mt19937_64& gen, Eigen::Index m) {
    const Matrix q = oracle::random_orthonormal(gen, m, 2);
    return {q.col(0), q.col(1)};
}

rlr::DirectionSet mu2_direction(std::size_t n) { return rlr::DirectionSet::single(rlr::target_direction(rlr::DirectionCase::Mu2, n)); }

} // namespace

TEST_CASE("least-squares scores are twice the projections on phi2") {
    std::mt19937_64 gen(1);
    for (int rep = 0; rep < 100; ++rep) {
        const Matrix Y = oracle::random_matrix(gen, 20, 12, 2.0);
        const auto [phi1, phi2] = random_pair(gen, 12);
        const Vector gamma = rlr::score_vector(Y, phi1, phi2, LossSpec::least_squares());
        CHECK((gamma - 2.0 * Y * phi2).norm() < 1e-10);
    }
}

TEST_CASE("scores vanish on exact rank-one data and flip with phi2") {
    std::mt19937_64 gen(2);
    const auto [phi1, phi2] = random_pair(gen, 12);
    const Matrix Y = oracle::random_matrix(gen, 20, 1, 3.0) * phi1.transpose();
    for (const auto& loss : {LossSpec::huber(0.1), LossSpec::logistic(0.1)}) CHECK(rlr::score_vector(Y, phi1, phi2, loss).norm() < 1e-12);

    const Matrix Z = oracle::random_matrix(gen, 20, 12);
    const Vector g = rlr::score_vector(Z, phi1, phi2, LossSpec::logistic(0.1));
    const Vector h = rlr::score_vector(Z, phi1, -phi2, LossSpec::logistic(0.1));
    CHECK((g + h).norm() < 1e-14);
    const Vector a = rlr::target_direction(rlr::DirectionCase::Mu2, 20);
    const auto tg = rlr::direction_test(g, a, rlr::sigma_hat(g));
    const auto th = rlr::direction_test(h, a, rlr::sigma_hat(h));
    CHECK(tg.statistic == doctest::Approx(-th.statistic));
    CHECK(tg.p_asymptotic == doctest::Approx(th.p_asymptotic));
}

TEST_CASE("Huber score of one row matches a golden-section row fit") {
    std::mt19937_64 gen(3);
    const LossSpec huber = LossSpec::huber(0.1);
    for (int rep = 0; rep < 20; ++rep) {
        const auto [phi1, phi2] = random_pair(gen, 12);
        const Vector y = 4.0 * phi1 + oracle::random_matrix(gen, 12, 1, 0.7);
        const double theta = oracle::golden_section(
            [&](double t) {
                double total = 0.0;
                for (Eigen::Index j = 0; j < 12; ++j) total += rlr::loss_value(huber, y(j) - t * phi1(j));
                return total;
            },
            -100, 100, 1e-13);
        double expected = 0.0;
        for (Eigen::Index j = 0; j < 12; ++j) expected += rlr::loss_deriv(huber, y(j) - theta * phi1(j)) * phi2(j);
        const Vector gamma = rlr::score_vector(Matrix(y.transpose()), phi1, phi2, huber);
        CHECK(std::abs(gamma(0) - expected) < 1e-6);
    }
}

TEST_CASE("score_vector validates its directions") {
    const Matrix Y = Matrix::Ones(4, 3);
    Vector p1 = Vector::Unit(3, 0), p2 = Vector::Unit(3, 1);
    CHECK_THROWS_AS(rlr::score_vector(Y, 2.0 * p1, p2, LossSpec::logistic(0.1)), rlr::InputError);
    CHECK_THROWS_AS(rlr::score_vector(Y, p1, (p1 + p2).normalized(), LossSpec::logistic(0.1)), rlr::InputError);
    CHECK_THROWS_AS(rlr::score_vector(Y, Vector::Unit(4, 0), Vector::Unit(4, 1), LossSpec::logistic(0.1)), rlr::InputError);
}

TEST_CASE("sigma_hat") {
    CHECK(rlr::sigma_hat(Vector{{1.0, -1.0, 1.0, -1.0}}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(rlr::sigma_hat(Vector::Constant(5, 2.0)), rlr::DegenerateError);
    CHECK_THROWS_AS(rlr::sigma_hat(Vector::Constant(1, 2.0)), rlr::InputError);
    std::mt19937_64 gen(4);
    for (int rep = 0; rep < 20; ++rep) {
        const Vector g = oracle::random_matrix(gen, 30, 1, 3.0).array() + 100.0;
        double mean = 0.0;
        for (double x : g) mean += x;
        mean /= 30.0;
        double ss = 0.0;
        for (double x : g) ss += (x - mean) * (x - mean);
        CHECK(rlr::sigma_hat(g) == doctest::Approx(std::sqrt(ss / 30.0)).epsilon(1e-12));
    }
}

TEST_CASE("z test and chi-square test") {
    const Vector a = Vector::Ones(4);
    const auto zero = rlr::direction_test(Vector::Zero(4), a, 0.0);
    CHECK(zero.statistic == 0.0);
    CHECK(zero.p_asymptotic == 1.0);
    CHECK(zero.degenerate);
    CHECK_THROWS_AS(rlr::direction_test(Vector::Ones(4), 2.0 * a, 1.0), rlr::InputError);

    // a^T gamma / (sqrt(n) sigma) = 1.96 with n = 4, sigma = 1.
    const Vector gamma = Vector::Constant(4, 0.98);
    const auto t = rlr::direction_test(gamma, a, 1.0);
    CHECK(t.statistic == doctest::Approx(1.96));
    CHECK(std::abs(t.p_asymptotic - 0.05) < 1e-3);

    const auto chi = rlr::multi_direction_test(gamma, rlr::DirectionSet::single(a), 1.0);
    CHECK(chi.statistic == doctest::Approx(1.96 * 1.96));
    CHECK(chi.p_asymptotic == doctest::Approx(t.p_asymptotic).epsilon(1e-10));
    CHECK(chi.dof == 1);

    const auto chi0 = rlr::multi_direction_test(Vector::Zero(4), rlr::DirectionSet::single(a), 0.0);
    CHECK(chi0.statistic == 0.0);
    CHECK(chi0.p_asymptotic == 1.0);

    std::mt19937_64 gen(5);
    for (int rep = 0; rep < 100; ++rep) {
        const Vector g = oracle::random_matrix(gen, 20, 1);
        Vector dir = oracle::random_matrix(gen, 20, 1);
        dir *= std::sqrt(20.0) / dir.norm();
        const double s = rlr::sigma_hat(g);
        const auto z = rlr::direction_test(g, dir, s);
        const auto c = rlr::multi_direction_test(g, rlr::DirectionSet::single(dir), s);
        CHECK(std::abs(c.statistic - z.statistic * z.statistic) <= 1e-10 * std::max(1.0, c.statistic));
    }

    // Two-direction chi-square p-value against the closed form exp(-x/2).
    Matrix A(2, 4);
    A << 1, 1, -1, -1, 1, -1, 1, -1;
    const auto two = rlr::multi_direction_test(Vector{{1.0, 0.2, -0.3, 0.4}}, rlr::DirectionSet(A), 0.5);
    CHECK(two.p_asymptotic == doctest::Approx(std::exp(-two.statistic / 2.0)).epsilon(1e-12));
}

TEST_CASE("direction sets") {
    Matrix A(2, 4);
    A << 1, 1, -1, -1, 1, -1, 1, -1;
    CHECK_NOTHROW(rlr::DirectionSet{A});
    Matrix B = A;
    B.row(1) << 1, 1, 1, -1;
    CHECK_THROWS_AS(rlr::DirectionSet{B}, rlr::InputError);
    Matrix C = A;
    C.row(0) *= 2.0;
    CHECK_THROWS_AS(rlr::DirectionSet{C}, rlr::InputError);

    Vector spiky = Vector::Zero(200);
    spiky(0) = std::sqrt(200.0);
    const rlr::DirectionSet s = rlr::DirectionSet::single(spiky);
    CHECK(s.warnings().size() == 1);
}

TEST_CASE("orthogonalizing directions against the estimated mean") {
    Vector mu = Vector::Constant(6, 5.0);
    Vector a(6);
    a << 1, -1, 1, -1, 1, -1;
    CHECK((rlr::orthogonalize_direction(2.0 * a, mu) - a).norm() < 1e-12);
    CHECK_THROWS_AS(rlr::orthogonalize_direction(mu, mu), rlr::DegenerateError);
    CHECK_THROWS_AS(rlr::orthogonalize_direction(Vector::Zero(6), mu), rlr::DegenerateError);

    // Equal group means: the contrast is already orthogonal to mu_hat.
    const std::vector<std::string> labels{"tumor", "tumor", "tumor", "normal", "normal", "normal"};
    const Vector theta{{3.0, 5.0, 4.0, 2.0, 6.0, 4.0}};
    const Vector means = rlr::group_mean_vector(theta, labels);
    CHECK((means - Vector::Constant(6, 4.0)).norm() < 1e-14);
    const Vector contrast = rlr::group_contrast(labels);
    CHECK(contrast(0) == -1.0);  // "normal" sorts first
    CHECK(contrast(3) == 1.0);
    CHECK((rlr::orthogonalize_direction(contrast, means) - contrast).norm() < 1e-12);

    // Unequal means: hand Gram-Schmidt.
    const Vector theta2{{10.0, 10.0, 10.0, 4.0, 4.0, 4.0}};
    const Vector m2 = rlr::group_mean_vector(theta2, labels);
    Vector expected = contrast - (contrast.dot(m2) / m2.squaredNorm()) * m2;
    expected *= std::sqrt(6.0) / expected.norm();
    CHECK((rlr::orthogonalize_direction(contrast, m2) - expected).norm() < 1e-12);

    CHECK_THROWS_AS(rlr::group_contrast(std::vector<std::string>{"a", "b", "c"}), rlr::InputError);
    CHECK_THROWS_AS(rlr::group_mean_vector(theta, std::vector<std::string>{"a"}), rlr::InputError);
}

TEST_CASE("build_directions produces a valid orthogonal set") {
    std::mt19937_64 gen(6);
    const Matrix raw = oracle::random_matrix(gen, 3, 20);
    const Vector mu = oracle::random_matrix(gen, 20, 1).array() + 10.0;
    const rlr::DirectionSet A = rlr::build_directions(raw, mu);
    const Matrix& M = A.matrix();
    CHECK((M * M.transpose() - 20.0 * Matrix::Identity(3, 3)).norm() < 1e-9);
    CHECK((M * mu).norm() < 1e-9 * mu.norm());
    Matrix dependent = raw;
    dependent.row(2) = raw.row(0) + raw.row(1);
    CHECK_THROWS_AS(rlr::build_directions(dependent, mu), rlr::DegenerateError);
}

TEST_CASE("compute_scores on exact rank-one data is degenerate") {
    rlr::SimConfig sim;
    sim.error_scale = 0.0;
    const Matrix Y = rlr::generate_dataset(sim, 0);
    const auto scores = rlr::compute_scores(Y, TrimConfig{});
    CHECK(scores.degenerate);
    CHECK(scores.gamma.norm() == 0.0);
    const auto result = rlr::unidimensionality_test(Y, mu2_direction(20), TrimConfig{}, 19, 1);
    CHECK(result.statistic == 0.0);
    CHECK(result.p_asymptotic == 1.0);
    REQUIRE(result.p_bootstrap.has_value());
    CHECK(*result.p_bootstrap == 1.0);
}

TEST_CASE("chi-square test with two directions holds its level under the null") {
    rlr::SimConfig sim;
    sim.seed = 77;
    Matrix raw(2, 20);
    raw.row(0) = rlr::target_direction(rlr::DirectionCase::Mu2, 20).transpose();
    for (Eigen::Index i = 0; i < 20; ++i) raw(1, i) = i < 10 ? 1.0 : -1.0;
    const rlr::DirectionSet A(raw);
    TrimConfig cfg;
    int rejections = 0;
    const int reps = 2000;
    for (int r = 0; r < reps; ++r) {
        cfg.seed = static_cast<std::uint64_t>(r);
        const auto scores = rlr::compute_scores(rlr::generate_dataset(sim, static_cast<std::size_t>(r)), cfg);
        if (rlr::multi_direction_test(scores.gamma, A, scores.sigma).p_asymptotic < 0.05) ++rejections;
    }
    const double rate = static_cast<double>(rejections) / reps;
    CHECK(rate >= 0.03);
    CHECK(rate <= 0.08);
}

TEST_CASE("wild bootstrap replicates keep the fit and flip residual rows") {
    rlr::SimConfig sim;
    sim.seed = 9;
    const Matrix Y = rlr::generate_dataset(sim, 0);
    const auto observed = rlr::compute_scores(Y, TrimConfig{});
    const rlr::WildBootstrap boot(Y, observed, TrimConfig{}, 5);
    const Matrix fitted = observed.theta1 * observed.phi1.transpose();
    const Matrix star = boot.replicate_data(3, 0);
    int flips = 0;
    for (Eigen::Index i = 0; i < 20; ++i) {
        const Vector d = (star.row(i) - fitted.row(i)).transpose();
        const Vector e = (Y.row(i) - fitted.row(i)).transpose();
        const bool same = (d - e).norm() < 1e-12, flipped = (d + e).norm() < 1e-12;
        CHECK((same || flipped));
        flips += flipped ? 1 : 0;
    }
    CHECK(flips > 0);
    CHECK(flips < 20);
    CHECK((boot.replicate_data(3, 0) - star).norm() == 0.0);
    CHECK((boot.replicate_data(3, 1) - star).norm() > 0.0);
}

TEST_CASE("bootstrap p-values: grid, determinism and power") {
    rlr::SimConfig sim;
    sim.seed = 10;
    const Matrix Y = rlr::generate_dataset(sim, 1);
    const auto A = mu2_direction(20);
    TrimConfig cfg;
    cfg.seed = 4;
    const std::size_t B = 39;
    const double p1 = rlr::bootstrap_pvalue(Y, A, cfg, B, 8, 1);
    const double p3 = rlr::bootstrap_pvalue(Y, A, cfg, B, 8, 3);
    CHECK(p1 == p3);
    const double k = p1 * (B + 1);
    CHECK(std::abs(k - std::round(k)) < 1e-9);
    CHECK(p1 > 0.0);
    CHECK(p1 <= 1.0);
    CHECK_THROWS_AS(rlr::bootstrap_pvalue(Y, A, cfg, 10, 8), rlr::InputError);

    sim.hypothesis = rlr::Hypothesis::Alternative;
    int small = 0;
    const int trials = 40;
    for (int t = 0; t < trials; ++t) {
        cfg.seed = static_cast<std::uint64_t>(t);
        if (rlr::bootstrap_pvalue(rlr::generate_dataset(sim, static_cast<std::size_t>(t)), A, cfg, 199, 100 + t) <= 0.01) ++small;
    }
    // About 94% of these data sets have |z| > 2.58, the rough threshold for
    // p <= 0.01, so 40 trials leave some room below that rate.
    CHECK(small >= 0.85 * trials);
}

TEST_CASE("unidimensionality_test dispatches on the number of directions") {
    rlr::SimConfig sim;
    sim.seed = 11;
    const Matrix Y = rlr::generate_dataset(sim, 0);
    const auto one = rlr::unidimensionality_test(Y, mu2_direction(20), TrimConfig{});
    CHECK(one.kind == rlr::TestKind::Z);
    CHECK(!one.p_bootstrap.has_value());
    Matrix raw(2, 20);
    raw.row(0) = rlr::target_direction(rlr::DirectionCase::Mu2, 20).transpose();
    for (Eigen::Index i = 0; i < 20; ++i) raw(1, i) = i < 10 ? 1.0 : -1.0;
    const auto two = rlr::unidimensionality_test(Y, rlr::DirectionSet(raw), TrimConfig{});
    CHECK(two.kind == rlr::TestKind::ChiSquare);
    CHECK(two.dof == 2);
    CHECK_THROWS_AS(rlr::unidimensionality_test(Y, rlr::DirectionSet::single(Vector::Ones(10)), TrimConfig{}), rlr::InputError);
}
