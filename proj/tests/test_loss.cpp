#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "robustlr/error.hpp"
#include "robustlr/loss.hpp"

using rlr::LossFamily;
using rlr::LossSpec;

namespace {

std::vector<LossSpec> all_losses() {
    return {LossSpec::least_squares(), LossSpec::huber(0.1), LossSpec::huber(1.5), LossSpec::logistic(0.1),
            LossSpec::logistic(1.205)};
}

std::vector<double> grid() {
    std::vector<double> s;
    for (int i = -400; i <= 400; ++i) s.push_back(i * 0.0125);
    return s;
}

} // namespace

TEST_CASE("loss values at documented points") {
    CHECK(rlr::loss_value(LossSpec::logistic(0.1), 0.0) == 0.0);
    CHECK(rlr::loss_value(LossSpec::huber(0.1), 1.0) == doctest::Approx(0.095));
    CHECK(rlr::loss_value(LossSpec::huber(0.1), 0.05) == doctest::Approx(0.00125));
    CHECK(rlr::loss_value(LossSpec::least_squares(), -3.0) == 9.0);
    // c log cosh(s / c) for a moderate argument.
    CHECK(rlr::loss_value(LossSpec::logistic(0.5), 0.7) == doctest::Approx(0.5 * std::log(std::cosh(1.4))).epsilon(1e-14));
    // No overflow far in the tail: c(|s|/c - log 2).
    CHECK(rlr::loss_value(LossSpec::logistic(0.1), 1000.0) == doctest::Approx(1000.0 - 0.1 * std::log(2.0)));
}

TEST_CASE("derivatives at documented points") {
    CHECK(rlr::loss_deriv(LossSpec::least_squares(), 3.0) == 6.0);
    CHECK(rlr::loss_deriv(LossSpec::huber(0.1), -5.0) == -0.1);
    CHECK(std::abs(rlr::loss_deriv(LossSpec::logistic(0.1), 5.0) - 1.0) < 1e-12);
    CHECK(rlr::loss_second_deriv(LossSpec::least_squares(), 0.3) == 2.0);
    CHECK(rlr::loss_second_deriv(LossSpec::huber(0.1), 0.05) == 1.0);
    CHECK(rlr::loss_second_deriv(LossSpec::huber(0.1), 0.1) == 0.0);
    CHECK(rlr::loss_second_deriv(LossSpec::huber(0.1), 0.2) == 0.0);
    CHECK(rlr::loss_second_deriv(LossSpec::logistic(0.1), 0.0) == doctest::Approx(10.0));
}

TEST_CASE("IRLS weights and their limits at zero") {
    CHECK(rlr::irls_weight(LossSpec::least_squares(), 0.0) == 2.0);
    CHECK(rlr::irls_weight(LossSpec::least_squares(), 7.0) == 2.0);
    CHECK(rlr::irls_weight(LossSpec::huber(0.1), 0.0) == 1.0);
    CHECK(rlr::irls_weight(LossSpec::huber(0.1), 0.2) == doctest::Approx(0.5));
    CHECK(rlr::irls_weight(LossSpec::logistic(0.1), 0.0) == doctest::Approx(10.0));
    CHECK(rlr::irls_weight(LossSpec::logistic(0.1), 1e-9) == doctest::Approx(10.0));
    for (const auto& spec : all_losses())
        for (double s : grid())
            if (s != 0.0) CHECK(rlr::irls_weight(spec, s) == doctest::Approx(rlr::loss_deriv(spec, s) / s).epsilon(1e-12));
}

TEST_CASE("shape conditions hold on a grid for every family") {
    for (const auto& spec : all_losses()) {
        CAPTURE(rlr::to_string(spec.family));
        CAPTURE(spec.c);
        const double c0 = spec.curvature_bound();
        double last_d1 = -1e300;
        for (double s : grid()) {
            const double v = rlr::loss_value(spec, s);
            const double d1 = rlr::loss_deriv(spec, s);
            const double d2 = rlr::loss_second_deriv(spec, s);
            // Even, nonnegative and zero only at zero.
            CHECK(v == doctest::Approx(rlr::loss_value(spec, -s)).epsilon(1e-14));
            if (s == 0.0) CHECK(v == 0.0);
            else CHECK(v > 0.0);
            // Odd, nondecreasing first derivative, positive on the positive axis.
            CHECK(d1 == doctest::Approx(-rlr::loss_deriv(spec, -s)).epsilon(1e-14));
            CHECK(d1 >= last_d1);
            last_d1 = d1;
            if (s > 0.0) CHECK(d1 > 0.0);
            // Bounded derivatives.
            CHECK(std::abs(d1) <= c0 * std::abs(s) + 1e-15);
            CHECK(d2 >= 0.0);
            CHECK(d2 <= c0 + 1e-12);
            if (s > 0.0) CHECK(d2 <= rlr::loss_second_deriv(spec, s - 0.0125) + 1e-12);
        }
    }
}

TEST_CASE("first derivative matches a central difference of the value") {
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (const auto& spec : all_losses()) {
        for (int i = 0; i < 100; ++i) {
            const double s = u(gen);
            const double h = 1e-6;
            const double fd = (rlr::loss_value(spec, s + h) - rlr::loss_value(spec, s - h)) / (2 * h);
            CHECK(std::abs(fd - rlr::loss_deriv(spec, s)) < 1e-6);
        }
    }
}

TEST_CASE("loss_terms and loss_derivs agree with the scalar functions") {
    for (const auto& spec : all_losses()) {
        for (double s : grid()) {
            const auto t = rlr::loss_terms(spec, s);
            CHECK(t.value == doctest::Approx(rlr::loss_value(spec, s)).epsilon(1e-13));
            CHECK(t.d1 == doctest::Approx(rlr::loss_deriv(spec, s)).epsilon(1e-13));
            CHECK(t.d2 == doctest::Approx(rlr::loss_second_deriv(spec, s)).epsilon(1e-13));
            const auto d = rlr::loss_derivs(spec, s);
            CHECK(d.d1 == doctest::Approx(t.d1).epsilon(1e-13));
            CHECK(d.d2 == doctest::Approx(t.d2).epsilon(1e-13));
            CHECK(d.weight == doctest::Approx(rlr::irls_weight(spec, s)).epsilon(1e-12));
        }
    }
}

TEST_CASE("factory and parsing") {
    CHECK_THROWS_AS(LossSpec::huber(0.0), rlr::InputError);
    CHECK_THROWS_AS(LossSpec::logistic(-1.0), rlr::InputError);
    CHECK_THROWS_AS(LossSpec::logistic(std::nan("")), rlr::InputError);
    CHECK(LossSpec::make(LossFamily::LeastSquares, -5.0).family == LossFamily::LeastSquares);
    CHECK(LossSpec::logistic(0.1).curvature_bound() == doctest::Approx(10.0));
    CHECK(LossSpec::huber(1.0).curvature_bound() == 2.0);
    CHECK(rlr::parse_loss_family("leastsquares") == LossFamily::LeastSquares);
    CHECK(rlr::parse_loss_family("ls") == LossFamily::LeastSquares);
    CHECK(rlr::parse_loss_family("huber") == LossFamily::Huber);
    CHECK(rlr::parse_loss_family("logistic") == LossFamily::Logistic);
    CHECK_THROWS_AS(rlr::parse_loss_family("tukey"), rlr::InputError);
    for (auto f : {LossFamily::LeastSquares, LossFamily::Huber, LossFamily::Logistic})
        CHECK(rlr::parse_loss_family(rlr::to_string(f)) == f);
}

TEST_CASE("scale-adaptive tuning constant") {
    std::vector<double> alt;
    for (int i = 0; i < 10; ++i) alt.push_back(i % 2 == 0 ? 1.0 : -1.0);
    CHECK(rlr::scale_adaptive_c(alt, 1.205) == doctest::Approx(1.205 / 0.6745));

    std::mt19937_64 gen(12);
    std::normal_distribution<double> z;
    std::vector<double> draws(10000);
    for (auto& d : draws) d = z(gen);
    CHECK(std::abs(rlr::scale_adaptive_c(draws, 1.205) - 1.205) < 0.05);

    CHECK_THROWS_AS(rlr::scale_adaptive_c(std::vector<double>{0, 0, 0}, 1.205), rlr::DegenerateError);
    CHECK_THROWS_AS(rlr::scale_adaptive_c(std::vector<double>{}, 1.205), rlr::InputError);
    CHECK_THROWS_AS(rlr::scale_adaptive_c(alt, 0.0), rlr::InputError);
}
