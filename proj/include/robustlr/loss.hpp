#pragma once

#include <cmath>
#include <span>
#include <string>
#include <string_view>

namespace rlr {

enum class LossFamily { LeastSquares, Huber, Logistic };

// A loss L from the family with tuning constant c (unused for least squares).
//   LeastSquares  L(s) = s^2
//   Huber         L(s) = s^2 / 2 for |s| <= c, c|s| - c^2 / 2 otherwise
//   Logistic      L(s) = c log cosh(s / c)
struct LossSpec {
    LossFamily family = LossFamily::Logistic;
    double c = 0.1;

    // Validates c > 0 for the robust families.
    static LossSpec make(LossFamily family, double c = 0.1);
    static LossSpec least_squares() { return make(LossFamily::LeastSquares, 1.0); }
    static LossSpec huber(double c) { return make(LossFamily::Huber, c); }
    static LossSpec logistic(double c) { return make(LossFamily::Logistic, c); }

    // Bound C0 with |L'(x)| <= C0 |x| and L''(x) <= C0.
    [[nodiscard]] double curvature_bound() const;
};

std::string_view to_string(LossFamily family);
LossFamily parse_loss_family(std::string_view name);

double loss_value(const LossSpec& spec, double s);
double loss_deriv(const LossSpec& spec, double s);
double loss_second_deriv(const LossSpec& spec, double s);

// L'(s) / s, continuously extended at s = 0 (2 for least squares, 1 for
// Huber, 1/c for logistic). Used as the IRLS weight.
double irls_weight(const LossSpec& spec, double s);

// Value and both derivatives from a single transcendental evaluation.
struct LossTerms {
    double value;
    double d1;
    double d2;
};
LossTerms loss_terms(const LossSpec& spec, double s);

// L'(s), L''(s) and the IRLS weight L'(s)/s without evaluating L itself.
// This is the solver's inner loop, hence inline.
struct LossDerivs {
    double d1;
    double d2;
    double weight;
};

inline LossDerivs loss_derivs(const LossSpec& spec, double s) {
    switch (spec.family) {
    case LossFamily::LeastSquares: return {2.0 * s, 2.0, 2.0};
    case LossFamily::Huber: {
        const double a = std::abs(s);
        if (a <= spec.c) return {s, a < spec.c ? 1.0 : 0.0, 1.0};
        return {std::copysign(spec.c, s), 0.0, spec.c / a};
    }
    case LossFamily::Logistic: {
        const double x = std::abs(s) / spec.c;
        const double e = std::exp(-2.0 * x);
        const double inv = 1.0 / (1.0 + e);
        const double t = (1.0 - e) * inv;
        const double d2 = 4.0 * e * inv * inv / spec.c;
        // tanh(x)/|s| loses accuracy for tiny x; the limit there is 1/c.
        const double w = x < 1e-6 ? (1.0 - x * x / 3.0) / spec.c : t / std::abs(s);
        return {std::copysign(t, s), d2, w};
    }
    }
    return {0.0, 0.0, 0.0};
}

// multiplier * MAD(residuals) / 0.6745, with MAD taken about the median.
// Throws DegenerateError when the scale is zero.
double scale_adaptive_c(std::span<const double> residuals, double multiplier);

} // namespace rlr
