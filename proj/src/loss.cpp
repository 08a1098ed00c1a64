#include "robustlr/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "robustlr/error.hpp"
#include "robustlr/numkit.hpp"

namespace rlr {

namespace {

constexpr double kLog2 = 0.69314718055994530942;

// For x = |s| / c, with e = exp(-2x):
//   log cosh x = x + log1p(e) - log 2
//   tanh x     = (1 - e) / (1 + e)
//   sech^2 x   = 4e / (1 + e)^2
LossTerms logistic_terms(double c, double s) {
    const double x = std::abs(s) / c;
    const double e = std::exp(-2.0 * x);
    const double t = (1.0 - e) / (1.0 + e);
    return {c * (x + std::log1p(e) - kLog2), std::copysign(t, s), 4.0 * e / ((1.0 + e) * (1.0 + e)) / c};
}

} // namespace

LossSpec LossSpec::make(LossFamily family, double c) {
    if (family != LossFamily::LeastSquares && !(c > 0.0 && std::isfinite(c)))
        throw InputError("loss tuning constant c must be positive and finite");
    return LossSpec{family, family == LossFamily::LeastSquares ? 1.0 : c};
}

double LossSpec::curvature_bound() const {
    switch (family) {
    case LossFamily::LeastSquares: return 2.0;
    case LossFamily::Huber: return std::max(2.0, 1.0 / c);
    case LossFamily::Logistic: return std::max(2.0, 1.0 / c);
    }
    return 2.0;
}

std::string_view to_string(LossFamily family) {
    switch (family) {
    case LossFamily::LeastSquares: return "leastsquares";
    case LossFamily::Huber: return "huber";
    case LossFamily::Logistic: return "logistic";
    }
    return "unknown";
}

LossFamily parse_loss_family(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (lower == "leastsquares" || lower == "ls" || lower == "least-squares" || lower == "l2") return LossFamily::LeastSquares;
    if (lower == "huber") return LossFamily::Huber;
    if (lower == "logistic" || lower == "logcosh") return LossFamily::Logistic;
    throw InputError("unknown loss family '" + std::string(name) + "'");
}

LossTerms loss_terms(const LossSpec& spec, double s) {
    switch (spec.family) {
    case LossFamily::LeastSquares: return {s * s, 2.0 * s, 2.0};
    case LossFamily::Huber: {
        const double a = std::abs(s);
        if (a <= spec.c) return {0.5 * s * s, s, a < spec.c ? 1.0 : 0.0};
        return {spec.c * a - 0.5 * spec.c * spec.c, std::copysign(spec.c, s), 0.0};
    }
    case LossFamily::Logistic: return logistic_terms(spec.c, s);
    }
    return {0.0, 0.0, 0.0};
}

double loss_value(const LossSpec& spec, double s) { return loss_terms(spec, s).value; }

double loss_deriv(const LossSpec& spec, double s) {
    switch (spec.family) {
    case LossFamily::LeastSquares: return 2.0 * s;
    case LossFamily::Huber: return std::clamp(s, -spec.c, spec.c);
    case LossFamily::Logistic: return std::tanh(s / spec.c);
    }
    return 0.0;
}

double loss_second_deriv(const LossSpec& spec, double s) { return loss_terms(spec, s).d2; }

double irls_weight(const LossSpec& spec, double s) {
    switch (spec.family) {
    case LossFamily::LeastSquares: return 2.0;
    case LossFamily::Huber: {
        const double a = std::abs(s);
        return a <= spec.c ? 1.0 : spec.c / a;
    }
    case LossFamily::Logistic: {
        const double x = s / spec.c;
        if (std::abs(x) < 1e-8) return 1.0 / spec.c;
        return std::tanh(x) / s;
    }
    }
    return 0.0;
}

double scale_adaptive_c(std::span<const double> residuals, double multiplier) {
    if (residuals.empty()) throw InputError("scale_adaptive_c: no residuals");
    if (!(multiplier > 0.0)) throw InputError("scale_adaptive_c: multiplier must be positive");
    const double center = median(residuals);
    std::vector<double> dev(residuals.size());
    std::transform(residuals.begin(), residuals.end(), dev.begin(), [center](double r) { return std::abs(r - center); });
    const double mad = median(dev);
    if (!(mad > 0.0)) throw DegenerateError("scale_adaptive_c: residual scale is zero");
    return multiplier * mad / 0.6745;
}

} // namespace rlr
