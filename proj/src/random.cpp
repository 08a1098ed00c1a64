#include "robustlr/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "robustlr/error.hpp"

namespace rlr {

std::uint64_t CounterRng::below(std::uint64_t bound) {
    if (bound == 0) throw InputError("CounterRng::below: bound must be positive");
    const std::uint64_t limit = max() - (max() % bound);
    std::uint64_t draw = (*this)();
    while (draw >= limit) draw = (*this)();
    return draw % bound;
}

double CounterRng::normal() {
    for (;;) {
        const double u = 2.0 * uniform() - 1.0;
        const double v = 2.0 * uniform() - 1.0;
        const double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
}

std::vector<std::size_t> sample_without_replacement(CounterRng& rng, std::size_t n, std::size_t k) {
    if (k > n) throw InputError("sample_without_replacement: k exceeds n");
    // Partial Fisher-Yates over an index table.
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

} // namespace rlr
