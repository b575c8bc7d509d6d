#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fegan {

// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Deterministic random source. Every stochastic routine in the library draws
// from an explicitly passed Rng, so a (config, seed, data) triple pins every
// result bit-for-bit. The generators are hand-rolled on top of a fixed-width
// engine; nothing depends on implementation-defined std distribution state.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9E3779B97F4A7C15ull) {}

    std::uint64_t next_u64() {
        // xorshift* with splitmix-style output scrambling.
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545F4914F6CDD1Dull;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw Error("uniform_index: n must be positive");
        const std::uint64_t limit = n * (~std::uint64_t{0} / n);
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // Standard normal via the polar method; the spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Derive an independent stream, e.g. for evaluation side channels.
    Rng split(std::uint64_t salt) const {
        std::uint64_t x = state_ ^ (salt + 0x9E3779B97F4A7C15ull);
        x ^= x >> 30; x *= 0xBF58476D1CE4E5B9ull;
        x ^= x >> 27; x *= 0x94D049BB133111EBull;
        x ^= x >> 31;
        return Rng(x);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// 64-bit FNV-1a, used for stable config hashes in run artifacts.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

inline bool all_finite(std::span<const double> xs) {
    for (double x : xs)
        if (!std::isfinite(x)) return false;
    return true;
}

namespace stats {

inline double mean(std::span<const double> xs) {
    if (xs.empty()) throw Error("mean of empty range");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Unbiased (n-1) sample standard deviation.
inline double sample_std(std::span<const double> xs) {
    if (xs.size() < 2) throw Error("sample_std needs at least 2 values");
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) throw Error("median of empty range");
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// Nearest-rank quantile on a copy; p in [0, 1].
inline double quantile(std::vector<double> xs, double p) {
    if (xs.empty()) throw Error("quantile of empty range");
    std::sort(xs.begin(), xs.end());
    const auto n = static_cast<double>(xs.size());
    auto k = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
    if (k > 0) --k;
    return xs[std::min(k, xs.size() - 1)];
}

} // namespace stats
} // namespace fegan
