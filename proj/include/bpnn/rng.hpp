#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "bpnn/errors.hpp"
#include "bpnn/tensor.hpp"

namespace bpnn {

/// Seeded pseudo-random generator with a pinned algorithm: the 64-bit state
/// advances by the splitmix64 step, uniform doubles take the top 53 bits, and
/// normal samples come from the Box-Muller transform (pairs, one cached).
/// The sample stream is part of the library's compatibility contract;
/// changing any of it breaks golden tests.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1]; never zero, safe under log().
    double uniform_open() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal sample.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Derives an independent stream; used to decouple shuffling from
    /// initialization so the two can vary separately.
    Rng fork(std::uint64_t salt) {
        Rng r(state_ ^ (0xD1B54A32D192ED03ULL * (salt + 1)));
        return r;
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// I.i.d. zero-mean normal tensor; stddev defaults to 0.1 (variance 0.01).
inline Tensor normal_init(Rng& rng, Shape shape, double stddev = 0.1) {
    if (!(stddev > 0.0)) {
        throw ValueError("normal_init stddev must be positive, got " + std::to_string(stddev));
    }
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
    return t;
}

/// In-place Fisher-Yates shuffle driven by the pinned generator.
template <class T>
void shuffle(Rng& rng, std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace bpnn
