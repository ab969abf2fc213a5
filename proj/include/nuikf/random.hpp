#pragma once

#include <cmath>
#include <cstdint>

#include "nuikf/spd.hpp"

namespace nuikf {

/// Deterministic random stream with splittable sub-streams.
///
/// The generator is splitmix64; Gaussian variates come from Box-Muller on
/// top of it. Identical seeds give bitwise identical sequences, and
/// split(i) derives an independent stream from the original seed and the
/// stream index alone, so results do not depend on how work is scheduled
/// across threads.
class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    [[nodiscard]] std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in the open interval (0, 1).
    double next_uniform() {
        for (;;) {
            const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
            if (u > 0.0) {
                return u;
            }
        }
    }

    /// Standard normal variate. Box-Muller produces pairs; the second half
    /// is cached, so draws alternate between two and zero uniform draws.
    double next_gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(angle);
        has_cached_ = true;
        return r * std::cos(angle);
    }

    [[nodiscard]] Vector gaussian(Index k) {
        Vector z(k);
        for (Index i = 0; i < k; ++i) {
            z(i) = next_gaussian();
        }
        return z;
    }

    /// Independent sub-stream derived from the original seed and `stream`.
    /// Does not advance or depend on this stream's position.
    [[nodiscard]] SeededRng split(std::uint64_t stream) const {
        std::uint64_t z = seed_ ^ (0x9E3779B97F4A7C15ULL * (stream + 0x632BE59BD9B4E019ULL));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return SeededRng(z ^ (z >> 31));
    }

  private:
    std::uint64_t seed_;
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// Sample from N(mean, cov) as mean + L * z with L the Cholesky factor.
[[nodiscard]] inline Vector draw_gaussian(SeededRng& rng, const Vector& mean,
                                          const SpdMatrix& cov) {
    if (mean.size() != cov.dim()) {
        throw DimensionMismatch("draw_gaussian: mean and covariance disagree");
    }
    return mean + cov.cholesky() * rng.gaussian(cov.dim());
}

}  // namespace nuikf
