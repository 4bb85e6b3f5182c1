#pragma once

#include <cstdint>

namespace peee {

/// SplitMix64 finalizer; used to derive independent seeds from counters.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Standard normal quantile, accurate to a few ulps over (0, 1).
double normal_quantile(double p);

/// Standard normal CDF.
double normal_cdf(double x);

/// Deterministic random stream.
///
/// The engine is xoshiro256**; every variate is produced by code in this
/// file so streams reproduce bit-for-bit across standard library vendors.
/// Child streams are derived from (seed, index) through a counter hash, so a
/// replication's stream depends only on its index and not on scheduling.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0) noexcept;

    std::uint64_t seed() const noexcept { return seed_; }

    /// Independent stream keyed by `index`.
    RngStream derive(std::uint64_t index) const noexcept;

    std::uint64_t next_u64() noexcept;

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    double normal() noexcept;
    bool bernoulli(double p) noexcept { return uniform() < p; }
    /// Student t via Z / sqrt(chi2_df / df); `df` must be a positive integer.
    double student_t(int df) noexcept;
    /// Index in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept;

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
};

}  // namespace peee
