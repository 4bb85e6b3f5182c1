#include "peee/random.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>

namespace peee {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

double normal_quantile(double p) {
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, p);
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

RngStream::RngStream(std::uint64_t seed) noexcept : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& word : s_) {
        x = mix64(x);
        word = x;
    }
}

RngStream RngStream::derive(std::uint64_t index) const noexcept {
    return RngStream(mix64(seed_ ^ mix64(index + 0x5851f42d4c957f2dULL)));
}

std::uint64_t RngStream::next_u64() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngStream::uniform() noexcept {
    // 53 random bits, shifted off zero by half a step.
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() noexcept {
    return normal_quantile(uniform());
}

double RngStream::student_t(int df) noexcept {
    const double z = normal();
    double chi2 = 0.0;
    for (int k = 0; k < df; ++k) {
        const double g = normal();
        chi2 += g * g;
    }
    return z / std::sqrt(chi2 / df);
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept {
    // Lemire's nearly divisionless method with rejection.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

}  // namespace peee
