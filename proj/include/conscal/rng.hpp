#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>

#include "conscal/error.hpp"

namespace conscal::rng {

/// Stateless SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

/*!
 * SplitMix64 (Steele, Lea, Flood 2014). Reference sequence for seed 0 starts
 * 0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F.
 */
class SplitMix64 {
  public:
    using result_type = std::uint64_t;

    constexpr explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t operator()() noexcept {
        state_ += kGoldenGamma;
        return mix64(state_);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    [[nodiscard]] constexpr std::uint64_t state() const noexcept { return state_; }

  private:
    std::uint64_t state_;
};

// Purpose tags keep the substreams of different consumers apart.
inline constexpr std::uint64_t kNoiseTag = 0x6E6F697365ULL;       // "noise"
inline constexpr std::uint64_t kShuffleTag = 0x73687566666CULL;   // "shuffl"
inline constexpr std::uint64_t kToyTag = 0x746F79ULL;             // "toy"
inline constexpr std::uint64_t kSynthTag = 0x73796E7468ULL;       // "synth"

struct StreamKey {
    std::uint64_t global_seed = 0;
    std::uint64_t sample_index = 0;
    std::uint64_t purpose_tag = 0;
};

/// Combines sample index and purpose tag into one 64-bit word.
constexpr std::uint64_t mix_index_tag(std::uint64_t sample_index, std::uint64_t purpose_tag) noexcept {
    return mix64(mix64(purpose_tag + kGoldenGamma) ^ (sample_index * kGoldenGamma + 1));
}

/// Seed of the substream for `key`: one SplitMix64 step from
/// global_seed XOR mix(sample_index, purpose_tag).
constexpr std::uint64_t stream_seed(const StreamKey& key) noexcept {
    SplitMix64 g(key.global_seed ^ mix_index_tag(key.sample_index, key.purpose_tag));
    return g();
}

/*!
 * A single-consumer random stream with real-valued draws.
 *
 * Uniform reals take the top 53 bits of the next u64. Gaussians use the
 * Box-Muller transform and cache the second variate; a zero uniform is
 * replaced by 2^-53 so the logarithm stays finite.
 */
class Stream {
  public:
    explicit Stream(std::uint64_t seed) noexcept : engine_(seed) {}
    explicit Stream(const StreamKey& key) noexcept : engine_(stream_seed(key)) {}

    std::uint64_t next_u64() noexcept { return engine_(); }

    /// Uniform in [0, 1).
    double next_unit() noexcept {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) {
        if (!(a < b)) {
            throw Error(ErrorKind::InvalidRange, "uniform requires a < b");
        }
        return a + (b - a) * next_unit();
    }

    double gaussian(double mean, double sigma) {
        if (!(sigma >= 0.0)) {
            throw Error(ErrorKind::InvalidRange, "gaussian requires sigma >= 0");
        }
        if (sigma == 0.0) {
            return mean;
        }
        return mean + sigma * standard_normal();
    }

    double standard_normal() noexcept {
        if (cached_) {
            const double z = *cached_;
            cached_.reset();
            return z;
        }
        double u1 = next_unit();
        if (u1 == 0.0) {
            u1 = 0x1.0p-53;
        }
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(theta);
        return r * std::cos(theta);
    }

  private:
    SplitMix64 engine_;
    std::optional<double> cached_;
};

inline Stream stream(const StreamKey& key) noexcept { return Stream(key); }

}  // namespace conscal::rng
