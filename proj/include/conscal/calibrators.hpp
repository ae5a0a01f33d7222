#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "conscal/data.hpp"
#include "conscal/error.hpp"
#include "conscal/metrics.hpp"
#include "conscal/parallel.hpp"
#include "conscal/rng.hpp"

namespace conscal {

enum class NoiseKind { Uniform, Gaussian };

inline std::string_view to_string(NoiseKind kind) noexcept {
    return kind == NoiseKind::Uniform ? "uniform" : "gaussian";
}

inline NoiseKind parse_noise_kind(std::string_view name) {
    if (name == "uniform" || name == "U") {
        return NoiseKind::Uniform;
    }
    if (name == "gaussian" || name == "G") {
        return NoiseKind::Gaussian;
    }
    throw Error(ErrorKind::InvalidArgument, "unknown noise kind '" + std::string(name) + "'");
}

/// Per-coordinate i.i.d. noise: U(-strength, strength) or N(0, strength^2).
struct NoiseSpec {
    NoiseKind kind = NoiseKind::Gaussian;
    double strength = 0.0;

    void validate() const {
        if (!std::isfinite(strength) || strength < 0.0) {
            throw Error(ErrorKind::InvalidRange, "noise strength must be finite and >= 0");
        }
    }

    double draw(rng::Stream& s) const {
        if (strength == 0.0) {
            return 0.0;
        }
        return kind == NoiseKind::Uniform ? s.uniform(-strength, strength) : s.gaussian(0.0, strength);
    }

    friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

enum class Aggregation { Consistency, MeanSoftmax };

inline std::string_view to_string(Aggregation a) noexcept {
    return a == Aggregation::Consistency ? "consistency" : "mean_softmax";
}

inline Aggregation parse_aggregation(std::string_view name) {
    if (name == "consistency") {
        return Aggregation::Consistency;
    }
    if (name == "mean_softmax" || name == "mean") {
        return Aggregation::MeanSoftmax;
    }
    throw Error(ErrorKind::InvalidArgument, "unknown aggregation '" + std::string(name) + "'");
}

inline constexpr std::size_t kDefaultPerturbations = 1000;
inline constexpr std::uint64_t kDefaultSeed = 42;

struct ConsistencyConfig {
    NoiseSpec noise;
    std::size_t t_perturbations = kDefaultPerturbations;
    Aggregation aggregation = Aggregation::Consistency;
    std::uint64_t seed = kDefaultSeed;

    void validate() const {
        noise.validate();
        if (t_perturbations < 1) {
            throw Error(ErrorKind::InvalidArgument, "number of perturbations must be >= 1");
        }
    }
};

namespace detail {

/*!
 * Calibrated row for sample `index`. Noise for perturbation t and class k is
 * the (t*K + k)-th draw of stream(seed, index, kNoiseTag). Votes are integer
 * counts divided by T once at the end.
 */
inline void consistency_row(std::span<const float> z, std::size_t index, const ConsistencyConfig& cfg,
                            std::span<double> out) {
    const std::size_t k = z.size();
    rng::Stream s(rng::StreamKey{cfg.seed, index, rng::kNoiseTag});
    std::vector<double> perturbed(k);
    const auto t_total = static_cast<double>(cfg.t_perturbations);

    if (cfg.aggregation == Aggregation::Consistency) {
        std::vector<std::uint64_t> votes(k, 0);
        for (std::size_t t = 0; t < cfg.t_perturbations; ++t) {
            for (std::size_t c = 0; c < k; ++c) {
                perturbed[c] = static_cast<double>(z[c]) + cfg.noise.draw(s);
            }
            ++votes[argmax(std::span<const double>(perturbed))];
        }
        for (std::size_t c = 0; c < k; ++c) {
            out[c] = static_cast<double>(votes[c]) / t_total;
        }
        return;
    }

    std::vector<double> sm(k);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t t = 0; t < cfg.t_perturbations; ++t) {
        for (std::size_t c = 0; c < k; ++c) {
            perturbed[c] = static_cast<double>(z[c]) + cfg.noise.draw(s);
        }
        metrics::softmax_row(std::span<const double>(perturbed), std::span<double>(sm));
        for (std::size_t c = 0; c < k; ++c) {
            out[c] += sm[c];
        }
    }
    for (double& p : out) {
        p /= t_total;
    }
}

}  // namespace detail

/// Consistency Calibration on logits. The result does not depend on `threads`.
inline ProbSet cc_calibrate(const LogitSet& set, const ConsistencyConfig& cfg, unsigned threads = 1) {
    cfg.validate();
    const std::size_t k = set.num_classes();
    std::vector<double> probs(set.size() * k);
    parallel_for(set.size(), threads, [&](std::size_t i) {
        detail::consistency_row(set.row(i), i, cfg, std::span<double>(probs.data() + i * k, k));
    });
    return {set.size(), k, std::move(probs), set.labels()};
}

class Temperature {
  public:
    static constexpr double kMin = 0.01;
    static constexpr double kMax = 100.0;

    explicit Temperature(double t) : t_(t) {
        if (!(t >= kMin && t <= kMax)) {
            throw Error(ErrorKind::InvalidRange, "temperature must lie in [0.01, 100]");
        }
    }

    [[nodiscard]] double value() const noexcept { return t_; }

  private:
    double t_;
};

/// Validation NLL of softmax(z / t), via log-sum-exp.
inline double temperature_nll(const LogitSet& set, double t) noexcept {
    double total = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto z = set.row(i);
        const double zmax = static_cast<double>(*std::max_element(z.begin(), z.end()));
        double sum = 0.0;
        for (float v : z) {
            sum += std::exp((static_cast<double>(v) - zmax) / t);
        }
        total += std::log(sum) - (static_cast<double>(z[set.label(i)]) - zmax) / t;
    }
    return total / static_cast<double>(set.size());
}

/*!
 * Temperature scaling fit: minimize validation NLL over the grid
 * t = 0.05 j (j = 1..200), then refine with 40 golden-section steps inside
 * [best - 0.05, best + 0.05] clipped to the grid range.
 */
inline Temperature ts_fit(const LogitSet& validation) {
    constexpr double step = 0.05;
    constexpr int grid = 200;
    double best_t = step;
    double best_nll = temperature_nll(validation, best_t);
    for (int j = 2; j <= grid; ++j) {
        const double t = step * j;
        const double v = temperature_nll(validation, t);
        if (v < best_nll) {
            best_nll = v;
            best_t = t;
        }
    }

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = std::max(step, best_t - step);
    double hi = std::min(step * grid, best_t + step);
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = temperature_nll(validation, x1);
    double f2 = temperature_nll(validation, x2);
    for (int it = 0; it < 40; ++it) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = temperature_nll(validation, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = temperature_nll(validation, x2);
        }
    }
    const double refined = 0.5 * (lo + hi);
    const double t = temperature_nll(validation, refined) <= best_nll ? refined : best_t;
    return Temperature(std::clamp(t, Temperature::kMin, Temperature::kMax));
}

inline ProbSet ts_apply(const LogitSet& set, Temperature temp) { return metrics::softmax(set, temp.value()); }

struct LocalReport {
    std::size_t row = 0;
    std::uint32_t label = 0;
    std::vector<double> vanilla_probs;
    std::size_t vanilla_prediction = 0;
    double vanilla_confidence = 0.0;
    std::vector<double> consistency;
    std::size_t cc_prediction = 0;
    double cc_confidence = 0.0;
};

/// Vanilla and CC view of a single sample; matches row `row` of cc_calibrate(set, cfg).
inline LocalReport cc_local_report(const LogitSet& set, const ConsistencyConfig& cfg, std::size_t row) {
    if (row >= set.size()) {
        throw Error(ErrorKind::IndexOutOfRange, "row " + std::to_string(row) + " of " + std::to_string(set.size()));
    }
    cfg.validate();
    const std::size_t k = set.num_classes();
    LocalReport r;
    r.row = row;
    r.label = set.label(row);
    r.vanilla_probs.resize(k);
    metrics::softmax_row(set.row(row), std::span<double>(r.vanilla_probs));
    r.vanilla_prediction = argmax(std::span<const double>(r.vanilla_probs));
    r.vanilla_confidence = r.vanilla_probs[r.vanilla_prediction];
    r.consistency.resize(k);
    detail::consistency_row(set.row(row), row, cfg, std::span<double>(r.consistency));
    r.cc_prediction = argmax(std::span<const double>(r.consistency));
    r.cc_confidence = r.consistency[r.cc_prediction];
    return r;
}

/// Order statistics with linear interpolation between closest ranks.
struct FiveNumber {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

inline double quantile_sorted(std::span<const double> sorted, double q) noexcept {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline FiveNumber five_number(std::vector<double> values) {
    if (values.empty()) {
        return {};
    }
    std::sort(values.begin(), values.end());
    return {values.front(), quantile_sorted(values, 0.25), quantile_sorted(values, 0.5),
            quantile_sorted(values, 0.75), values.back()};
}

struct GapGroup {
    std::size_t size = 0;
    bool empty = true;
    FiveNumber max_logit;
    FiveNumber second_logit;
    FiveNumber gap;
};

struct GapReport {
    double threshold = 0.99;
    GapGroup correct;
    GapGroup incorrect;
};

inline constexpr double kDefaultGapThreshold = 0.99;

/// Top-two logit statistics of predictions with vanilla confidence above the
/// threshold, split by correctness.
inline GapReport diagnose_logit_gap(const LogitSet& set, double conf_threshold = kDefaultGapThreshold) {
    if (!(conf_threshold > 0.0 && conf_threshold < 1.0)) {
        throw Error(ErrorKind::InvalidRange, "confidence threshold must lie in (0,1)");
    }
    struct Collected {
        std::vector<double> top, second, gap;
    };
    Collected correct, incorrect;
    std::vector<double> p(set.num_classes());
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto z = set.row(i);
        metrics::softmax_row(z, std::span<double>(p));
        const std::size_t pred = argmax(std::span<const double>(p));
        if (!(p[pred] > conf_threshold)) {
            continue;
        }
        std::vector<double> sorted(z.begin(), z.end());
        std::partial_sort(sorted.begin(), sorted.begin() + 2, sorted.end(), std::greater<>());
        Collected& g = pred == set.label(i) ? correct : incorrect;
        g.top.push_back(sorted[0]);
        g.second.push_back(sorted[1]);
        g.gap.push_back(sorted[0] - sorted[1]);
    }
    auto summarize = [](Collected& c) {
        GapGroup g;
        g.size = c.top.size();
        g.empty = g.size == 0;
        g.max_logit = five_number(std::move(c.top));
        g.second_logit = five_number(std::move(c.second));
        g.gap = five_number(std::move(c.gap));
        return g;
    };
    return {conf_threshold, summarize(correct), summarize(incorrect)};
}

}  // namespace conscal
