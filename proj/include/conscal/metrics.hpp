#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "conscal/data.hpp"
#include "conscal/error.hpp"

namespace conscal::metrics {

inline constexpr std::size_t kDefaultBins = 15;
inline constexpr double kNllFloor = 1e-12;

/// out = softmax(z / temperature), computed with max subtraction.
template <class T>
void softmax_row(std::span<const T> z, std::span<double> out, double temperature = 1.0) noexcept {
    double zmax = static_cast<double>(z[0]);
    for (T v : z) {
        zmax = std::max(zmax, static_cast<double>(v));
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        out[k] = std::exp((static_cast<double>(z[k]) - zmax) / temperature);
        sum += out[k];
    }
    for (double& p : out) {
        p /= sum;
    }
}

inline ProbSet softmax(const LogitSet& set, double temperature = 1.0) {
    const std::size_t k = set.num_classes();
    std::vector<double> probs(set.size() * k);
    for (std::size_t i = 0; i < set.size(); ++i) {
        softmax_row(set.row(i), std::span<double>(probs.data() + i * k, k), temperature);
    }
    return {set.size(), k, std::move(probs), set.labels()};
}

struct Prediction {
    std::size_t label = 0;
    double confidence = 0.0;
    bool correct = false;
};

/// Top-1 prediction of row i (ties to the lowest class index).
inline Prediction predict(const ProbSet& probs, std::size_t i) noexcept {
    const auto row = probs.row(i);
    const std::size_t k = argmax(row);
    return {k, row[k], k == probs.label(i)};
}

struct BinStats {
    std::size_t index = 0;
    std::size_t count = 0;
    double avg_confidence = 0.0;
    double accuracy = 0.0;
    double lower_edge = 0.0;
    double upper_edge = 0.0;
    /// Set when count == 0; avg_confidence and accuracy are then reported as 0.
    bool empty = true;
};

struct EceResult {
    double value = 0.0;
    std::vector<BinStats> bins;
};

/// Equal-width bin of a confidence in [0,1]; 1.0 lands in the last bin.
inline std::size_t equal_width_bin(double c, std::size_t n_bins) noexcept {
    const auto b = static_cast<std::size_t>(std::floor(c * static_cast<double>(n_bins)));
    return std::min(b, n_bins - 1);
}

inline void require_bins(std::size_t n_bins) {
    if (n_bins < 1) {
        throw Error(ErrorKind::InvalidArgument, "n_bins must be >= 1");
    }
}

inline EceResult ece(const ProbSet& probs, std::size_t n_bins = kDefaultBins) {
    require_bins(n_bins);
    std::vector<double> conf_sum(n_bins, 0.0);
    std::vector<std::size_t> correct(n_bins, 0);
    std::vector<std::size_t> count(n_bins, 0);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const auto p = predict(probs, i);
        const std::size_t b = equal_width_bin(p.confidence, n_bins);
        conf_sum[b] += p.confidence;
        correct[b] += p.correct ? 1 : 0;
        ++count[b];
    }
    EceResult r;
    r.bins.resize(n_bins);
    const auto n = static_cast<double>(probs.size());
    for (std::size_t b = 0; b < n_bins; ++b) {
        BinStats& s = r.bins[b];
        s.index = b;
        s.count = count[b];
        s.lower_edge = static_cast<double>(b) / static_cast<double>(n_bins);
        s.upper_edge = static_cast<double>(b + 1) / static_cast<double>(n_bins);
        s.empty = count[b] == 0;
        if (!s.empty) {
            s.avg_confidence = conf_sum[b] / static_cast<double>(count[b]);
            s.accuracy = static_cast<double>(correct[b]) / static_cast<double>(count[b]);
            r.value += static_cast<double>(count[b]) / n * std::abs(s.accuracy - s.avg_confidence);
        }
    }
    return r;
}

inline std::vector<BinStats> reliability_diagram(const ProbSet& probs, std::size_t n_bins = kDefaultBins) {
    return ece(probs, n_bins).bins;
}

/*!
 * Adaptive (equal-mass) ECE. Samples are ordered by (confidence, correctness,
 * probability row lexicographically) so the value depends only on the multiset
 * of samples. Groups are contiguous; the first N mod M groups take one extra.
 */
inline double adaece(const ProbSet& probs, std::size_t n_bins = kDefaultBins) {
    require_bins(n_bins);
    const std::size_t n = probs.size();
    if (n_bins > n) {
        throw Error(ErrorKind::TooManyBins, std::to_string(n_bins) + " bins for " + std::to_string(n) + " samples");
    }
    std::vector<Prediction> preds(n);
    for (std::size_t i = 0; i < n; ++i) {
        preds[i] = predict(probs, i);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (preds[a].confidence != preds[b].confidence) {
            return preds[a].confidence < preds[b].confidence;
        }
        if (preds[a].correct != preds[b].correct) {
            return !preds[a].correct;
        }
        const auto ra = probs.row(a);
        const auto rb = probs.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    const std::size_t base = n / n_bins;
    const std::size_t extra = n % n_bins;
    double total = 0.0;
    std::size_t pos = 0;
    for (std::size_t b = 0; b < n_bins; ++b) {
        const std::size_t size = base + (b < extra ? 1 : 0);
        double conf = 0.0;
        std::size_t hits = 0;
        for (std::size_t j = pos; j < pos + size; ++j) {
            conf += preds[order[j]].confidence;
            hits += preds[order[j]].correct ? 1 : 0;
        }
        pos += size;
        const auto m = static_cast<double>(size);
        total += m / static_cast<double>(n) * std::abs(static_cast<double>(hits) / m - conf / m);
    }
    return total;
}

/// Classwise ECE: equal-width binning of every class probability, averaged over K.
inline double cece(const ProbSet& probs, std::size_t n_bins = kDefaultBins) {
    require_bins(n_bins);
    const std::size_t n = probs.size();
    const std::size_t k = probs.num_classes();
    std::vector<double> p_sum(n_bins);
    std::vector<std::size_t> hits(n_bins);
    std::vector<std::size_t> count(n_bins);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        std::fill(p_sum.begin(), p_sum.end(), 0.0);
        std::fill(hits.begin(), hits.end(), 0);
        std::fill(count.begin(), count.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const double p = probs.row(i)[j];
            const std::size_t b = equal_width_bin(p, n_bins);
            p_sum[b] += p;
            hits[b] += probs.label(i) == j ? 1 : 0;
            ++count[b];
        }
        for (std::size_t b = 0; b < n_bins; ++b) {
            if (count[b] == 0) {
                continue;
            }
            const auto m = static_cast<double>(count[b]);
            total += m / static_cast<double>(n) * std::abs(static_cast<double>(hits[b]) / m - p_sum[b] / m);
        }
    }
    return total / static_cast<double>(k);
}

/// Mean negative log-likelihood of the labels; probabilities are floored at 1e-12.
inline double nll(const ProbSet& probs) noexcept {
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        total -= std::log(std::max(probs.row(i)[probs.label(i)], kNllFloor));
    }
    return total / static_cast<double>(probs.size());
}

inline double accuracy(const ProbSet& probs) noexcept {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        hits += predict(probs, i).correct ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(probs.size());
}

struct CalibrationReport {
    double ece = 0.0;
    double adaece = 0.0;
    double cece = 0.0;
    double nll = 0.0;
    double accuracy = 0.0;
    std::vector<BinStats> bins;
    std::size_t n_samples = 0;
    std::size_t n_classes = 0;
    std::size_t n_bins = 0;
};

/// All metrics at one bin count. AdaECE falls back to N bins when N < n_bins.
inline CalibrationReport evaluate(const ProbSet& probs, std::size_t n_bins = kDefaultBins) {
    auto e = ece(probs, n_bins);
    CalibrationReport r;
    r.ece = e.value;
    r.bins = std::move(e.bins);
    r.adaece = adaece(probs, std::min(n_bins, probs.size()));
    r.cece = cece(probs, n_bins);
    r.nll = nll(probs);
    r.accuracy = accuracy(probs);
    r.n_samples = probs.size();
    r.n_classes = probs.num_classes();
    r.n_bins = n_bins;
    return r;
}

}  // namespace conscal::metrics
