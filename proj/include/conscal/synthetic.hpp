#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "conscal/data.hpp"
#include "conscal/metrics.hpp"
#include "conscal/rng.hpp"

namespace conscal::synthetic {

struct OverconfidentSpec {
    std::size_t n_samples = 4000;
    std::size_t n_classes = 10;
    /// Standard deviation of the latent scores that define the true class distribution.
    double spread = 1.5;
    /// Logits are sharpen * log(true probs); values > 1 make the softmax overconfident.
    double sharpen = 3.0;
    std::uint64_t seed = 42;
};

/*!
 * Row i: latent scores u ~ N(0, spread^2 I_K), true probabilities
 * p = softmax(u), label ~ Categorical(p), logits = sharpen * log p.
 * Every row draws from stream(seed, i, kSynthTag).
 */
inline LogitSet make_overconfident(const OverconfidentSpec& spec) {
    const std::size_t k = spec.n_classes;
    std::vector<float> logits(spec.n_samples * k);
    std::vector<std::uint32_t> labels(spec.n_samples);
    std::vector<double> u(k), p(k);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        rng::Stream s(rng::StreamKey{spec.seed, i, rng::kSynthTag});
        for (auto& v : u) {
            v = s.gaussian(0.0, spec.spread);
        }
        metrics::softmax_row(std::span<const double>(u), std::span<double>(p));
        const double r = s.next_unit();
        double acc = 0.0;
        std::uint32_t label = static_cast<std::uint32_t>(k - 1);
        for (std::size_t c = 0; c < k; ++c) {
            acc += p[c];
            if (r < acc) {
                label = static_cast<std::uint32_t>(c);
                break;
            }
        }
        labels[i] = label;
        for (std::size_t c = 0; c < k; ++c) {
            logits[i * k + c] = static_cast<float>(spec.sharpen * std::log(p[c]));
        }
    }
    return {spec.n_samples, k, std::move(logits), std::move(labels)};
}

}  // namespace conscal::synthetic
