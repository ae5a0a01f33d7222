#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "conscal/calibrators.hpp"
#include "conscal/metrics.hpp"

namespace conscal::tuner {

inline constexpr std::size_t kDefaultTuningPerturbations = 256;

/// 0.05 * 1.35^j for j = 0..24 (about 0.05 to 67).
inline std::vector<double> default_epsilons() {
    std::vector<double> eps;
    for (int j = 0; j <= 24; ++j) {
        eps.push_back(0.05 * std::pow(1.35, j));
    }
    return eps;
}

struct TuneGrid {
    std::vector<NoiseKind> kinds{NoiseKind::Uniform, NoiseKind::Gaussian};
    std::vector<double> epsilons = default_epsilons();
    std::size_t n_bins = metrics::kDefaultBins;
    std::size_t t_perturbations = kDefaultTuningPerturbations;
    std::uint64_t seed = kDefaultSeed;
    Aggregation aggregation = Aggregation::Consistency;

    void validate() const {
        if (kinds.empty() || epsilons.empty()) {
            throw Error(ErrorKind::InvalidArgument, "tuning grid needs at least one kind and one epsilon");
        }
        for (std::size_t i = 0; i < epsilons.size(); ++i) {
            if (!(epsilons[i] > 0.0) || !std::isfinite(epsilons[i])) {
                throw Error(ErrorKind::InvalidRange, "tuning epsilons must be finite and > 0");
            }
            if (i > 0 && !(epsilons[i] > epsilons[i - 1])) {
                throw Error(ErrorKind::InvalidArgument, "tuning epsilons must be strictly ascending");
            }
        }
        if (t_perturbations < 1 || n_bins < 1) {
            throw Error(ErrorKind::InvalidArgument, "tuning needs T >= 1 and n_bins >= 1");
        }
    }

    [[nodiscard]] ConsistencyConfig config_for(const NoiseSpec& noise) const {
        return {noise, t_perturbations, aggregation, seed};
    }
};

struct TracePoint {
    NoiseSpec noise;
    double val_ece = 0.0;
};

struct TuneResult {
    NoiseSpec best;
    double val_ece = 0.0;
    std::vector<TracePoint> trace;
};

/// Grid search for the noise kind and strength with the lowest validation
/// ECE. Ties keep the earlier kind, then the smaller epsilon.
inline TuneResult tune(const LogitSet& validation, const TuneGrid& grid, unsigned threads = 1) {
    grid.validate();
    TuneResult result;
    bool first = true;
    for (NoiseKind kind : grid.kinds) {
        for (double eps : grid.epsilons) {
            const NoiseSpec noise{kind, eps};
            const auto probs = cc_calibrate(validation, grid.config_for(noise), threads);
            const double value = metrics::ece(probs, grid.n_bins).value;
            result.trace.push_back({noise, value});
            if (first || value < result.val_ece) {
                result.best = noise;
                result.val_ece = value;
                first = false;
            }
        }
    }
    return result;
}

}  // namespace conscal::tuner
