#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "conscal/error.hpp"
#include "conscal/parallel.hpp"
#include "conscal/rng.hpp"

// Two-class 2-D Gaussian world with known posterior, used to compare
// confidence-neighborhood estimators against perturbation consistency.
namespace conscal::toy {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

/// Symmetric 2x2 matrix [[xx, xy], [xy, yy]].
struct Sym2 {
    double xx = 1.0;
    double xy = 0.0;
    double yy = 1.0;
};

/// Lower Cholesky factor [[l11, 0], [l21, l22]].
struct Cholesky2 {
    double l11 = 1.0;
    double l21 = 0.0;
    double l22 = 1.0;
};

inline Cholesky2 cholesky(const Sym2& s) {
    if (!(s.xx > 0.0)) {
        throw Error(ErrorKind::NotPositiveDefinite, "covariance is not positive definite");
    }
    const double l11 = std::sqrt(s.xx);
    const double l21 = s.xy / l11;
    const double rem = s.yy - l21 * l21;
    if (!(rem > 0.0) || !std::isfinite(rem)) {
        throw Error(ErrorKind::NotPositiveDefinite, "covariance is not positive definite");
    }
    return {l11, l21, std::sqrt(rem)};
}

struct ToyWorld {
    Vec2 mu0{-1.0, 0.0};
    Vec2 mu1{1.0, 0.0};
    Sym2 sigma{};
    std::size_t n_train = 20000;  // per class
    std::size_t n_test = 2000;    // per class
    std::uint64_t seed = 42;
};

struct LabeledPoint {
    Vec2 x;
    std::uint32_t label = 0;
};

struct ToyData {
    std::vector<LabeledPoint> train;
    std::vector<LabeledPoint> test;
};

/// Point j of the world (train points first, then test; class 0 before class 1
/// in each) is drawn from its own stream(seed, j, kToyTag).
inline ToyData generate(const ToyWorld& world) {
    const Cholesky2 chol = cholesky(world.sigma);
    std::uint64_t index = 0;
    auto draw = [&](std::size_t per_class) {
        std::vector<LabeledPoint> out;
        out.reserve(2 * per_class);
        for (std::uint32_t cls = 0; cls < 2; ++cls) {
            const Vec2& mu = cls == 0 ? world.mu0 : world.mu1;
            for (std::size_t i = 0; i < per_class; ++i) {
                rng::Stream s(rng::StreamKey{world.seed, index++, rng::kToyTag});
                const double u = s.standard_normal();
                const double v = s.standard_normal();
                out.push_back({{mu.x + chol.l11 * u, mu.y + chol.l21 * u + chol.l22 * v}, cls});
            }
        }
        return out;
    };
    ToyData data;
    data.train = draw(world.n_train);
    data.test = draw(world.n_test);
    return data;
}

namespace detail {

/// Squared Mahalanobis distance of d under covariance s (s assumed PD).
inline double mahalanobis2(const Sym2& s, Vec2 d) noexcept {
    const double det = s.xx * s.yy - s.xy * s.xy;
    return (s.yy * d.x * d.x - 2.0 * s.xy * d.x * d.y + s.xx * d.y * d.y) / det;
}

inline double sigmoid(double a) noexcept {
    if (a >= 0.0) {
        return 1.0 / (1.0 + std::exp(-a));
    }
    const double e = std::exp(a);
    return e / (1.0 + e);
}

}  // namespace detail

/// Posterior of class 0, p0(x) / (p0(x) + p1(x)), evaluated in log space.
inline double eta(const ToyWorld& world, Vec2 x) {
    cholesky(world.sigma);
    const double m0 = detail::mahalanobis2(world.sigma, {x.x - world.mu0.x, x.y - world.mu0.y});
    const double m1 = detail::mahalanobis2(world.sigma, {x.x - world.mu1.x, x.y - world.mu1.y});
    // log p0 - log p1; normalizers cancel for a shared covariance.
    return detail::sigmoid(0.5 * (m1 - m0));
}

/// Logistic model: class-1 probability sigmoid(w.x + b).
struct ToyModel {
    Vec2 w{};
    double b = 0.0;

    [[nodiscard]] double score(Vec2 x) const noexcept { return w.x * x.x + w.y * x.y + b; }
    [[nodiscard]] std::uint32_t predict(Vec2 x) const noexcept { return score(x) > 0.0 ? 1U : 0U; }
    [[nodiscard]] double confidence(Vec2 x) const noexcept {
        const double p1 = detail::sigmoid(score(x));
        return std::max(p1, 1.0 - p1);
    }
};

struct TrainConfig {
    std::size_t epochs = 500;
    double learning_rate = 1.0;
};

/// Full-batch gradient descent on the mean logistic loss from w = 0, b = 0.
inline ToyModel train_model(std::span<const LabeledPoint> train, const TrainConfig& cfg = {}) {
    if (train.empty()) {
        throw Error(ErrorKind::InvalidArgument, "training set is empty");
    }
    ToyModel m;
    const auto n = static_cast<double>(train.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double gx = 0.0, gy = 0.0, gb = 0.0;
        for (const auto& p : train) {
            const double r = detail::sigmoid(m.score(p.x)) - static_cast<double>(p.label);
            gx += r * p.x.x;
            gy += r * p.x.y;
            gb += r;
        }
        m.w.x -= cfg.learning_rate * gx / n;
        m.w.y -= cfg.learning_rate * gy / n;
        m.b -= cfg.learning_rate * gb / n;
    }
    return m;
}

/// Model confidence and correctness of every pool point, computed once.
class ConfidencePool {
  public:
    ConfidencePool(std::span<const LabeledPoint> pool, const ToyModel& model) {
        if (pool.empty()) {
            throw Error(ErrorKind::InvalidArgument, "neighbor pool is empty");
        }
        conf_.reserve(pool.size());
        correct_.reserve(pool.size());
        for (const auto& p : pool) {
            conf_.push_back(model.confidence(p.x));
            correct_.push_back(model.predict(p.x) == p.label ? 1 : 0);
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return conf_.size(); }
    [[nodiscard]] double confidence(std::size_t i) const noexcept { return conf_[i]; }
    [[nodiscard]] int correct(std::size_t i) const noexcept { return correct_[i]; }

  private:
    std::vector<double> conf_;
    std::vector<int> correct_;
};

/// Mean correctness over pool points whose confidence differs from
/// `target_conf` by less than delta.
inline double estimate_conf_gap(double target_conf, const ConfidencePool& pool, double delta) {
    std::size_t members = 0, hits = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (std::abs(pool.confidence(i) - target_conf) < delta) {
            ++members;
            hits += static_cast<std::size_t>(pool.correct(i));
        }
    }
    if (members == 0) {
        throw Error(ErrorKind::EmptyNeighborhood, "no pool point within confidence gap");
    }
    return static_cast<double>(hits) / static_cast<double>(members);
}

inline double estimate_conf_gap(Vec2 target, std::span<const LabeledPoint> pool, const ToyModel& model,
                                double delta) {
    return estimate_conf_gap(model.confidence(target), ConfidencePool(pool, model), delta);
}

/// Mean correctness over the k closest pool points in confidence, for every k
/// in `ks`. Distance ties go to the lower pool index.
inline std::vector<double> estimate_topk(double target_conf, const ConfidencePool& pool,
                                         std::span<const std::size_t> ks) {
    std::size_t k_max = 0;
    for (std::size_t k : ks) {
        if (k < 1 || k > pool.size()) {
            throw Error(ErrorKind::KOutOfRange, "k=" + std::to_string(k) + " for pool of " +
                                                    std::to_string(pool.size()));
        }
        k_max = std::max(k_max, k);
    }
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto closer = [&](std::size_t a, std::size_t b) {
        const double da = std::abs(pool.confidence(a) - target_conf);
        const double db = std::abs(pool.confidence(b) - target_conf);
        return da != db ? da < db : a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_max), order.end(), closer);
    std::vector<std::size_t> prefix(k_max + 1, 0);
    for (std::size_t j = 0; j < k_max; ++j) {
        prefix[j + 1] = prefix[j] + static_cast<std::size_t>(pool.correct(order[j]));
    }
    std::vector<double> out;
    out.reserve(ks.size());
    for (std::size_t k : ks) {
        out.push_back(static_cast<double>(prefix[k]) / static_cast<double>(k));
    }
    return out;
}

inline double estimate_topk(Vec2 target, std::span<const LabeledPoint> pool, const ToyModel& model,
                            std::size_t k) {
    const std::size_t ks[] = {k};
    return estimate_topk(model.confidence(target), ConfidencePool(pool, model), ks).front();
}

/*!
 * Fraction of T perturbed inputs target + N(0, eps^2 I) on which the model
 * keeps the target's predicted label. Noise comes from
 * stream(seed, stream_index, kNoiseTag), x then y per perturbation.
 */
inline double estimate_consistency(Vec2 target, const ToyModel& model, double eps, std::size_t t_perturbations,
                                   std::uint64_t seed, std::uint64_t stream_index = 0) {
    if (t_perturbations < 1) {
        throw Error(ErrorKind::InvalidArgument, "number of perturbations must be >= 1");
    }
    if (!(eps >= 0.0) || !std::isfinite(eps)) {
        throw Error(ErrorKind::InvalidRange, "noise strength must be finite and >= 0");
    }
    const std::uint32_t pred = model.predict(target);
    rng::Stream s(rng::StreamKey{seed, stream_index, rng::kNoiseTag});
    std::size_t same = 0;
    for (std::size_t t = 0; t < t_perturbations; ++t) {
        const double dx = s.gaussian(0.0, eps);
        const double dy = s.gaussian(0.0, eps);
        same += model.predict({target.x + dx, target.y + dy}) == pred ? 1 : 0;
    }
    return static_cast<double>(same) / static_cast<double>(t_perturbations);
}

/// Ground-truth probability of the class the model predicts at x.
inline double truth_confidence(const ToyWorld& world, const ToyModel& model, Vec2 x) {
    const double e = eta(world, x);
    return model.predict(x) == 0 ? e : 1.0 - e;
}

/// Mean over `points` of |estimate(i) - truth_confidence(points[i])|. The
/// reduction runs in index order so the result does not depend on threads.
template <class Estimator>
double mean_abs_error(const ToyWorld& world, const ToyModel& model, std::span<const LabeledPoint> points,
                      Estimator&& estimate, unsigned threads = 1) {
    std::vector<double> err(points.size());
    parallel_for(points.size(), threads, [&](std::size_t i) {
        err[i] = std::abs(estimate(i) - truth_confidence(world, model, points[i].x));
    });
    double total = 0.0;
    for (double e : err) {
        total += e;
    }
    return total / static_cast<double>(points.size());
}

enum class EstimatorKind { ConfGap, TopK, Consistency };

inline std::string to_string(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::ConfGap: return "conf_gap";
        case EstimatorKind::TopK: return "topk";
        case EstimatorKind::Consistency: return "consistency";
    }
    return "unknown";
}

struct EstimatorError {
    EstimatorKind estimator = EstimatorKind::ConfGap;
    double parameter = 0.0;  // delta, k, or eps
    double mean_abs_error = 0.0;
};

struct EstimatorGrids {
    std::vector<double> deltas{0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2};
    std::vector<std::size_t> ks{1, 3, 9, 25, 50, 100, 200, 400, 800, 1600};
    std::vector<double> epsilons{0.0, 0.25, 0.5, 0.6, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0, 1.2, 1.5, 2.0};
    std::size_t t_perturbations = 5000;
};

struct ToyResult {
    ToyModel model;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::vector<EstimatorError> errors;

    /// Smallest error of one estimator family over its grid.
    [[nodiscard]] double best(EstimatorKind kind) const {
        double b = std::numeric_limits<double>::infinity();
        for (const auto& e : errors) {
            if (e.estimator == kind) {
                b = std::min(b, e.mean_abs_error);
            }
        }
        return b;
    }
};

inline double model_accuracy(const ToyModel& model, std::span<const LabeledPoint> points) {
    std::size_t hits = 0;
    for (const auto& p : points) {
        hits += model.predict(p.x) == p.label ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(points.size());
}

/// Trains the model, then scores every estimator configuration on the test
/// set. Confidence-neighborhood estimators use the test set as their pool.
inline ToyResult run_toy_experiment(const ToyWorld& world, const TrainConfig& train_cfg,
                                    const EstimatorGrids& grids, unsigned threads = 1) {
    const ToyData data = generate(world);
    ToyResult r;
    r.model = train_model(data.train, train_cfg);
    r.train_accuracy = model_accuracy(r.model, data.train);
    r.test_accuracy = model_accuracy(r.model, data.test);
    const std::span<const LabeledPoint> test(data.test);
    const ConfidencePool pool(test, r.model);

    for (double delta : grids.deltas) {
        const double e = mean_abs_error(
            world, r.model, test, [&](std::size_t i) { return estimate_conf_gap(pool.confidence(i), pool, delta); },
            threads);
        r.errors.push_back({EstimatorKind::ConfGap, delta, e});
    }

    if (!grids.ks.empty()) {
        std::vector<std::vector<double>> topk(test.size());
        parallel_for(test.size(), threads,
                     [&](std::size_t i) { topk[i] = estimate_topk(pool.confidence(i), pool, grids.ks); });
        for (std::size_t j = 0; j < grids.ks.size(); ++j) {
            const double e =
                mean_abs_error(world, r.model, test, [&](std::size_t i) { return topk[i][j]; }, 1);
            r.errors.push_back({EstimatorKind::TopK, static_cast<double>(grids.ks[j]), e});
        }
    }

    for (double eps : grids.epsilons) {
        const double e = mean_abs_error(
            world, r.model, test,
            [&](std::size_t i) {
                return estimate_consistency(test[i].x, r.model, eps, grids.t_perturbations, world.seed, i);
            },
            threads);
        r.errors.push_back({EstimatorKind::Consistency, eps, e});
    }
    return r;
}

}  // namespace conscal::toy
