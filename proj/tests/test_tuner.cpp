#include <gtest/gtest.h>

#include <cmath>

#include "conscal/synthetic.hpp"
#include "conscal/tuner.hpp"

using conscal::Aggregation;
using conscal::Error;
using conscal::LogitSet;
using conscal::NoiseKind;
using conscal::NoiseSpec;
namespace metrics = conscal::metrics;
namespace tuner = conscal::tuner;

namespace {

LogitSet one_hot_correct(std::size_t n) {
    std::vector<float> z(n * 3, 0.0f);
    std::vector<std::uint32_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<std::uint32_t>(i % 3);
        z[i * 3 + y[i]] = 20.0f;
    }
    return {n, 3, std::move(z), std::move(y)};
}

}  // namespace

TEST(DefaultGrid, GeometricEpsilons) {
    const auto eps = tuner::default_epsilons();
    ASSERT_EQ(eps.size(), 25U);
    EXPECT_DOUBLE_EQ(eps.front(), 0.05);
    EXPECT_NEAR(eps.back(), 0.05 * std::pow(1.35, 24), 1e-12);
    const tuner::TuneGrid grid;
    EXPECT_EQ(grid.t_perturbations, 256U);
    EXPECT_EQ(grid.n_bins, 15U);
    EXPECT_EQ(grid.kinds.size(), 2U);
}

TEST(Tune, SinglePointGrid) {
    const auto set = conscal::synthetic::make_overconfident({300, 4, 2.0, 3.0, 1});
    tuner::TuneGrid grid;
    grid.kinds = {NoiseKind::Gaussian};
    grid.epsilons = {2.0};
    grid.t_perturbations = 64;
    const auto r = tuner::tune(set, grid);
    ASSERT_EQ(r.trace.size(), 1U);
    EXPECT_EQ(r.best, (NoiseSpec{NoiseKind::Gaussian, 2.0}));
    const auto probs = conscal::cc_calibrate(set, grid.config_for(r.best));
    EXPECT_EQ(r.val_ece, metrics::ece(probs, 15).value);
}

TEST(Tune, TinyNoiseWinsOnPerfectOneHotData) {
    const auto set = one_hot_correct(60);
    tuner::TuneGrid grid;
    grid.kinds = {NoiseKind::Gaussian};
    grid.epsilons = {1e-6, 10.0};
    grid.t_perturbations = 100;
    const auto r = tuner::tune(set, grid);
    // Direct evaluation of both candidates.
    const double tiny = metrics::ece(conscal::cc_calibrate(set, grid.config_for({NoiseKind::Gaussian, 1e-6})), 15).value;
    const double large = metrics::ece(conscal::cc_calibrate(set, grid.config_for({NoiseKind::Gaussian, 10.0})), 15).value;
    EXPECT_EQ(tiny, 0.0);
    EXPECT_GT(large, 0.05);
    EXPECT_EQ(r.best.strength, 1e-6);
    EXPECT_EQ(r.val_ece, 0.0);
}

TEST(Tune, TiesPreferListedKindThenSmallerEpsilon) {
    const auto set = one_hot_correct(30);
    tuner::TuneGrid grid;
    grid.kinds = {NoiseKind::Uniform, NoiseKind::Gaussian};
    grid.epsilons = {1e-7, 1e-6};
    grid.t_perturbations = 10;
    const auto r = tuner::tune(set, grid);
    ASSERT_EQ(r.trace.size(), 4U);
    for (const auto& p : r.trace) {
        EXPECT_EQ(p.val_ece, 0.0);
    }
    EXPECT_EQ(r.best, (NoiseSpec{NoiseKind::Uniform, 1e-7}));

    grid.kinds = {NoiseKind::Gaussian, NoiseKind::Uniform};
    EXPECT_EQ(tuner::tune(set, grid).best, (NoiseSpec{NoiseKind::Gaussian, 1e-7}));
}

TEST(Tune, TraceMatchesIndependentEvaluationAndIsReproducible) {
    const auto set = conscal::synthetic::make_overconfident({400, 5, 3.0, 3.0, 9});
    tuner::TuneGrid grid;
    grid.epsilons = {0.5, 1.0, 2.0, 4.0, 8.0};
    grid.t_perturbations = 32;
    const auto r = tuner::tune(set, grid, 3);
    ASSERT_EQ(r.trace.size(), 10U);
    double best = r.trace.front().val_ece;
    for (const auto& p : r.trace) {
        const auto probs = conscal::cc_calibrate(
            set, {p.noise, grid.t_perturbations, Aggregation::Consistency, grid.seed});
        EXPECT_EQ(p.val_ece, metrics::ece(probs, grid.n_bins).value);
        best = std::min(best, p.val_ece);
    }
    EXPECT_EQ(r.val_ece, best);

    const auto again = tuner::tune(set, grid, 1);
    ASSERT_EQ(again.trace.size(), r.trace.size());
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
        EXPECT_EQ(again.trace[i].val_ece, r.trace[i].val_ece);
        EXPECT_EQ(again.trace[i].noise, r.trace[i].noise);
    }
}

TEST(Tune, RejectsBadGrids) {
    const auto set = one_hot_correct(6);
    tuner::TuneGrid grid;
    grid.kinds.clear();
    EXPECT_THROW(tuner::tune(set, grid), Error);
    grid = {};
    grid.epsilons = {};
    EXPECT_THROW(tuner::tune(set, grid), Error);
    grid.epsilons = {1.0, 0.5};
    EXPECT_THROW(tuner::tune(set, grid), Error);
    grid.epsilons = {0.0, 0.5};
    EXPECT_THROW(tuner::tune(set, grid), Error);
}
