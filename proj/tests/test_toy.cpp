#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "conscal/toy.hpp"
#include "oracles.hpp"

using conscal::Error;
using conscal::ErrorKind;
namespace toy = conscal::toy;

namespace {

double logit(double c) { return std::log(c / (1.0 - c)); }

double gaussian_pdf(const toy::Sym2& s, toy::Vec2 mu, toy::Vec2 x) {
    const double det = s.xx * s.yy - s.xy * s.xy;
    const double dx = x.x - mu.x, dy = x.y - mu.y;
    const double q = (s.yy * dx * dx - 2 * s.xy * dx * dy + s.xx * dy * dy) / det;
    return std::exp(-0.5 * q) / (2 * std::numbers::pi * std::sqrt(det));
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no conscal::Error thrown";
    return ErrorKind::InvalidArgument;
}

// Model predicting class 1 for x > 0 with confidence sigmoid(|x|).
const toy::ToyModel kUnitModel{{1.0, 0.0}, 0.0};

toy::LabeledPoint at_confidence(double c, bool correct) {
    return {{logit(c), 0.0}, correct ? 1U : 0U};
}

}  // namespace

TEST(Generate, SampleMeanMatchesComponentMean) {
    toy::ToyWorld w;
    w.n_train = 100'000;
    w.n_test = 1;
    const auto d = toy::generate(w);
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    for (const auto& p : d.train) {
        if (p.label == 0) {
            sx += p.x.x;
            sy += p.x.y;
            ++n;
        }
    }
    ASSERT_EQ(n, 100'000U);
    EXPECT_NEAR(sx / n, -1.0, 0.02);
    EXPECT_NEAR(sy / n, 0.0, 0.02);
}

TEST(Generate, CorrelatedCovarianceIsReproduced) {
    toy::ToyWorld w;
    w.sigma = {2.0, 0.8, 1.0};
    w.n_train = 50'000;
    w.n_test = 1;
    const auto d = toy::generate(w);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < w.n_train; ++i) {
        const auto& p = d.train[i];
        sxx += (p.x.x + 1.0) * (p.x.x + 1.0);
        sxy += (p.x.x + 1.0) * p.x.y;
    }
    EXPECT_NEAR(sxx / w.n_train, 2.0, 0.05);
    EXPECT_NEAR(sxy / w.n_train, 0.8, 0.05);
}

TEST(Generate, DeterministicInSeed) {
    toy::ToyWorld w;
    w.n_train = 100;
    w.n_test = 10;
    const auto a = toy::generate(w);
    const auto b = toy::generate(w);
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        ASSERT_EQ(a.train[i].x.x, b.train[i].x.x);
        ASSERT_EQ(a.train[i].x.y, b.train[i].x.y);
    }
    w.seed = 43;
    EXPECT_NE(toy::generate(w).train[0].x.x, a.train[0].x.x);
}

TEST(Generate, RejectsNonPositiveDefinite) {
    toy::ToyWorld w;
    w.sigma = {1.0, 2.0, 1.0};
    EXPECT_EQ(kind_of([&] { toy::generate(w); }), ErrorKind::NotPositiveDefinite);
    w.sigma = {-1.0, 0.0, 1.0};
    EXPECT_EQ(kind_of([&] { toy::generate(w); }), ErrorKind::NotPositiveDefinite);
}

TEST(Eta, SymmetricWorld) {
    const toy::ToyWorld w;
    for (double y : {-3.0, 0.0, 2.5}) {
        EXPECT_EQ(toy::eta(w, {0.0, y}), 0.5);
    }
    EXPECT_NEAR(toy::eta(w, {0.5, 0.0}), 1.0 / (1.0 + std::exp(1.0)), 1e-15);
    EXPECT_NEAR(toy::eta(w, {0.5, 0.0}), 0.268941, 1e-6);
    const double far = toy::eta(w, {-50.0, 0.0});
    EXPECT_FALSE(std::isnan(far));
    EXPECT_NEAR(far, 1.0, 1e-15);
    EXPECT_NEAR(toy::eta(w, {50.0, 0.0}), 0.0, 1e-15);
}

TEST(Eta, MatchesDensityRatio) {
    toy::ToyWorld w;
    w.mu0 = {0.3, -0.5};
    w.mu1 = {1.1, 0.9};
    w.sigma = {1.5, 0.4, 0.8};
    for (toy::Vec2 x : {toy::Vec2{0, 0}, toy::Vec2{1, 1}, toy::Vec2{-1, 2}, toy::Vec2{0.7, 0.2}}) {
        const double p0 = gaussian_pdf(w.sigma, w.mu0, x);
        const double p1 = gaussian_pdf(w.sigma, w.mu1, x);
        EXPECT_NEAR(toy::eta(w, x), p0 / (p0 + p1), 1e-12);
    }
}

TEST(Eta, SwappingMeansComplements) {
    toy::ToyWorld w;
    w.mu0 = {-0.4, 0.2};
    w.mu1 = {0.9, -0.3};
    w.sigma = {1.2, -0.3, 0.7};
    toy::ToyWorld s = w;
    std::swap(s.mu0, s.mu1);
    for (double a = -3; a <= 3; a += 0.5) {
        for (double b = -3; b <= 3; b += 0.75) {
            EXPECT_NEAR(toy::eta(s, {a, b}), 1.0 - toy::eta(w, {a, b}), 1e-15);
        }
    }
}

TEST(TrainModel, SeparatedClustersAreLearned) {
    toy::ToyWorld w;
    w.mu0 = {-10, 0};
    w.mu1 = {10, 0};
    w.n_train = 2000;
    w.n_test = 10;
    const auto d = toy::generate(w);
    const auto m = toy::train_model(d.train, {200, 0.5});
    EXPECT_GE(toy::model_accuracy(m, d.train), 0.999);
}

TEST(TrainModel, SymmetricWorldAlignsWithMeanDifference) {
    toy::ToyWorld w;
    w.n_train = 5000;
    w.n_test = 10;
    const auto d = toy::generate(w);
    const auto m = toy::train_model(d.train);
    const double norm = std::hypot(m.w.x, m.w.y);
    EXPECT_GE(m.w.x / norm, 0.99);  // cosine with mu1 - mu0 = (2, 0)
    EXPECT_LT(std::abs(m.b), 0.1);
    // Bayes score for this world is 2 x1.
    EXPECT_NEAR(m.w.x, 2.0, 0.2);
}

TEST(TrainModel, ZeroEpochsKeepsInitialParameters) {
    const std::vector<toy::LabeledPoint> pts{{{1, 1}, 1}};
    const auto m = toy::train_model(pts, {0, 1.0});
    EXPECT_EQ(m.w.x, 0.0);
    EXPECT_EQ(m.w.y, 0.0);
    EXPECT_EQ(m.b, 0.0);
    EXPECT_THROW(toy::train_model(std::vector<toy::LabeledPoint>{}), Error);
}

TEST(ConfGap, WholePoolAndSelf) {
    const std::vector<toy::LabeledPoint> pool{at_confidence(0.6, true), at_confidence(0.7, false),
                                              at_confidence(0.95, true), at_confidence(0.55, true)};
    EXPECT_DOUBLE_EQ(toy::estimate_conf_gap(pool[0].x, pool, kUnitModel, 1.0), 0.75);
    EXPECT_EQ(toy::estimate_conf_gap(pool[1].x, pool, kUnitModel, 1e-9), 0.0);
    EXPECT_EQ(toy::estimate_conf_gap(pool[2].x, pool, kUnitModel, 1e-9), 1.0);
}

TEST(ConfGap, HandPool) {
    // Confidences 0.60 ok, 0.62 wrong, 0.70 ok, 0.64 ok, 0.90 wrong. Target
    // 0.63 with delta 0.05 keeps {0.60, 0.62, 0.64}: mean correctness 2/3.
    const std::vector<toy::LabeledPoint> pool{at_confidence(0.60, true), at_confidence(0.62, false),
                                              at_confidence(0.70, true), at_confidence(0.64, true),
                                              at_confidence(0.90, false)};
    EXPECT_NEAR(toy::estimate_conf_gap({logit(0.63), 0.0}, pool, kUnitModel, 0.05), 2.0 / 3.0, 1e-15);
}

TEST(ConfGap, EmptyNeighborhood) {
    const std::vector<toy::LabeledPoint> pool{at_confidence(0.6, true)};
    EXPECT_EQ(kind_of([&] { toy::estimate_conf_gap({logit(0.9), 0.0}, pool, kUnitModel, 0.01); }),
              ErrorKind::EmptyNeighborhood);
}

TEST(TopK, WholePoolAndSelf) {
    const std::vector<toy::LabeledPoint> pool{at_confidence(0.6, true), at_confidence(0.7, false),
                                              at_confidence(0.95, true), at_confidence(0.55, true)};
    EXPECT_DOUBLE_EQ(toy::estimate_topk(pool[0].x, pool, kUnitModel, 4), 0.75);
    EXPECT_EQ(toy::estimate_topk(pool[1].x, pool, kUnitModel, 1), 0.0);
    // Nearest two to 0.6: itself and 0.55.
    EXPECT_EQ(toy::estimate_topk(pool[0].x, pool, kUnitModel, 2), 1.0);
}

TEST(TopK, TiesGoToLowerPoolIndex) {
    // Two points at the same location: index 0 is wrong, index 1 is right.
    const std::vector<toy::LabeledPoint> pool{{{logit(0.7), 0.0}, 0U}, {{logit(0.7), 0.0}, 1U}};
    EXPECT_EQ(toy::estimate_topk({logit(0.6), 0.0}, pool, kUnitModel, 1), 0.0);
    EXPECT_EQ(toy::estimate_topk({logit(0.6), 0.0}, pool, kUnitModel, 2), 0.5);
}

TEST(TopK, KOutOfRange) {
    const std::vector<toy::LabeledPoint> pool{at_confidence(0.6, true)};
    EXPECT_EQ(kind_of([&] { toy::estimate_topk(pool[0].x, pool, kUnitModel, 2); }), ErrorKind::KOutOfRange);
    EXPECT_EQ(kind_of([&] { toy::estimate_topk(pool[0].x, pool, kUnitModel, 0); }), ErrorKind::KOutOfRange);
}

TEST(Consistency, ZeroNoiseIsOne) {
    EXPECT_EQ(toy::estimate_consistency({0.01, 0.0}, kUnitModel, 0.0, 50, 1), 1.0);
}

TEST(Consistency, MatchesProjectedGaussianClosedForm) {
    constexpr std::size_t t = 100'000;
    const double expected = oracle::phi(0.5);
    EXPECT_NEAR(expected, 0.6915, 1e-4);
    const double c = toy::estimate_consistency({0.5, 3.0}, kUnitModel, 1.0, t, 42);
    EXPECT_NEAR(c, expected, 3.0 * std::sqrt(expected * (1 - expected) / t));
}

TEST(Consistency, AnalyticGridForTiltedModel) {
    constexpr std::size_t t = 20'000;
    const toy::ToyModel m{{1.2, -0.9}, 0.3};
    const double norm = std::hypot(1.2, -0.9);
    std::uint64_t idx = 0;
    for (toy::Vec2 x : {toy::Vec2{0.2, 0.1}, toy::Vec2{-1, 0.5}, toy::Vec2{1.5, -1}, toy::Vec2{0, 0.4}}) {
        for (double eps : {0.3, 1.0, 2.0}) {
            const double p = oracle::phi(std::abs(m.score(x)) / (eps * norm));
            const double c = toy::estimate_consistency(x, m, eps, t, 5, idx++);
            EXPECT_NEAR(c, p, 3.0 * std::sqrt(p * (1 - p) / t) + 1e-12);
        }
    }
}

TEST(Consistency, HugeNoiseApproachesHalf) {
    constexpr std::size_t t = 100'000;
    const double c = toy::estimate_consistency({2.0, 0.0}, kUnitModel, 1e6, t, 3);
    EXPECT_NEAR(c, 0.5, 3.0 * std::sqrt(0.25 / t));
}

TEST(MeanAbsError, OracleAndConstantEstimators) {
    toy::ToyWorld w;
    w.n_train = 10;
    w.n_test = 500;
    const auto d = toy::generate(w);
    const toy::ToyModel bayes{{2.0, 0.0}, 0.0};
    const std::span<const toy::LabeledPoint> test(d.test);
    const double zero = toy::mean_abs_error(
        w, bayes, test, [&](std::size_t i) { return toy::truth_confidence(w, bayes, test[i].x); }, 2);
    EXPECT_EQ(zero, 0.0);

    double direct = 0.0;
    for (const auto& p : d.test) {
        const double e = toy::eta(w, p.x);
        direct += std::abs(std::max(e, 1.0 - e) - 0.5);
    }
    direct /= static_cast<double>(d.test.size());
    const double half = toy::mean_abs_error(w, bayes, test, [](std::size_t) { return 0.5; }, 3);
    EXPECT_NEAR(half, direct, 1e-12);
}

TEST(RunToyExperiment, SmallScale) {
    toy::ToyWorld w;
    w.n_train = 2000;
    w.n_test = 300;
    toy::EstimatorGrids g;
    g.deltas = {0.02, 0.05};
    g.ks = {1, 50, 600};
    g.epsilons = {0.0, 0.85};
    g.t_perturbations = 500;
    const auto r = toy::run_toy_experiment(w, {}, g, 2);
    ASSERT_EQ(r.errors.size(), 7U);
    EXPECT_GT(r.test_accuracy, 0.75);

    // eps = 0 estimates 1 everywhere, so its error is E|1 - truth|.
    const auto d = toy::generate(w);
    double expected = 0.0;
    for (const auto& p : d.test) {
        expected += 1.0 - toy::truth_confidence(w, r.model, p.x);
    }
    expected /= static_cast<double>(d.test.size());
    const auto& eps0 = r.errors[5];
    ASSERT_EQ(eps0.estimator, toy::EstimatorKind::Consistency);
    EXPECT_EQ(eps0.parameter, 0.0);
    EXPECT_NEAR(eps0.mean_abs_error, expected, 1e-12);

    // k = |pool| reduces to the overall accuracy for every target.
    const auto& kall = r.errors[4];
    ASSERT_EQ(kall.estimator, toy::EstimatorKind::TopK);
    double acc_err = 0.0;
    for (const auto& p : d.test) {
        acc_err += std::abs(r.test_accuracy - toy::truth_confidence(w, r.model, p.x));
    }
    EXPECT_NEAR(kall.mean_abs_error, acc_err / static_cast<double>(d.test.size()), 1e-12);

    const auto again = toy::run_toy_experiment(w, {}, g, 1);
    for (std::size_t i = 0; i < r.errors.size(); ++i) {
        EXPECT_EQ(again.errors[i].mean_abs_error, r.errors[i].mean_abs_error);
    }
}
