#include <gtest/gtest.h>

#include "conscal/report_json.hpp"

namespace metrics = conscal::metrics;

TEST(ReportJson, CalibrationReportSchema) {
    const conscal::ProbSet p(2, 2, {0.9, 0.1, 0.3, 0.7}, {0, 0});
    const auto j = conscal::json::report_json(metrics::evaluate(p, 10));
    for (const char* key : {"ece", "adaece", "cece", "nll_x100", "accuracy", "n_bins", "bins"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(j["n_bins"], 10);
    ASSERT_EQ(j["bins"].size(), 10U);
    for (const char* key : {"index", "count", "avg_conf", "acc"}) {
        EXPECT_TRUE(j["bins"][0].contains(key)) << key;
    }
    EXPECT_DOUBLE_EQ(j["nll_x100"].get<double>(), 100.0 * metrics::nll(p));
    EXPECT_TRUE(j["bins"][0]["empty"].get<bool>());
}

TEST(ReportJson, GapReportOmitsStatsOfEmptyGroups) {
    const conscal::LogitSet set(2, 2, {10, 0, 0, 10}, {0, 1});
    const auto j = conscal::json::gap_json(conscal::diagnose_logit_gap(set));
    EXPECT_TRUE(j["incorrect"]["empty"].get<bool>());
    EXPECT_FALSE(j["incorrect"].contains("gap"));
    EXPECT_EQ(j["correct"]["gap"]["median"], 10.0);
}

TEST(ReportJson, TuneTraceIsComplete) {
    conscal::tuner::TuneResult r;
    r.best = {conscal::NoiseKind::Uniform, 2.0};
    r.val_ece = 0.01;
    r.trace = {{{conscal::NoiseKind::Uniform, 2.0}, 0.01}, {{conscal::NoiseKind::Gaussian, 2.0}, 0.02}};
    const auto j = conscal::json::tune_json(r, {});
    EXPECT_EQ(j["best"]["kind"], "uniform");
    EXPECT_EQ(j["trace"].size(), 2U);
    EXPECT_EQ(j["trace"][1]["kind"], "gaussian");
    EXPECT_EQ(j["T"], 256);
}
