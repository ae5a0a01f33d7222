#pragma once

// JSON views of the library's result types (nlohmann/json).

#include <json.hpp>

#include "conscal/calibrators.hpp"
#include "conscal/metrics.hpp"
#include "conscal/toy.hpp"
#include "conscal/tuner.hpp"

namespace conscal::json {

using nlohmann::json;

inline json bins_json(const std::vector<metrics::BinStats>& bins) {
    json out = json::array();
    for (const auto& b : bins) {
        out.push_back({{"index", b.index},
                       {"count", b.count},
                       {"avg_conf", b.avg_confidence},
                       {"acc", b.accuracy},
                       {"lower", b.lower_edge},
                       {"upper", b.upper_edge},
                       {"empty", b.empty}});
    }
    return out;
}

/// {ece, adaece, cece, nll_x100, accuracy, n_bins, bins:[{index,count,avg_conf,acc}]}
inline json report_json(const metrics::CalibrationReport& r) {
    return {{"ece", r.ece},
            {"adaece", r.adaece},
            {"cece", r.cece},
            {"nll_x100", r.nll * 100.0},
            {"accuracy", r.accuracy},
            {"n_samples", r.n_samples},
            {"n_classes", r.n_classes},
            {"n_bins", r.n_bins},
            {"bins", bins_json(r.bins)}};
}

inline json noise_json(const NoiseSpec& n) {
    return {{"kind", std::string(to_string(n.kind))}, {"eps", n.strength}};
}

inline json tune_json(const tuner::TuneResult& r, const tuner::TuneGrid& grid) {
    json trace = json::array();
    for (const auto& p : r.trace) {
        trace.push_back({{"kind", std::string(to_string(p.noise.kind))}, {"eps", p.noise.strength},
                         {"val_ece", p.val_ece}});
    }
    return {{"best", noise_json(r.best)},
            {"val_ece", r.val_ece},
            {"T", grid.t_perturbations},
            {"n_bins", grid.n_bins},
            {"seed", grid.seed},
            {"trace", trace}};
}

inline json local_json(const LocalReport& r) {
    return {{"row", r.row},
            {"label", r.label},
            {"vanilla_probs", r.vanilla_probs},
            {"vanilla_prediction", r.vanilla_prediction},
            {"vanilla_confidence", r.vanilla_confidence},
            {"consistency", r.consistency},
            {"cc_prediction", r.cc_prediction},
            {"cc_confidence", r.cc_confidence}};
}

inline json five_json(const FiveNumber& f) {
    return {{"min", f.min}, {"q1", f.q1}, {"median", f.median}, {"q3", f.q3}, {"max", f.max}};
}

inline json gap_json(const GapReport& r) {
    auto group = [](const GapGroup& g) {
        json j = {{"size", g.size}, {"empty", g.empty}};
        if (!g.empty) {
            j["max_logit"] = five_json(g.max_logit);
            j["second_logit"] = five_json(g.second_logit);
            j["gap"] = five_json(g.gap);
        }
        return j;
    };
    return {{"threshold", r.threshold}, {"correct", group(r.correct)}, {"incorrect", group(r.incorrect)}};
}

inline json toy_json(const toy::ToyResult& r) {
    json errors = json::array();
    for (const auto& e : r.errors) {
        errors.push_back({{"estimator", toy::to_string(e.estimator)},
                          {"parameter", e.parameter},
                          {"mean_abs_error", e.mean_abs_error}});
    }
    return {{"model", {{"w", {r.model.w.x, r.model.w.y}}, {"b", r.model.b}}},
            {"train_accuracy", r.train_accuracy},
            {"test_accuracy", r.test_accuracy},
            {"best",
             {{"conf_gap", r.best(toy::EstimatorKind::ConfGap)},
              {"topk", r.best(toy::EstimatorKind::TopK)},
              {"consistency", r.best(toy::EstimatorKind::Consistency)}}},
            {"errors", errors}};
}

}  // namespace conscal::json
