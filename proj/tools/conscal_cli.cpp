// conscal: command-line front end for the calibration toolkit.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "conscal/calibrators.hpp"
#include "conscal/data.hpp"
#include "conscal/metrics.hpp"
#include "conscal/report_json.hpp"
#include "conscal/synthetic.hpp"
#include "conscal/toy.hpp"
#include "conscal/tuner.hpp"

namespace {

using conscal::Error;
using conscal::ErrorKind;
using nlohmann::json;
namespace data = conscal::data;
namespace metrics = conscal::metrics;
namespace tuner = conscal::tuner;
namespace toy = conscal::toy;

struct Common {
    std::size_t bins = metrics::kDefaultBins;
    std::uint64_t seed = conscal::kDefaultSeed;
    unsigned threads = 1;
    std::string out;
    std::string format;
};

struct NoiseFlags {
    std::string noise;
    std::optional<double> eps;
    std::size_t t = conscal::kDefaultPerturbations;
    std::size_t tune_t = tuner::kDefaultTuningPerturbations;
    std::string aggregation = "consistency";
};

void add_common(CLI::App* cmd, Common& c, bool with_bins = true) {
    if (with_bins) {
        cmd->add_option("--bins", c.bins, "number of confidence bins")->check(CLI::PositiveNumber);
    }
    cmd->add_option("--seed", c.seed, "global random seed");
    cmd->add_option("--threads", c.threads, "worker threads (0 = all cores); never changes output");
    cmd->add_option("--out", c.out, "output path (stdout when omitted)");
    cmd->add_option("--format", c.format, "data file format: clb1 or csv (default: from extension)")
        ->check(CLI::IsMember({"clb1", "binary", "bin", "csv"}));
}

void add_noise(CLI::App* cmd, NoiseFlags& n) {
    cmd->add_option("--noise", n.noise, "noise kind: uniform or gaussian")
        ->check(CLI::IsMember({"uniform", "gaussian", "U", "G"}));
    cmd->add_option("--eps", n.eps, "noise strength; skips tuning when given");
    cmd->add_option("--T", n.t, "number of perturbations")->check(CLI::PositiveNumber);
    cmd->add_option("--tune-T", n.tune_t, "perturbations per candidate while tuning")->check(CLI::PositiveNumber);
    cmd->add_option("--aggregation", n.aggregation, "consistency or mean_softmax")
        ->check(CLI::IsMember({"consistency", "mean_softmax", "mean"}));
}

unsigned resolve_threads(unsigned t) {
    if (t == 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : hw;
    }
    return t;
}

data::Format format_for(const Common& c, const std::string& path) {
    return c.format.empty() ? data::format_from_path(path) : data::parse_format(c.format);
}

conscal::LogitSet load(const Common& c, const std::string& path) { return data::load(path, format_for(c, path)); }

void emit_text(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        std::cout.flush();
        return;
    }
    data::detail::write_file(path, text);
}

void emit_json(const std::string& path, const json& j) { emit_text(path, j.dump(2) + "\n"); }

tuner::TuneGrid grid_from(const Common& c, const NoiseFlags& n, const std::vector<double>& epsilons) {
    tuner::TuneGrid grid;
    if (!n.noise.empty()) {
        grid.kinds = {conscal::parse_noise_kind(n.noise)};
    }
    if (!epsilons.empty()) {
        grid.epsilons = epsilons;
    }
    grid.n_bins = c.bins;
    grid.t_perturbations = n.tune_t;
    grid.seed = c.seed;
    grid.aggregation = conscal::parse_aggregation(n.aggregation);
    return grid;
}

conscal::ConsistencyConfig cc_config(const Common& c, const NoiseFlags& n, const conscal::NoiseSpec& noise) {
    return {noise, n.t, conscal::parse_aggregation(n.aggregation), c.seed};
}

conscal::NoiseSpec explicit_noise(const NoiseFlags& n) {
    return {n.noise.empty() ? conscal::NoiseKind::Gaussian : conscal::parse_noise_kind(n.noise), *n.eps};
}

json cc_config_json(const conscal::ConsistencyConfig& cfg) {
    return {{"noise", conscal::json::noise_json(cfg.noise)},
            {"T", cfg.t_perturbations},
            {"aggregation", conscal::to_string(cfg.aggregation)},
            {"seed", cfg.seed}};
}

/// Resolves the noise for cc-style commands: explicit flags, otherwise a tuning run on `val`.
struct ResolvedNoise {
    conscal::NoiseSpec noise;
    std::optional<json> tune;
};

ResolvedNoise resolve_noise(const Common& c, const NoiseFlags& n, const std::string& val_path,
                            const std::vector<double>& epsilons, unsigned threads) {
    if (n.eps) {
        return {explicit_noise(n), std::nullopt};
    }
    if (val_path.empty()) {
        throw Error(ErrorKind::MissingValidation, "pass --val for tuning or --eps for a fixed noise strength");
    }
    const auto val = load(c, val_path);
    const auto grid = grid_from(c, n, epsilons);
    const auto r = tuner::tune(val, grid, threads);
    return {r.best, conscal::json::tune_json(r, grid)};
}

int run(int argc, char** argv) {
    CLI::App app{"conscal: consistency calibration toolkit"};
    app.require_subcommand(1);

    Common common;
    NoiseFlags noise;
    std::string input;
    std::string val_path;
    std::string test_path;
    std::string probs_path;
    std::string method;
    std::vector<double> epsilons;

    auto* metrics_cmd = app.add_subcommand("metrics", "calibration report for a logit file");
    metrics_cmd->add_option("logits", input, "logit file")->required();
    add_common(metrics_cmd, common);

    auto* calibrate_cmd = app.add_subcommand("calibrate", "calibrate a test set with ts or cc");
    calibrate_cmd->add_option("method", method, "ts or cc")->required()->check(CLI::IsMember({"ts", "cc"}));
    calibrate_cmd->add_option("--val", val_path, "validation logits");
    calibrate_cmd->add_option("--test", test_path, "test logits")->required();
    calibrate_cmd->add_option("--probs", probs_path, "write calibrated probabilities here");
    calibrate_cmd->add_option("--eps-grid", epsilons, "tuning epsilons (ascending)");
    add_common(calibrate_cmd, common);
    add_noise(calibrate_cmd, noise);

    auto* tune_cmd = app.add_subcommand("tune", "grid-search the noise on validation logits");
    tune_cmd->add_option("--val", val_path, "validation logits")->required();
    tune_cmd->add_option("--eps-grid", epsilons, "tuning epsilons (ascending)");
    add_common(tune_cmd, common);
    add_noise(tune_cmd, noise);

    std::vector<std::size_t> sweep_ts{2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};
    auto* sweep_cmd = app.add_subcommand("sweep", "test ECE of cc across perturbation counts");
    sweep_cmd->add_option("--test", test_path, "test logits")->required();
    sweep_cmd->add_option("--val", val_path, "validation logits for tuning");
    sweep_cmd->add_option("--Ts", sweep_ts, "perturbation counts")->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--eps-grid", epsilons, "tuning epsilons (ascending)");
    add_common(sweep_cmd, common);
    add_noise(sweep_cmd, noise);

    toy::ToyWorld world;
    toy::TrainConfig train_cfg;
    toy::EstimatorGrids toy_grids;
    std::vector<double> mu0{world.mu0.x, world.mu0.y};
    std::vector<double> mu1{world.mu1.x, world.mu1.y};
    std::vector<double> sigma{world.sigma.xx, world.sigma.xy, world.sigma.yy};
    std::optional<std::size_t> toy_t;
    std::string eta_grid_path;
    std::size_t eta_resolution = 101;
    auto* toy_cmd = app.add_subcommand("toy", "two-Gaussian estimator comparison");
    toy_cmd->add_option("--mu0", mu0, "class 0 mean (x y)")->expected(2)->allow_extra_args(false);
    toy_cmd->add_option("--mu1", mu1, "class 1 mean (x y)")->expected(2)->allow_extra_args(false);
    toy_cmd->add_option("--sigma", sigma, "shared covariance (xx xy yy)")->expected(3)->allow_extra_args(false);
    toy_cmd->add_option("--n-train", world.n_train, "training points per class")->check(CLI::PositiveNumber);
    toy_cmd->add_option("--n-test", world.n_test, "test points per class")->check(CLI::PositiveNumber);
    toy_cmd->add_option("--epochs", train_cfg.epochs, "gradient descent epochs");
    toy_cmd->add_option("--lr", train_cfg.learning_rate, "gradient descent step size");
    toy_cmd->add_option("--deltas", toy_grids.deltas, "conf_gap neighbourhood widths");
    toy_cmd->add_option("--ks", toy_grids.ks, "top-k neighbourhood sizes");
    toy_cmd->add_option("--eps-grid", toy_grids.epsilons, "consistency noise strengths");
    toy_cmd->add_option("--T", toy_t, "perturbations per point for the consistency estimator");
    toy_cmd->add_option("--eta-grid", eta_grid_path, "also write eta on a regular grid to this CSV");
    toy_cmd->add_option("--eta-resolution", eta_resolution, "eta grid points per axis")->check(CLI::Range(2, 2001));
    add_common(toy_cmd, common, false);

    double threshold = conscal::kDefaultGapThreshold;
    auto* diagnose_cmd = app.add_subcommand("diagnose", "logit gap of confident correct vs incorrect predictions");
    diagnose_cmd->add_option("logits", input, "logit file")->required();
    diagnose_cmd->add_option("--threshold", threshold, "confidence threshold");
    add_common(diagnose_cmd, common, false);

    std::size_t row = 0;
    auto* local_cmd = app.add_subcommand("local", "vanilla vs consistency view of one sample");
    local_cmd->add_option("logits", input, "logit file")->required();
    local_cmd->add_option("--row", row, "sample index")->required();
    add_common(local_cmd, common, false);
    add_noise(local_cmd, noise);

    data::SplitSpec split_spec;
    std::string val_out;
    std::string test_out;
    auto* split_cmd = app.add_subcommand("split", "shuffle-split a logit file into validation and test");
    split_cmd->add_option("logits", input, "logit file")->required();
    split_cmd->add_option("--fraction", split_spec.validation_fraction, "validation fraction");
    split_cmd->add_option("--val-out", val_out, "validation output")->required();
    split_cmd->add_option("--test-out", test_out, "test output")->required();
    add_common(split_cmd, common, false);

    conscal::synthetic::OverconfidentSpec synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate overconfident synthetic logits");
    synth_cmd->add_option("--n", synth.n_samples, "samples")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--classes", synth.n_classes, "classes")->check(CLI::Range(2, 1 << 20));
    synth_cmd->add_option("--spread", synth.spread, "latent score standard deviation");
    synth_cmd->add_option("--sharpen", synth.sharpen, "logit multiplier on log true probabilities");
    add_common(synth_cmd, common, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    const unsigned threads = resolve_threads(common.threads);

    if (*metrics_cmd) {
        const auto set = load(common, input);
        json j = conscal::json::report_json(metrics::evaluate(metrics::softmax(set), common.bins));
        j["config"] = {{"command", "metrics"}, {"input", input}, {"n_bins", common.bins}};
        emit_json(common.out, j);
    } else if (*calibrate_cmd) {
        const auto test = load(common, test_path);
        const auto vanilla = metrics::softmax(test);
        json j;
        j["vanilla"] = conscal::json::report_json(metrics::evaluate(vanilla, common.bins));
        std::optional<conscal::ProbSet> calibrated;
        json config = {{"command", "calibrate"}, {"method", method}, {"test", test_path}, {"n_bins", common.bins}};
        if (!val_path.empty()) {
            config["val"] = val_path;
        }
        if (method == "ts") {
            if (val_path.empty()) {
                throw Error(ErrorKind::MissingValidation, "temperature scaling needs --val");
            }
            const auto temp = conscal::ts_fit(load(common, val_path));
            calibrated = conscal::ts_apply(test, temp);
            j["temperature"] = temp.value();
        } else {
            const auto resolved = resolve_noise(common, noise, val_path, epsilons, threads);
            const auto cfg = cc_config(common, noise, resolved.noise);
            calibrated = conscal::cc_calibrate(test, cfg, threads);
            config["cc"] = cc_config_json(cfg);
            if (resolved.tune) {
                j["tune"] = *resolved.tune;
            }
        }
        j["calibrated"] = conscal::json::report_json(metrics::evaluate(*calibrated, common.bins));
        j["config"] = config;
        if (!probs_path.empty()) {
            data::save(*calibrated, probs_path, format_for(common, probs_path));
        }
        emit_json(common.out, j);
    } else if (*tune_cmd) {
        const auto val = load(common, val_path);
        const auto grid = grid_from(common, noise, epsilons);
        json j = conscal::json::tune_json(tuner::tune(val, grid, threads), grid);
        j["config"] = {{"command", "tune"},
                       {"val", val_path},
                       {"aggregation", conscal::to_string(grid.aggregation)}};
        emit_json(common.out, j);
    } else if (*sweep_cmd) {
        const auto test = load(common, test_path);
        const auto resolved = resolve_noise(common, noise, val_path, epsilons, threads);
        std::ostringstream csv;
        csv << "T,ece\n";
        for (std::size_t t : sweep_ts) {
            auto cfg = cc_config(common, noise, resolved.noise);
            cfg.t_perturbations = t;
            const double e = metrics::ece(conscal::cc_calibrate(test, cfg, threads), common.bins).value;
            csv << t << ',' << data::detail::format_real(e) << '\n';
        }
        emit_text(common.out, csv.str());
    } else if (*toy_cmd) {
        world.seed = common.seed;
        world.mu0 = {mu0[0], mu0[1]};
        world.mu1 = {mu1[0], mu1[1]};
        world.sigma = {sigma[0], sigma[1], sigma[2]};
        if (toy_t) {
            toy_grids.t_perturbations = *toy_t;
        }
        if (toy_cmd->count("--ks") == 0) {
            // Default k list is trimmed to the test pool; explicit values are checked strictly.
            std::erase_if(toy_grids.ks, [&](std::size_t k) { return k > 2 * world.n_test; });
        }
        toy::cholesky(world.sigma);
        const auto r = toy::run_toy_experiment(world, train_cfg, toy_grids, threads);

        std::ostringstream csv;
        csv << "estimator,parameter,mean_abs_error\n";
        for (const auto& e : r.errors) {
            csv << toy::to_string(e.estimator) << ',' << data::detail::format_real(e.parameter) << ','
                << data::detail::format_real(e.mean_abs_error) << '\n';
        }
        json summary = conscal::json::toy_json(r);
        summary["config"] = {{"command", "toy"},
                             {"seed", world.seed},
                             {"mu0", mu0},
                             {"mu1", mu1},
                             {"sigma", sigma},
                             {"n_train", world.n_train},
                             {"n_test", world.n_test},
                             {"epochs", train_cfg.epochs},
                             {"lr", train_cfg.learning_rate},
                             {"T", toy_grids.t_perturbations}};
        const std::string dir = common.out.empty() ? std::string(".") : common.out;
        std::filesystem::create_directories(dir);
        data::detail::write_file(dir + "/toy_errors.csv", csv.str());
        data::detail::write_file(dir + "/toy_summary.json", summary.dump(2) + "\n");

        if (!eta_grid_path.empty()) {
            std::ostringstream grid;
            grid << "x,y,eta\n";
            const double x0 = -4.0, x1 = 4.0, y0 = -4.0, y1 = 4.0;
            for (std::size_t iy = 0; iy < eta_resolution; ++iy) {
                const double y = y0 + (y1 - y0) * static_cast<double>(iy) / static_cast<double>(eta_resolution - 1);
                for (std::size_t ix = 0; ix < eta_resolution; ++ix) {
                    const double x =
                        x0 + (x1 - x0) * static_cast<double>(ix) / static_cast<double>(eta_resolution - 1);
                    grid << data::detail::format_real(x) << ',' << data::detail::format_real(y) << ','
                         << data::detail::format_real(toy::eta(world, {x, y})) << '\n';
                }
            }
            data::detail::write_file(eta_grid_path, grid.str());
        }
    } else if (*diagnose_cmd) {
        const auto set = load(common, input);
        json j = conscal::json::gap_json(conscal::diagnose_logit_gap(set, threshold));
        j["config"] = {{"command", "diagnose"}, {"input", input}};
        emit_json(common.out, j);
    } else if (*local_cmd) {
        if (!noise.eps) {
            throw Error(ErrorKind::InvalidArgument, "local needs --eps");
        }
        const auto set = load(common, input);
        const auto cfg = cc_config(common, noise, explicit_noise(noise));
        json j = conscal::json::local_json(conscal::cc_local_report(set, cfg, row));
        j["config"] = cc_config_json(cfg);
        j["config"]["command"] = "local";
        j["config"]["input"] = input;
        emit_json(common.out, j);
    } else if (*split_cmd) {
        split_spec.shuffle_seed = common.seed;
        const auto s = data::split(load(common, input), split_spec);
        data::save(s.validation, val_out, format_for(common, val_out));
        data::save(s.test, test_out, format_for(common, test_out));
    } else if (*synth_cmd) {
        if (common.out.empty()) {
            throw Error(ErrorKind::InvalidArgument, "synth needs --out");
        }
        synth.seed = common.seed;
        data::save(conscal::synthetic::make_overconfident(synth), common.out, format_for(common, common.out));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "conscal: %s\n", e.what());
        return 1;
    }
}
