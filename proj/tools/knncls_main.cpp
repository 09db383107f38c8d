// knncls: train, index, predict with and evaluate kNN-augmented classifiers.
//
// Exit codes: 0 success, 1 usage or config error, 2 runtime error.

#include "knncls/config.hpp"
#include "knncls/data_io.hpp"
#include "knncls/datastore.hpp"
#include "knncls/errors.hpp"
#include "knncls/evaluation.hpp"
#include "knncls/model.hpp"
#include "knncls/retrieval.hpp"
#include "knncls/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace knncls;

namespace {

/// Bad invocation or config; maps to exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool timing = false;
};

struct ArtifactOptions {
    std::string model;
    std::string datastore;
    std::string data;
    std::optional<std::size_t> k;
    std::optional<double> temperature;
    std::optional<double> lambda;
};

RunConfig config_from(const CommonOptions& common) {
    if (common.config.empty()) {
        return parse_config("{}");
    }
    try {
        return load_config(common.config);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

RetrievalParams retrieval_params(const RunConfig& cfg, const ArtifactOptions& opts) {
    RetrievalParams p = cfg.hyper.retrieval;
    if (opts.k) p.k = *opts.k;
    if (opts.temperature) p.temperature = *opts.temperature;
    if (opts.lambda) p.lambda = *opts.lambda;
    try {
        p.validate();
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    return p;
}

Dataset eval_data(const RunConfig& cfg, const ArtifactOptions& opts) {
    if (!opts.data.empty()) return load_jsonl(opts.data);
    if (cfg.test_path) return load_jsonl(*cfg.test_path);
    if (cfg.train_path) throw UsageError("no test data: pass --data or set data.test in the config");
    return load_config_data(cfg).test;
}

std::optional<Datastore> maybe_datastore(const ArtifactOptions& opts) {
    if (opts.datastore.empty()) return std::nullopt;
    return load_datastore(opts.datastore);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string() + " for writing");
    out << text;
}

int cmd_gen_data(const CommonOptions& common) {
    RunConfig cfg = config_from(common);
    SyntheticSpec spec = cfg.synthetic.value_or(SyntheticSpec{});
    if (common.seed) spec.seed = *common.seed;
    const fs::path dir = common.out.empty() ? fs::path(".") : fs::path(common.out);
    fs::create_directories(dir);
    const auto split = generate_synthetic(spec);
    write_jsonl(split.train, dir / "train.jsonl");
    write_jsonl(split.test, dir / "test.jsonl");
    std::cout << "wrote " << split.train.size() << " train and " << split.test.size() << " test examples to "
              << dir.string() << '\n';
    return 0;
}

int cmd_train(const CommonOptions& common, const std::string& log_path) {
    RunConfig cfg = config_from(common);
    if (common.seed) cfg.hyper.seed = *common.seed;
    const Dataset train_set = cfg.train_path ? load_jsonl(*cfg.train_path) : load_config_data(cfg).train;
    const fs::path model_out = common.out.empty() ? cfg.model_out : fs::path(common.out);
    const fs::path log_out = log_path.empty() ? cfg.log_out : fs::path(log_path);

    const TrainResult result = train(train_set, cfg.hyper, cfg.model);
    std::string log;
    for (const auto& entry : result.log) {
        log += format_log_line(entry);
        log += '\n';
    }
    save_model(result.model, model_out);
    write_text(log_out, log);
    std::cout << log << "model written to " << model_out.string() << '\n';
    return 0;
}

int cmd_build_datastore(const CommonOptions& common, const ArtifactOptions& opts) {
    RunConfig cfg = config_from(common);
    if (opts.model.empty()) throw UsageError("build-datastore needs --model");
    const Model model = load_model(opts.model);
    Dataset train_set;
    if (!opts.data.empty()) {
        train_set = load_jsonl(opts.data);
    } else if (cfg.train_path) {
        train_set = load_jsonl(*cfg.train_path);
    } else {
        train_set = load_config_data(cfg).train;
    }
    if (train_set.input_dim != model.config.input_dim) {
        throw DimensionError("training data dimension " + std::to_string(train_set.input_dim) +
                             " does not match model input_dim " + std::to_string(model.config.input_dim));
    }
    const fs::path out = common.out.empty() ? fs::path("datastore.bin") : fs::path(common.out);
    const Datastore ds = build_datastore(model, train_set);
    save_datastore(ds, out);
    std::cout << "datastore: " << ds.count() << " keys of dimension " << ds.dim() << " written to " << out.string()
              << '\n';
    return 0;
}

int cmd_predict(const CommonOptions& common, const ArtifactOptions& opts) {
    RunConfig cfg = config_from(common);
    if (opts.model.empty()) throw UsageError("predict needs --model");
    const Model model = load_model(opts.model);
    const auto ds = maybe_datastore(opts);
    const RetrievalParams params = retrieval_params(cfg, opts);
    const Dataset data = eval_data(cfg, opts);

    const auto predictions = predict_all(model, ds ? &*ds : nullptr, data, params);
    std::ofstream file;
    if (!common.out.empty()) {
        file.open(common.out, std::ios::trunc);
        if (!file) throw FormatError(FormatErrorKind::Io, "cannot open " + common.out + " for writing");
    }
    std::ostream& out = common.out.empty() ? std::cout : file;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& p = predictions[i];
        nlohmann::json rec{{"id", data.examples[i].id},
                           {"label", p.label},
                           {"p_final", p.p_final.probs()},
                           {"p_cls", p.p_cls.probs()},
                           {"p_knn", p.p_knn.probs()}};
        out << rec.dump() << '\n';
    }
    return 0;
}

int cmd_evaluate(const CommonOptions& common, const ArtifactOptions& opts) {
    RunConfig cfg = config_from(common);
    if (opts.model.empty()) throw UsageError("evaluate needs --model");
    const Model model = load_model(opts.model);
    const auto ds = maybe_datastore(opts);
    const RetrievalParams params = retrieval_params(cfg, opts);
    const Dataset data = eval_data(cfg, opts);

    const EvalReport report = evaluate(model, ds ? &*ds : nullptr, data, params, common.timing);
    const std::vector<EvalRow> rows{report.row};
    if (common.out.empty()) {
        write_report_csv(rows, std::cout);
    } else {
        write_report_csv(rows, fs::path(common.out));
        std::cout << "accuracy=" << format_number(report.row.accuracy) << " (" << report.row.n_correct << "/"
                  << report.row.n_total << ")\n";
    }
    return 0;
}

int cmd_sweep(const CommonOptions& common, const ArtifactOptions& opts, const std::vector<std::size_t>& ks,
              const std::vector<double>& ts, const std::vector<double>& lambdas) {
    RunConfig cfg = config_from(common);
    if (opts.model.empty()) throw UsageError("sweep needs --model");
    SweepSpec spec = cfg.sweep;
    if (!ks.empty()) spec.k_values = ks;
    if (!ts.empty()) spec.temperature_values = ts;
    if (!lambdas.empty()) spec.lambda_values = lambdas;
    try {
        spec.validate();
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const Model model = load_model(opts.model);
    const auto ds = maybe_datastore(opts);
    const Dataset data = eval_data(cfg, opts);

    const SweepReport report = sweep(model, ds ? &*ds : nullptr, data, spec, common.timing);
    if (common.out.empty()) {
        write_report_csv(report.rows, std::cout);
    } else {
        write_report_csv(report.rows, fs::path(common.out));
    }
    const EvalRow& best = report.rows[report.best];
    std::cerr << "best: k=" << best.k << " T=" << format_number(best.temperature)
              << " lambda=" << format_number(best.lambda) << " accuracy=" << format_number(best.accuracy) << '\n';
    return 0;
}

int cmd_grad_check(const CommonOptions& common, double beta, bool decouple, std::size_t batch_size) {
    RunConfig cfg = config_from(common);
    const std::uint64_t seed = common.seed.value_or(cfg.hyper.seed);
    SyntheticSpec spec = cfg.synthetic.value_or(SyntheticSpec{});
    spec.seed = seed;
    const auto data = generate_synthetic(spec).train;
    if (batch_size == 0 || batch_size > data.size()) throw UsageError("--batch must be in [1, dataset size]");
    const std::vector<TrainExample> batch(data.examples.begin(), data.examples.begin() + batch_size);

    ModelConfig mc = cfg.model;
    mc.input_dim = data.input_dim;
    mc.num_labels = data.num_labels;
    mc.decouple_enabled = decouple;
    const Model model = Model::initialize(mc, seed);
    Hyperparams hyper = cfg.hyper;
    hyper.beta = beta;
    std::mt19937_64 rng(seed);
    const auto pairs = select_pairs(std::span<const TrainExample>(batch), rng);
    const auto report = grad_check(model, batch, pairs, hyper);
    std::cout << "parameters=" << report.parameters << " failures=" << report.failures
              << " near_zero=" << report.near_zero << " max_relative_error=" << report.max_relative_error
              << " max_absolute_error=" << report.max_absolute_error << " resamples=" << report.resamples
              << " finite=" << (report.finite ? "true" : "false") << " status=" << report.message << '\n';
    return report.passed ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kNN-augmented classification toolkit"};
    app.require_subcommand(1);

    CommonOptions common;
    ArtifactOptions artifacts;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "Experiment config (JSON)");
        sub->add_option("--seed", common.seed, "Override the config seed");
        sub->add_option("--out", common.out, "Output path");
    };
    auto add_artifacts = [&](CLI::App* sub, bool retrieval) {
        sub->add_option("--model", artifacts.model, "Model file");
        sub->add_option("--data", artifacts.data, "Dataset (JSONL)");
        if (retrieval) {
            sub->add_option("--datastore", artifacts.datastore, "Datastore file");
            sub->add_option("--k", artifacts.k, "Neighbours to retrieve");
            sub->add_option("--T", artifacts.temperature, "Distance temperature");
            sub->add_option("--lambda", artifacts.lambda, "Weight of the kNN distribution");
            sub->add_flag("--timing", common.timing, "Record wall-clock times in the report");
        }
    };

    auto* gen = app.add_subcommand("gen-data", "Write a seeded synthetic train/test split");
    add_common(gen);

    std::string log_path;
    auto* train_cmd = app.add_subcommand("train", "Train a model from a config");
    add_common(train_cmd);
    train_cmd->add_option("--log", log_path, "Training log path");

    auto* build = app.add_subcommand("build-datastore", "Index a training set by retrieval representation");
    add_common(build);
    add_artifacts(build, false);

    auto* predict_cmd = app.add_subcommand("predict", "Per-example predictions as JSONL");
    add_common(predict_cmd);
    add_artifacts(predict_cmd, true);

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Accuracy at one (k, T, lambda)");
    add_common(evaluate_cmd);
    add_artifacts(evaluate_cmd, true);

    std::vector<std::size_t> sweep_k;
    std::vector<double> sweep_t;
    std::vector<double> sweep_lambda;
    auto* sweep_cmd = app.add_subcommand("sweep", "Accuracy over a k x T x lambda grid");
    add_common(sweep_cmd);
    add_artifacts(sweep_cmd, true);
    sweep_cmd->add_option("--k-values", sweep_k, "Comma-separated k grid")->delimiter(',');
    sweep_cmd->add_option("--T-values", sweep_t, "Comma-separated temperature grid")->delimiter(',');
    sweep_cmd->add_option("--lambda-values", sweep_lambda, "Comma-separated lambda grid")->delimiter(',');

    double gc_beta = 0.5;
    bool gc_decouple = true;
    std::size_t gc_batch = 32;
    auto* gc = app.add_subcommand("grad-check", "Compare analytic and finite-difference gradients");
    add_common(gc);
    gc->add_option("--beta", gc_beta, "Triplet weight")->check(CLI::Range(0.0, 1.0));
    gc->add_option("--decouple", gc_decouple, "Enable the decouple layer (true/false)");
    gc->add_option("--batch", gc_batch, "Batch size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen) return cmd_gen_data(common);
        if (*train_cmd) return cmd_train(common, log_path);
        if (*build) return cmd_build_datastore(common, artifacts);
        if (*predict_cmd) return cmd_predict(common, artifacts);
        if (*evaluate_cmd) return cmd_evaluate(common, artifacts);
        if (*sweep_cmd) return cmd_sweep(common, artifacts, sweep_k, sweep_t, sweep_lambda);
        if (*gc) return cmd_grad_check(common, gc_beta, gc_decouple, gc_batch);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
