#include "knncls/config.hpp"

#include "knncls/errors.hpp"

#include "json.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

namespace knncls {

using nlohmann::json;

namespace {

void allow_keys(const json& j, const char* section, std::initializer_list<const char*> keys) {
    if (!j.is_object()) {
        throw FormatError(FormatErrorKind::Malformed, std::string("config section '") + section + "' must be an object");
    }
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : keys) known = known || item.key() == k;
        if (!known) {
            throw FormatError(FormatErrorKind::Malformed,
                              std::string("unknown key '") + item.key() + "' in config section '" + section + "'");
        }
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

SyntheticSpec parse_synthetic(const json& j) {
    allow_keys(j, "data.synthetic", {"num_classes", "dim", "per_class_count", "class_separation", "noise_sigma", "seed"});
    SyntheticSpec s;
    read(j, "num_classes", s.num_classes);
    read(j, "dim", s.dim);
    read(j, "per_class_count", s.per_class_count);
    read(j, "class_separation", s.class_separation);
    read(j, "noise_sigma", s.noise_sigma);
    read(j, "seed", s.seed);
    return s;
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(FormatErrorKind::Malformed, std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    try {
        allow_keys(root, "root", {"data", "model", "train", "retrieval", "sweep", "output"});
        if (root.contains("data")) {
            const json& d = root.at("data");
            allow_keys(d, "data", {"train", "test", "synthetic"});
            if (d.contains("train")) cfg.train_path = resolve(base_dir, d.at("train").get<std::string>());
            if (d.contains("test")) cfg.test_path = resolve(base_dir, d.at("test").get<std::string>());
            if (d.contains("synthetic")) cfg.synthetic = parse_synthetic(d.at("synthetic"));
            if (cfg.synthetic && (cfg.train_path || cfg.test_path)) {
                throw FormatError(FormatErrorKind::Malformed, "config data: give either files or a synthetic spec");
            }
        }
        if (root.contains("model")) {
            const json& m = root.at("model");
            allow_keys(m, "model", {"hidden_dim", "emb_dim", "decouple_hidden_dim", "retrieval_dim", "pooling",
                                    "activation", "decouple", "triplet"});
            read(m, "hidden_dim", cfg.model.hidden_dim);
            read(m, "emb_dim", cfg.model.emb_dim);
            read(m, "decouple_hidden_dim", cfg.model.decouple_hidden_dim);
            read(m, "retrieval_dim", cfg.model.retrieval_dim);
            if (m.contains("pooling")) cfg.model.pooling = parse_pooling(m.at("pooling").get<std::string>());
            if (m.contains("activation")) {
                cfg.model.activation = parse_activation(m.at("activation").get<std::string>());
            }
            read(m, "decouple", cfg.model.decouple_enabled);
            read(m, "triplet", cfg.model.triplet_enabled);
        }
        if (root.contains("train")) {
            const json& t = root.at("train");
            allow_keys(t, "train", {"beta", "mu", "learning_rate", "batch_size", "epochs", "seed"});
            read(t, "beta", cfg.hyper.beta);
            read(t, "mu", cfg.hyper.mu);
            read(t, "learning_rate", cfg.hyper.learning_rate);
            read(t, "batch_size", cfg.hyper.batch_size);
            read(t, "epochs", cfg.hyper.epochs);
            read(t, "seed", cfg.hyper.seed);
        }
        if (root.contains("retrieval")) {
            const json& r = root.at("retrieval");
            allow_keys(r, "retrieval", {"k", "T", "lambda"});
            read(r, "k", cfg.hyper.retrieval.k);
            read(r, "T", cfg.hyper.retrieval.temperature);
            read(r, "lambda", cfg.hyper.retrieval.lambda);
        }
        if (root.contains("sweep")) {
            const json& s = root.at("sweep");
            allow_keys(s, "sweep", {"k", "T", "lambda"});
            read(s, "k", cfg.sweep.k_values);
            read(s, "T", cfg.sweep.temperature_values);
            read(s, "lambda", cfg.sweep.lambda_values);
        }
        if (root.contains("output")) {
            const json& o = root.at("output");
            allow_keys(o, "output", {"model", "log"});
            if (o.contains("model")) cfg.model_out = o.at("model").get<std::string>();
            if (o.contains("log")) cfg.log_out = o.at("log").get<std::string>();
        }
    } catch (const json::exception& e) {
        throw FormatError(FormatErrorKind::Malformed, std::string("config: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw FormatError(FormatErrorKind::Malformed, std::string("config: ") + e.what());
    }
    try {
        cfg.hyper.validate();
        cfg.sweep.validate();
        if (cfg.synthetic) cfg.synthetic->validate();
        (void)cfg.model.resolved();
    } catch (const InvalidArgument& e) {
        throw FormatError(FormatErrorKind::Malformed, std::string("config: ") + e.what());
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(FormatErrorKind::Io, "cannot open config " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), path.parent_path());
}

SplitDataset load_config_data(const RunConfig& config) {
    if (config.train_path || config.test_path) {
        SplitDataset out;
        if (config.train_path) out.train = load_jsonl(*config.train_path);
        if (config.test_path) out.test = load_jsonl(*config.test_path);
        return out;
    }
    return generate_synthetic(config.synthetic.value_or(SyntheticSpec{}));
}

}  // namespace knncls
