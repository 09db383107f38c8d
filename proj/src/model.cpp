#include "knncls/model.hpp"

#include "knncls/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace knncls {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

void fill_uniform(std::vector<double>& values, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : values) v = dist(rng);
}

void init_layer(DenseLayer& layer, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    fill_uniform(layer.weights, bound, rng);
    fill_uniform(layer.bias, bound, rng);
}

Vector activate_all(Activation activation, Vector values) {
    for (double& v : values) v = activate(activation, v);
    return values;
}

json layer_to_json(const DenseLayer& layer) {
    return json{{"in", layer.in}, {"out", layer.out}, {"weights", layer.weights}, {"bias", layer.bias}};
}

DenseLayer layer_from_json(const json& j, const char* name) {
    if (!j.contains(name)) {
        throw FormatError(FormatErrorKind::Malformed, std::string("model file lacks layer ") + name);
    }
    const json& l = j.at(name);
    DenseLayer layer;
    layer.in = l.at("in").get<std::size_t>();
    layer.out = l.at("out").get<std::size_t>();
    layer.weights = l.at("weights").get<std::vector<double>>();
    layer.bias = l.at("bias").get<std::vector<double>>();
    return layer;
}

void check_layer(const DenseLayer& layer, std::size_t in, std::size_t out, bool with_bias,
                 const char* name) {
    const bool ok = layer.in == in && layer.out == out && layer.weights.size() == in * out &&
                    layer.bias.size() == (with_bias ? out : 0);
    if (!ok) {
        throw FormatError(FormatErrorKind::ShapeMismatch,
                          std::string("layer ") + name + " does not match declared dimensions");
    }
    for (double w : layer.weights) {
        if (!std::isfinite(w)) {
            throw FormatError(FormatErrorKind::Malformed, std::string("layer ") + name + " has non-finite weights");
        }
    }
    for (double b : layer.bias) {
        if (!std::isfinite(b)) {
            throw FormatError(FormatErrorKind::Malformed, std::string("layer ") + name + " has non-finite bias");
        }
    }
}

}  // namespace

std::string_view to_string(Pooling pooling) {
    switch (pooling) {
        case Pooling::Cls: return "cls";
        case Pooling::Mean: return "mean";
        case Pooling::Max: return "max";
    }
    return "cls";
}

std::string_view to_string(Activation activation) {
    switch (activation) {
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Identity: return "identity";
    }
    return "tanh";
}

Pooling parse_pooling(std::string_view name) {
    const auto n = lower(name);
    if (n == "cls") return Pooling::Cls;
    if (n == "mean") return Pooling::Mean;
    if (n == "max") return Pooling::Max;
    throw InvalidArgument("unknown pooling mode '" + std::string(name) + "'");
}

Activation parse_activation(std::string_view name) {
    const auto n = lower(name);
    if (n == "tanh") return Activation::Tanh;
    if (n == "relu") return Activation::Relu;
    if (n == "identity") return Activation::Identity;
    throw InvalidArgument("unknown activation '" + std::string(name) + "'");
}

double activate(Activation activation, double x) {
    switch (activation) {
        case Activation::Tanh: return std::tanh(x);
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Identity: return x;
    }
    return x;
}

double activate_derivative(Activation activation, double x, double y) {
    switch (activation) {
        case Activation::Tanh: return 1.0 - y * y;
        case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

TokenSequence::TokenSequence(std::vector<Vector> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.empty()) {
        throw InvalidArgument("token sequence must contain at least one token");
    }
    const std::size_t dim = tokens_.front().size();
    if (dim == 0) {
        throw DimensionError("token vectors must be non-empty");
    }
    for (const auto& t : tokens_) {
        if (t.size() != dim) {
            throw DimensionError("token sequence has mixed dimensions");
        }
        require_finite(t, "token");
    }
}

TokenSequence TokenSequence::from_features(Vector features) {
    std::vector<Vector> tokens;
    tokens.push_back(std::move(features));
    return TokenSequence(std::move(tokens));
}

Vector pool(const TokenSequence& seq, Pooling mode) {
    const auto& tokens = seq.tokens();
    switch (mode) {
        case Pooling::Cls:
            return tokens.front();
        case Pooling::Mean: {
            Vector out(seq.dim(), 0.0);
            for (const auto& t : tokens) {
                for (std::size_t j = 0; j < out.size(); ++j) out[j] += t[j];
            }
            for (double& v : out) v /= static_cast<double>(tokens.size());
            return out;
        }
        case Pooling::Max: {
            Vector out = tokens.front();
            for (const auto& t : tokens) {
                for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::max(out[j], t[j]);
            }
            return out;
        }
    }
    return tokens.front();
}

DenseLayer DenseLayer::zeros(std::size_t in, std::size_t out, bool with_bias) {
    DenseLayer layer;
    layer.in = in;
    layer.out = out;
    layer.weights.assign(in * out, 0.0);
    if (with_bias) layer.bias.assign(out, 0.0);
    return layer;
}

Vector DenseLayer::forward(std::span<const double> x) const {
    if (x.size() != in) {
        throw DimensionError("dense layer expects input of dimension " + std::to_string(in) +
                             ", got " + std::to_string(x.size()));
    }
    Vector y(out);
    for (std::size_t r = 0; r < out; ++r) {
        double acc = has_bias() ? bias[r] : 0.0;
        const double* row = weights.data() + r * in;
        for (std::size_t c = 0; c < in; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

ModelConfig ModelConfig::resolved() const {
    ModelConfig c = *this;
    if (c.decouple_hidden_dim == 0) c.decouple_hidden_dim = c.emb_dim;
    if (c.retrieval_dim == 0) c.retrieval_dim = c.emb_dim;
    if (c.input_dim == 0 || c.hidden_dim == 0 || c.emb_dim == 0 || c.num_labels == 0) {
        throw InvalidArgument("model dimensions must be positive");
    }
    return c;
}

Model Model::zeros(const ModelConfig& config) {
    Model m;
    m.config = config.resolved();
    const auto& c = m.config;
    m.encoder_in = DenseLayer::zeros(c.input_dim, c.hidden_dim, true);
    m.encoder_out = DenseLayer::zeros(c.hidden_dim, c.emb_dim, true);
    m.head = DenseLayer::zeros(c.emb_dim, c.num_labels, false);
    if (c.decouple_enabled) {
        m.decouple_hidden = DenseLayer::zeros(c.emb_dim, c.decouple_hidden_dim, true);
        m.decouple_out = DenseLayer::zeros(c.decouple_hidden_dim, c.retrieval_dim, true);
    }
    return m;
}

Model Model::initialize(const ModelConfig& config, std::uint64_t seed) {
    Model m = zeros(config);
    std::mt19937_64 rng(seed);
    init_layer(m.encoder_in, rng);
    init_layer(m.encoder_out, rng);
    init_layer(m.head, rng);
    if (m.config.decouple_enabled) {
        init_layer(m.decouple_hidden, rng);
        init_layer(m.decouple_out, rng);
    }
    return m;
}

std::size_t Model::retrieval_dim() const noexcept {
    return config.decouple_enabled ? config.retrieval_dim : config.emb_dim;
}

std::vector<std::span<double>> Model::parameter_blocks() {
    std::vector<std::span<double>> blocks;
    for (DenseLayer* layer : {&encoder_in, &encoder_out, &head, &decouple_hidden, &decouple_out}) {
        if (!layer->weights.empty()) blocks.emplace_back(layer->weights);
        if (!layer->bias.empty()) blocks.emplace_back(layer->bias);
    }
    return blocks;
}

std::vector<std::span<const double>> Model::parameter_blocks() const {
    std::vector<std::span<const double>> blocks;
    for (const DenseLayer* layer : {&encoder_in, &encoder_out, &head, &decouple_hidden, &decouple_out}) {
        if (!layer->weights.empty()) blocks.emplace_back(layer->weights);
        if (!layer->bias.empty()) blocks.emplace_back(layer->bias);
    }
    return blocks;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (auto block : parameter_blocks()) n += block.size();
    return n;
}

void Model::validate() const {
    const auto& c = config;
    check_layer(encoder_in, c.input_dim, c.hidden_dim, true, "encoder_in");
    check_layer(encoder_out, c.hidden_dim, c.emb_dim, true, "encoder_out");
    check_layer(head, c.emb_dim, c.num_labels, false, "head");
    if (c.decouple_enabled) {
        check_layer(decouple_hidden, c.emb_dim, c.decouple_hidden_dim, true, "decouple_hidden");
        check_layer(decouple_out, c.decouple_hidden_dim, c.retrieval_dim, true, "decouple_out");
    } else {
        check_layer(decouple_hidden, 0, 0, false, "decouple_hidden");
        check_layer(decouple_out, 0, 0, false, "decouple_out");
    }
}

Encoding encode(const Model& model, const TokenSequence& seq) {
    const auto& c = model.config;
    if (seq.dim() != c.input_dim) {
        throw DimensionError("encode: token dimension " + std::to_string(seq.dim()) +
                             " does not match model input_dim " + std::to_string(c.input_dim));
    }
    const Vector x = pool(seq, c.pooling);
    const Vector hidden = activate_all(c.activation, model.encoder_in.forward(x));
    Encoding enc;
    enc.h0 = activate_all(c.activation, model.encoder_out.forward(hidden));
    if (c.decouple_enabled) {
        const Vector mid = activate_all(c.activation, model.decouple_hidden.forward(enc.h0));
        enc.r = model.decouple_out.forward(mid);
    } else {
        enc.r = enc.h0;
    }
    return enc;
}

LabelDistribution classify(const Model& model, std::span<const double> h0) {
    const Vector logits = activate_all(model.config.activation, model.head.forward(h0));
    return softmax(logits);
}

std::string model_to_json(const Model& model) {
    const auto& c = model.config;
    json j;
    j["format"] = "knncls-model";
    j["version"] = kModelFormatVersion;
    j["dims"] = {{"input_dim", c.input_dim},
                 {"hidden_dim", c.hidden_dim},
                 {"emb_dim", c.emb_dim},
                 {"decouple_hidden_dim", c.decouple_hidden_dim},
                 {"retrieval_dim", c.retrieval_dim},
                 {"num_labels", c.num_labels}};
    j["pooling"] = to_string(c.pooling);
    j["activation"] = to_string(c.activation);
    j["decouple_enabled"] = c.decouple_enabled;
    j["triplet_enabled"] = c.triplet_enabled;
    json layers;
    layers["encoder_in"] = layer_to_json(model.encoder_in);
    layers["encoder_out"] = layer_to_json(model.encoder_out);
    layers["head"] = layer_to_json(model.head);
    if (c.decouple_enabled) {
        layers["decouple_hidden"] = layer_to_json(model.decouple_hidden);
        layers["decouple_out"] = layer_to_json(model.decouple_out);
    }
    j["layers"] = std::move(layers);
    // nlohmann emits doubles in shortest round-trip form, so weights reload bit-exactly.
    return j.dump(1);
}

Model model_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(FormatErrorKind::Malformed, std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (!j.is_object() || j.value("format", "") != "knncls-model") {
            throw FormatError(FormatErrorKind::BadMagic, "not a knncls model file");
        }
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion) {
            throw FormatError(FormatErrorKind::VersionMismatch,
                              "model format version " + std::to_string(version) + ", expected " +
                                  std::to_string(kModelFormatVersion));
        }
        Model m;
        const json& d = j.at("dims");
        m.config.input_dim = d.at("input_dim").get<std::size_t>();
        m.config.hidden_dim = d.at("hidden_dim").get<std::size_t>();
        m.config.emb_dim = d.at("emb_dim").get<std::size_t>();
        m.config.decouple_hidden_dim = d.at("decouple_hidden_dim").get<std::size_t>();
        m.config.retrieval_dim = d.at("retrieval_dim").get<std::size_t>();
        m.config.num_labels = d.at("num_labels").get<std::size_t>();
        m.config.pooling = parse_pooling(j.at("pooling").get<std::string>());
        m.config.activation = parse_activation(j.at("activation").get<std::string>());
        m.config.decouple_enabled = j.at("decouple_enabled").get<bool>();
        m.config.triplet_enabled = j.at("triplet_enabled").get<bool>();
        if (m.config.resolved() != m.config) {
            throw FormatError(FormatErrorKind::ShapeMismatch, "model file has unresolved dimensions");
        }
        const json& layers = j.at("layers");
        m.encoder_in = layer_from_json(layers, "encoder_in");
        m.encoder_out = layer_from_json(layers, "encoder_out");
        m.head = layer_from_json(layers, "head");
        if (m.config.decouple_enabled) {
            m.decouple_hidden = layer_from_json(layers, "decouple_hidden");
            m.decouple_out = layer_from_json(layers, "decouple_out");
        }
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw FormatError(FormatErrorKind::Malformed, std::string("model file: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw FormatError(FormatErrorKind::Malformed, std::string("model file: ") + e.what());
    }
}

void save_model(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw FormatError(FormatErrorKind::Io, "cannot open " + path.string() + " for writing");
    }
    out << model_to_json(model) << '\n';
    if (!out) {
        throw FormatError(FormatErrorKind::Io, "write failed for " + path.string());
    }
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return model_from_json(buffer.str());
}

}  // namespace knncls
