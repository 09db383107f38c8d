#pragma once

#include "knncls/core.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace knncls {

enum class Pooling { Cls, Mean, Max };
enum class Activation { Tanh, Relu, Identity };

std::string_view to_string(Pooling pooling);
std::string_view to_string(Activation activation);
/// Case-insensitive; throws InvalidArgument on an unknown name.
Pooling parse_pooling(std::string_view name);
Activation parse_activation(std::string_view name);

double activate(Activation activation, double x);
/// Derivative expressed through the pre-activation `x` and output `y`.
double activate_derivative(Activation activation, double x, double y);

/// Non-empty sequence of per-position vectors sharing one dimension. A flat
/// feature vector is a sequence of length one.
class TokenSequence {
public:
    explicit TokenSequence(std::vector<Vector> tokens);
    static TokenSequence from_features(Vector features);

    std::size_t length() const noexcept { return tokens_.size(); }
    std::size_t dim() const noexcept { return tokens_.front().size(); }
    const std::vector<Vector>& tokens() const noexcept { return tokens_; }

    friend bool operator==(const TokenSequence&, const TokenSequence&) = default;

private:
    std::vector<Vector> tokens_;
};

Vector pool(const TokenSequence& seq, Pooling mode);

/// Affine map `out = W in + b`, W row-major with `out` rows.
struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;
    std::vector<double> bias;  // empty when the layer has no bias

    static DenseLayer zeros(std::size_t in, std::size_t out, bool with_bias);

    bool has_bias() const noexcept { return !bias.empty(); }
    double weight(std::size_t row, std::size_t col) const { return weights[row * in + col]; }
    Vector forward(std::span<const double> x) const;

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct ModelConfig {
    std::size_t input_dim = 16;
    std::size_t hidden_dim = 32;
    std::size_t emb_dim = 32;
    std::size_t decouple_hidden_dim = 0;  // 0 means emb_dim
    std::size_t retrieval_dim = 0;        // 0 means emb_dim
    std::size_t num_labels = 2;
    Pooling pooling = Pooling::Cls;
    Activation activation = Activation::Tanh;
    bool decouple_enabled = true;
    bool triplet_enabled = true;

    /// Fills the 0-means-default dims and validates the rest.
    ModelConfig resolved() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Two-layer encoder producing h0, a bias-free classification head over h0 and,
/// when decoupling is enabled, a one-hidden-layer MLP producing the retrieval
/// representation r from h0.
struct Model {
    ModelConfig config;
    DenseLayer encoder_in;       // input_dim -> hidden_dim
    DenseLayer encoder_out;      // hidden_dim -> emb_dim
    DenseLayer head;             // emb_dim -> num_labels, no bias
    DenseLayer decouple_hidden;  // emb_dim -> decouple_hidden_dim (empty if disabled)
    DenseLayer decouple_out;     // decouple_hidden_dim -> retrieval_dim (empty if disabled)

    /// All weights zero, shapes from `config`.
    static Model zeros(const ModelConfig& config);
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    static Model initialize(const ModelConfig& config, std::uint64_t seed);

    std::size_t retrieval_dim() const noexcept;

    /// Every trainable array in a fixed order; gradients share this layout.
    std::vector<std::span<double>> parameter_blocks();
    std::vector<std::span<const double>> parameter_blocks() const;
    std::size_t parameter_count() const;

    /// Throws FormatError(ShapeMismatch) if layer shapes disagree with config.
    void validate() const;

    friend bool operator==(const Model&, const Model&) = default;
};

struct Encoding {
    Vector h0;
    Vector r;  // equals h0 when decoupling is disabled
};

Encoding encode(const Model& model, const TokenSequence& seq);
LabelDistribution classify(const Model& model, std::span<const double> h0);

inline constexpr int kModelFormatVersion = 1;

std::string model_to_json(const Model& model);
/// Throws FormatError with kind Malformed, VersionMismatch or ShapeMismatch.
Model model_from_json(std::string_view text);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace knncls
