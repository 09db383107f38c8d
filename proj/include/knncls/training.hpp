#pragma once

#include "knncls/core.hpp"
#include "knncls/data_io.hpp"
#include "knncls/model.hpp"
#include "knncls/retrieval.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace knncls {

struct Hyperparams {
    double beta = 0.5;            // weight of the triplet term
    double mu = 1.0;              // triplet margin
    double learning_rate = 0.05;  // plain SGD step
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    std::uint64_t seed = 42;
    RetrievalParams retrieval;

    void validate() const;
};

/// -log(max(p[gold], 1e-12)).
double cross_entropy(const LabelDistribution& p, LabelId gold);

/// max(d(anchor, positive) - d(anchor, negative) + mu, 0) with squared-L2 d.
double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double mu);

/// In-batch triplet partners. `negative` is empty only for a batch of one,
/// in which case the example contributes no triplet term.
struct PairChoice {
    std::size_t positive = 0;
    std::optional<std::size_t> negative;

    friend bool operator==(const PairChoice&, const PairChoice&) = default;
};

/// Positive: a uniformly drawn other example with the same label, else the
/// example itself. Negative: a uniformly drawn example with a different label,
/// else a uniformly drawn other example of any label.
std::vector<PairChoice> select_pairs(std::span<const LabelId> labels, std::mt19937_64& rng);
std::vector<PairChoice> select_pairs(std::span<const TrainExample> batch, std::mt19937_64& rng);

/// Batch means. `total` is (1 - beta) * ce + beta * triplet, or plain ce when
/// the model has the triplet term disabled.
struct LossBreakdown {
    double total = 0.0;
    double ce = 0.0;
    double triplet = 0.0;
};

LossBreakdown combined_loss(const Model& model, std::span<const TrainExample> batch,
                            std::span<const PairChoice> pairs, const Hyperparams& hyper);

struct LossAndGradient {
    LossBreakdown loss;
    Model gradient;  // same shapes as the model; one entry per parameter
};

/// Analytic gradient of combined_loss by backpropagation. The hinge is treated
/// as inactive at exactly zero slack.
LossAndGradient loss_and_gradient(const Model& model, std::span<const TrainExample> batch,
                                  std::span<const PairChoice> pairs, const Hyperparams& hyper);

struct GradCheckOptions {
    double step = 1e-5;
    double rel_tol = 1e-4;
    double abs_tol = 1e-8;        // used where rel_tol * |grad| would be tighter
    double hinge_margin = 1e-3;   // |slack| below this counts as on the hinge
    std::size_t max_resamples = 20;
    double resample_scale = 0.05;
    std::uint64_t seed = 1;
};

struct GradCheckReport {
    std::size_t parameters = 0;
    std::size_t failures = 0;
    std::size_t near_zero = 0;         // parameters judged by the absolute criterion
    double max_relative_error = 0.0;   // over parameters judged relatively
    double max_absolute_error = 0.0;   // over all parameters
    std::size_t resamples = 0;
    bool finite = true;
    bool passed = false;
    std::string message;
};

/// Central differences (f(p + h) - f(p - h)) / 2h for every parameter against
/// loss_and_gradient. When any triplet slack lies within `hinge_margin` of the
/// kink, the model is jittered with seeded noise and the check re-run.
GradCheckReport grad_check(const Model& model, std::span<const TrainExample> batch,
                           std::span<const PairChoice> pairs, const Hyperparams& hyper,
                           const GradCheckOptions& options = {});

/// Smallest |slack| over the batch's triplets, or +inf if none apply.
double min_hinge_distance(const Model& model, std::span<const TrainExample> batch,
                          std::span<const PairChoice> pairs, double mu);

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double mean_ce = 0.0;
    double mean_triplet = 0.0;
    double mean_total = 0.0;
    double wall_ms = 0.0;
};

/// `epoch=1 mean_ce=... mean_triplet=... mean_total=... wall_ms=...`
std::string format_log_line(const EpochLog& entry);

struct TrainResult {
    Model model;
    std::vector<EpochLog> log;
};

/// Mini-batch SGD on the combined loss. The model is initialised from
/// `hyper.seed`; batches are reshuffled every epoch from a stream derived from
/// the same seed. Throws TrainingDivergence on a non-finite loss or weight.
TrainResult train(const Dataset& data, const Hyperparams& hyper, const ModelConfig& config);

}  // namespace knncls
