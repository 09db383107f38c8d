#include "knncls/training.hpp"

#include "knncls/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <utility>

namespace knncls {

void Hyperparams::validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidArgument("beta must lie in [0, 1]");
    if (!(mu > 0.0)) throw InvalidArgument("mu must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidArgument("learning_rate must be positive");
    }
    if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
    retrieval.validate();
}

double cross_entropy(const LabelDistribution& p, LabelId gold) {
    if (gold >= p.size()) throw InvalidArgument("cross_entropy: gold label out of range");
    return -std::log(std::max(p[gold], 1e-12));
}

double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double mu) {
    return std::max(squared_l2(anchor, positive) - squared_l2(anchor, negative) + mu, 0.0);
}

std::vector<PairChoice> select_pairs(std::span<const LabelId> labels, std::mt19937_64& rng) {
    if (labels.empty()) throw InvalidArgument("select_pairs: empty batch");
    const std::size_t n = labels.size();
    std::vector<PairChoice> pairs(n);
    std::vector<std::size_t> same;
    std::vector<std::size_t> different;
    auto draw = [&rng](const std::vector<std::size_t>& pool) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        return pool[pick(rng)];
    };
    for (std::size_t i = 0; i < n; ++i) {
        same.clear();
        different.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            (labels[j] == labels[i] ? same : different).push_back(j);
        }
        pairs[i].positive = same.empty() ? i : draw(same);
        if (!different.empty()) {
            pairs[i].negative = draw(different);
        } else if (!same.empty()) {
            // Single-label batch: fall back to any other example.
            pairs[i].negative = draw(same);
        }
    }
    return pairs;
}

std::vector<PairChoice> select_pairs(std::span<const TrainExample> batch, std::mt19937_64& rng) {
    std::vector<LabelId> labels;
    labels.reserve(batch.size());
    for (const auto& ex : batch) labels.push_back(ex.label);
    return select_pairs(labels, rng);
}

namespace {

/// Intermediate values of one forward pass, kept for backprop.
struct ForwardCache {
    Vector x;        // pooled input
    Vector a1, z1;   // encoder hidden pre/post activation
    Vector a2, h0;   // encoder output pre/post activation
    Vector la, lz;   // head pre/post activation
    Vector p;        // softmax(lz)
    Vector u1, v1;   // decouple hidden pre/post activation
    Vector r;        // retrieval representation
};

Vector activated(Activation act, const Vector& pre) {
    Vector out(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) out[i] = activate(act, pre[i]);
    return out;
}

ForwardCache forward(const Model& model, const TokenSequence& seq) {
    const auto& c = model.config;
    if (seq.dim() != c.input_dim) throw DimensionError("training: example dimension mismatch");
    ForwardCache f;
    f.x = pool(seq, c.pooling);
    f.a1 = model.encoder_in.forward(f.x);
    f.z1 = activated(c.activation, f.a1);
    f.a2 = model.encoder_out.forward(f.z1);
    f.h0 = activated(c.activation, f.a2);
    f.la = model.head.forward(f.h0);
    f.lz = activated(c.activation, f.la);
    const double max = *std::max_element(f.lz.begin(), f.lz.end());
    f.p.resize(f.lz.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < f.lz.size(); ++i) sum += (f.p[i] = std::exp(f.lz[i] - max));
    for (double& v : f.p) v /= sum;
    if (c.decouple_enabled) {
        f.u1 = model.decouple_hidden.forward(f.h0);
        f.v1 = activated(c.activation, f.u1);
        f.r = model.decouple_out.forward(f.v1);
    } else {
        f.r = f.h0;
    }
    return f;
}

double ce_from_probs(const Vector& p, LabelId gold) { return -std::log(std::max(p[gold], 1e-12)); }

struct Weights {
    double ce;
    double triplet;
};

Weights term_weights(const Model& model, const Hyperparams& hyper) {
    if (!model.config.triplet_enabled) return {1.0, 0.0};
    return {1.0 - hyper.beta, hyper.beta};
}

void check_batch(const Model& model, std::span<const TrainExample> batch,
                 std::span<const PairChoice> pairs) {
    if (batch.empty()) throw InvalidArgument("loss: empty batch");
    if (pairs.size() != batch.size()) throw InvalidArgument("loss: pairs and batch differ in size");
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].label >= model.config.num_labels) throw InvalidArgument("loss: label out of range");
        if (pairs[i].positive >= batch.size() || (pairs[i].negative && *pairs[i].negative >= batch.size())) {
            throw InvalidArgument("loss: pair index out of range");
        }
        if (pairs[i].negative && *pairs[i].negative == i) {
            throw InvalidArgument("loss: an example cannot be its own negative");
        }
    }
}

/// grad += d_out (x) input, and d_in = W^T d_out when requested.
void dense_backward(const DenseLayer& layer, DenseLayer& grad, std::span<const double> input,
                    std::span<const double> d_out, Vector* d_in) {
    for (std::size_t r = 0; r < layer.out; ++r) {
        const double g = d_out[r];
        if (grad.has_bias()) grad.bias[r] += g;
        double* row = grad.weights.data() + r * layer.in;
        for (std::size_t c = 0; c < layer.in; ++c) row[c] += g * input[c];
    }
    if (d_in != nullptr) {
        d_in->assign(layer.in, 0.0);
        for (std::size_t r = 0; r < layer.out; ++r) {
            const double g = d_out[r];
            const double* row = layer.weights.data() + r * layer.in;
            for (std::size_t c = 0; c < layer.in; ++c) (*d_in)[c] += row[c] * g;
        }
    }
}

void times_activation_derivative(Activation act, Vector& grad, const Vector& pre, const Vector& post) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= activate_derivative(act, pre[i], post[i]);
}

}  // namespace

LossBreakdown combined_loss(const Model& model, std::span<const TrainExample> batch,
                            std::span<const PairChoice> pairs, const Hyperparams& hyper) {
    check_batch(model, batch, pairs);
    const Weights w = term_weights(model, hyper);
    std::vector<ForwardCache> fwd;
    fwd.reserve(batch.size());
    for (const auto& ex : batch) fwd.push_back(forward(model, ex.input));

    LossBreakdown out;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out.ce += ce_from_probs(fwd[i].p, batch[i].label);
        if (model.config.triplet_enabled && pairs[i].negative) {
            out.triplet += triplet_loss(fwd[i].r, fwd[pairs[i].positive].r, fwd[*pairs[i].negative].r, hyper.mu);
        }
    }
    const double n = static_cast<double>(batch.size());
    out.ce /= n;
    out.triplet /= n;
    out.total = w.ce * out.ce + w.triplet * out.triplet;
    return out;
}

LossAndGradient loss_and_gradient(const Model& model, std::span<const TrainExample> batch,
                                  std::span<const PairChoice> pairs, const Hyperparams& hyper) {
    check_batch(model, batch, pairs);
    const auto& c = model.config;
    const Weights w = term_weights(model, hyper);
    const std::size_t n = batch.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<ForwardCache> fwd;
    fwd.reserve(n);
    for (const auto& ex : batch) fwd.push_back(forward(model, ex.input));

    LossAndGradient result{{}, Model::zeros(c)};
    Model& grad = result.gradient;

    // Triplet gradients land on anchor, positive and negative representations.
    std::vector<Vector> d_r(n, Vector(model.retrieval_dim(), 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        result.loss.ce += ce_from_probs(fwd[i].p, batch[i].label);
        if (!c.triplet_enabled || !pairs[i].negative) continue;
        const std::size_t ip = pairs[i].positive;
        const std::size_t in = *pairs[i].negative;
        const Vector& a = fwd[i].r;
        const Vector& p = fwd[ip].r;
        const Vector& q = fwd[in].r;
        const double slack = squared_l2(a, p) - squared_l2(a, q) + hyper.mu;
        if (slack <= 0.0) continue;
        result.loss.triplet += slack;
        const double scale = 2.0 * w.triplet * inv_n;
        for (std::size_t j = 0; j < a.size(); ++j) {
            d_r[i][j] += scale * (q[j] - p[j]);
            d_r[ip][j] -= scale * (a[j] - p[j]);
            d_r[in][j] += scale * (a[j] - q[j]);
        }
    }
    result.loss.ce *= inv_n;
    result.loss.triplet *= inv_n;
    result.loss.total = w.ce * result.loss.ce + w.triplet * result.loss.triplet;

    Vector d_h0, d_tmp;
    for (std::size_t i = 0; i < n; ++i) {
        const ForwardCache& f = fwd[i];
        const LabelId gold = batch[i].label;

        // Cross-entropy through softmax; zero once the log clamp is active.
        Vector d_la(f.p.size(), 0.0);
        if (w.ce != 0.0 && f.p[gold] >= 1e-12) {
            for (std::size_t k = 0; k < f.p.size(); ++k) {
                d_la[k] = w.ce * inv_n * (f.p[k] - (k == gold ? 1.0 : 0.0));
            }
            times_activation_derivative(c.activation, d_la, f.la, f.lz);
        }
        dense_backward(model.head, grad.head, f.h0, d_la, &d_h0);

        if (c.decouple_enabled) {
            Vector d_v1;
            dense_backward(model.decouple_out, grad.decouple_out, f.v1, d_r[i], &d_v1);
            times_activation_derivative(c.activation, d_v1, f.u1, f.v1);
            dense_backward(model.decouple_hidden, grad.decouple_hidden, f.h0, d_v1, &d_tmp);
            for (std::size_t j = 0; j < d_h0.size(); ++j) d_h0[j] += d_tmp[j];
        } else {
            for (std::size_t j = 0; j < d_h0.size(); ++j) d_h0[j] += d_r[i][j];
        }

        times_activation_derivative(c.activation, d_h0, f.a2, f.h0);
        Vector d_z1;
        dense_backward(model.encoder_out, grad.encoder_out, f.z1, d_h0, &d_z1);
        times_activation_derivative(c.activation, d_z1, f.a1, f.z1);
        dense_backward(model.encoder_in, grad.encoder_in, f.x, d_z1, nullptr);
    }
    return result;
}

double min_hinge_distance(const Model& model, std::span<const TrainExample> batch,
                          std::span<const PairChoice> pairs, double mu) {
    check_batch(model, batch, pairs);
    double best = std::numeric_limits<double>::infinity();
    if (!model.config.triplet_enabled) return best;
    std::vector<Vector> reps;
    reps.reserve(batch.size());
    for (const auto& ex : batch) reps.push_back(encode(model, ex.input).r);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!pairs[i].negative) continue;
        const double slack = squared_l2(reps[i], reps[pairs[i].positive]) -
                             squared_l2(reps[i], reps[*pairs[i].negative]) + mu;
        best = std::min(best, std::abs(slack));
    }
    return best;
}

GradCheckReport grad_check(const Model& model, std::span<const TrainExample> batch,
                           std::span<const PairChoice> pairs, const Hyperparams& hyper,
                           const GradCheckOptions& options) {
    GradCheckReport report;
    Model point = model;
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> jitter(0.0, options.resample_scale);

    const bool uses_hinge = model.config.triplet_enabled && hyper.beta > 0.0;
    while (uses_hinge && min_hinge_distance(point, batch, pairs, hyper.mu) < options.hinge_margin) {
        if (report.resamples == options.max_resamples) {
            report.message = "every resampled point stayed on a hinge boundary";
            return report;
        }
        ++report.resamples;
        point = model;
        for (auto block : point.parameter_blocks()) {
            for (double& v : block) v += jitter(rng);
        }
    }

    LossAndGradient analytic;
    try {
        analytic = loss_and_gradient(point, batch, pairs, hyper);
    } catch (const Error& e) {
        report.finite = false;
        report.message = e.what();
        return report;
    }
    if (!std::isfinite(analytic.loss.total)) {
        report.finite = false;
        report.message = "loss is not finite at the evaluation point";
        return report;
    }

    auto blocks = point.parameter_blocks();
    const auto grads = std::as_const(analytic.gradient).parameter_blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (std::size_t i = 0; i < blocks[b].size(); ++i) {
            double& param = blocks[b][i];
            const double saved = param;
            param = saved + options.step;
            const double up = combined_loss(point, batch, pairs, hyper).total;
            param = saved - options.step;
            const double down = combined_loss(point, batch, pairs, hyper).total;
            param = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                report.finite = false;
                report.message = "loss became non-finite under perturbation";
                return report;
            }
            const double numeric = (up - down) / (2.0 * options.step);
            const double exact = grads[b][i];
            const double abs_err = std::abs(numeric - exact);
            const double scale = std::max(std::abs(numeric), std::abs(exact));
            ++report.parameters;
            report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
            if (options.rel_tol * scale < options.abs_tol) {
                ++report.near_zero;
                if (abs_err > options.abs_tol) ++report.failures;
            } else {
                const double rel = abs_err / scale;
                report.max_relative_error = std::max(report.max_relative_error, rel);
                if (rel > options.rel_tol) ++report.failures;
            }
        }
    }
    report.passed = report.failures == 0;
    if (report.message.empty()) {
        report.message = report.passed ? "ok" : std::to_string(report.failures) + " parameters outside tolerance";
    }
    return report;
}

std::string format_log_line(const EpochLog& entry) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "epoch=%zu mean_ce=%.17g mean_triplet=%.17g mean_total=%.17g wall_ms=%.3f",
                  entry.epoch, entry.mean_ce, entry.mean_triplet, entry.mean_total, entry.wall_ms);
    return buf;
}

namespace {

bool all_finite(const Model& model) {
    for (auto block : model.parameter_blocks()) {
        for (double v : block) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

}  // namespace

TrainResult train(const Dataset& data, const Hyperparams& hyper, const ModelConfig& config) {
    hyper.validate();
    if (data.examples.empty()) throw InvalidArgument("train: empty dataset");
    ModelConfig cfg = config;
    cfg.input_dim = data.input_dim;
    cfg.num_labels = data.num_labels;
    cfg = cfg.resolved();
    if (cfg.triplet_enabled) {
        const LabelId first = data.examples.front().label;
        const bool distinct = std::any_of(data.examples.begin(), data.examples.end(),
                                          [first](const TrainExample& ex) { return ex.label != first; });
        if (!distinct) throw InvalidArgument("train: triplet training needs at least two distinct labels");
    }

    TrainResult result{Model::initialize(cfg, hyper.seed), {}};
    Model& model = result.model;
    std::mt19937_64 rng(hyper.seed ^ 0xd1b54a32d192ed03ULL);

    std::vector<std::size_t> order(data.examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<TrainExample> batch;

    for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        EpochLog entry;
        entry.epoch = epoch;
        for (std::size_t begin = 0; begin < order.size(); begin += hyper.batch_size) {
            const std::size_t end = std::min(order.size(), begin + hyper.batch_size);
            batch.clear();
            for (std::size_t i = begin; i < end; ++i) batch.push_back(data.examples[order[i]]);
            const auto pairs = select_pairs(std::span<const TrainExample>(batch), rng);
            auto step = loss_and_gradient(model, batch, pairs, hyper);
            if (!std::isfinite(step.loss.total)) {
                throw TrainingDivergence("non-finite loss at epoch " + std::to_string(epoch) +
                                         ", batch starting at " + std::to_string(begin));
            }
            const double weight = static_cast<double>(batch.size());
            entry.mean_ce += step.loss.ce * weight;
            entry.mean_triplet += step.loss.triplet * weight;
            entry.mean_total += step.loss.total * weight;

            auto params = model.parameter_blocks();
            const auto grads = std::as_const(step.gradient).parameter_blocks();
            for (std::size_t b = 0; b < params.size(); ++b) {
                for (std::size_t i = 0; i < params[b].size(); ++i) {
                    params[b][i] -= hyper.learning_rate * grads[b][i];
                }
            }
            if (!all_finite(model)) {
                throw TrainingDivergence("non-finite weights after update at epoch " + std::to_string(epoch));
            }
        }
        const double n = static_cast<double>(order.size());
        entry.mean_ce /= n;
        entry.mean_triplet /= n;
        entry.mean_total /= n;
        entry.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        result.log.push_back(entry);
    }
    return result;
}

}  // namespace knncls
