#include "knncls/retrieval.hpp"

#include "knncls/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace knncls {

void RetrievalParams::validate() const {
    if (k < 1) throw InvalidArgument("retrieval: k must be at least 1");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw InvalidArgument("retrieval: temperature must be positive and finite");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw InvalidArgument("retrieval: lambda must lie in [0, 1]");
    }
}

LabelDistribution knn_distribution(std::span<const NeighborHit> hits, double temperature,
                                   std::size_t num_labels) {
    if (hits.empty()) {
        throw RetrievalUnavailable("knn_distribution: no neighbors retrieved");
    }
    if (!(temperature > 0.0)) {
        throw InvalidArgument("knn_distribution: temperature must be positive");
    }
    // Max-subtract the -d/T scores; the largest score belongs to the smallest distance.
    double min_distance = hits.front().distance;
    for (const auto& hit : hits) min_distance = std::min(min_distance, hit.distance);

    std::vector<double> mass(num_labels, 0.0);
    double total = 0.0;
    for (const auto& hit : hits) {
        if (hit.label >= num_labels) {
            throw InvalidArgument("knn_distribution: hit label " + std::to_string(hit.label) +
                                  " out of range");
        }
        const double w = std::exp(-(hit.distance - min_distance) / temperature);
        mass[hit.label] += w;
        total += w;
    }
    for (double& m : mass) m /= total;
    return LabelDistribution(std::move(mass));
}

LabelDistribution interpolate(const LabelDistribution& p_knn, const LabelDistribution& p_cls,
                              double lambda) {
    if (p_knn.size() != p_cls.size()) {
        throw DimensionError("interpolate: distributions have different label counts");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw InvalidArgument("interpolate: lambda must lie in [0, 1]");
    }
    // Endpoints return the inputs verbatim so lambda in {0, 1} is bit-exact.
    if (lambda == 0.0) return p_cls;
    if (lambda == 1.0) return p_knn;
    std::vector<double> out(p_knn.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        // Rounding can push a certain label a hair past 1.
        out[i] = std::min(1.0, lambda * p_knn[i] + (1.0 - lambda) * p_cls[i]);
    }
    return LabelDistribution(std::move(out));
}

void check_compatible(const Model& model, const Datastore& ds) {
    if (!ds.empty() && ds.dim() != model.retrieval_dim()) {
        throw DimensionError("datastore key dimension " + std::to_string(ds.dim()) +
                             " does not match model retrieval dimension " +
                             std::to_string(model.retrieval_dim()));
    }
    if (ds.num_labels() != model.config.num_labels) {
        throw DimensionError("datastore has " + std::to_string(ds.num_labels()) +
                             " labels, model has " + std::to_string(model.config.num_labels));
    }
}

Prediction predict_encoded(const Model& model, const Datastore* ds, const Encoding& encoding,
                           const RetrievalParams& params) {
    params.validate();
    LabelDistribution p_cls = classify(model, encoding.h0);
    if (params.lambda == 0.0) {
        return {argmax_label(p_cls), p_cls, p_cls, p_cls};
    }
    if (ds == nullptr || ds->empty()) {
        throw RetrievalUnavailable("predict: lambda > 0 requires a non-empty datastore");
    }
    check_compatible(model, *ds);
    const auto hits = ds->search(encoding.r, params.k);
    LabelDistribution p_knn = knn_distribution(hits, params.temperature, model.config.num_labels);
    LabelDistribution p_final = interpolate(p_knn, p_cls, params.lambda);
    const LabelId label = argmax_label(p_final);
    return {label, std::move(p_final), std::move(p_cls), std::move(p_knn)};
}

Prediction predict(const Model& model, const Datastore* ds, const TokenSequence& input,
                   const RetrievalParams& params) {
    return predict_encoded(model, ds, encode(model, input), params);
}

}  // namespace knncls
