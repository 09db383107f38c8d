#pragma once

#include "knncls/core.hpp"
#include "knncls/datastore.hpp"
#include "knncls/model.hpp"

#include <span>

namespace knncls {

struct RetrievalParams {
    std::size_t k = 64;
    double temperature = 10.0;
    double lambda = 0.2;

    /// Throws InvalidArgument unless k >= 1, T > 0 and 0 <= lambda <= 1.
    void validate() const;
};

/// Label distribution from neighbor hits: each hit contributes
/// exp(-distance / T) to its label, normalized over all hits.
/// Throws RetrievalUnavailable for an empty hit list.
LabelDistribution knn_distribution(std::span<const NeighborHit> hits, double temperature,
                                   std::size_t num_labels);

/// lambda * p_knn + (1 - lambda) * p_cls.
LabelDistribution interpolate(const LabelDistribution& p_knn, const LabelDistribution& p_cls,
                              double lambda);

struct Prediction {
    LabelId label = 0;
    LabelDistribution p_final;
    LabelDistribution p_cls;
    /// Equal to p_cls when lambda == 0 (retrieval skipped).
    LabelDistribution p_knn;
};

/// Encodes `input`, classifies from h0, queries `ds` with the retrieval
/// representation and mixes the two distributions. With lambda == 0 the
/// datastore is never consulted and may be null or empty.
Prediction predict(const Model& model, const Datastore* ds, const TokenSequence& input,
                   const RetrievalParams& params);

/// Same as above but for an already computed encoding.
Prediction predict_encoded(const Model& model, const Datastore* ds, const Encoding& encoding,
                           const RetrievalParams& params);

/// Throws DimensionError unless the datastore keys match the model's
/// retrieval representation and label count.
void check_compatible(const Model& model, const Datastore& ds);

}  // namespace knncls
