#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace knncls {

/// Dense embedding. Distances and distributions are always computed in double.
using Vector = std::vector<double>;

using LabelId = std::uint32_t;

/// Throws DimensionError if any entry is NaN or infinite.
void require_finite(std::span<const double> values, const char* what);

/// Sum of squared coordinate differences. Throws DimensionError on length mismatch.
double squared_l2(std::span<const double> a, std::span<const double> b);

/// Mixed-precision overload used against stored f32 datastore keys.
double squared_l2(std::span<const double> a, std::span<const float> b);

/// Probability vector over a label set of fixed size.
///
/// Construction validates that every entry lies in [0, 1] and that the entries
/// sum to one within `kSumTolerance`.
class LabelDistribution {
public:
    static constexpr double kSumTolerance = 1e-9;

    explicit LabelDistribution(std::vector<double> probs);

    static LabelDistribution uniform(std::size_t num_labels);
    static LabelDistribution one_hot(std::size_t num_labels, LabelId label);

    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    const std::vector<double>& probs() const noexcept { return probs_; }

    friend bool operator==(const LabelDistribution&, const LabelDistribution&) = default;

private:
    std::vector<double> probs_;
};

/// Numerically stable softmax (max-subtracted). Throws InvalidArgument on empty
/// or non-finite input.
LabelDistribution softmax(std::span<const double> logits);

/// Index of the largest probability; ties go to the lowest index.
LabelId argmax_label(const LabelDistribution& dist);

}  // namespace knncls
