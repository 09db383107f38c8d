#include "knncls/core.hpp"

#include "knncls/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace knncls {

const char* to_string(FormatErrorKind kind) {
    switch (kind) {
        case FormatErrorKind::Io: return "io error";
        case FormatErrorKind::BadMagic: return "bad magic";
        case FormatErrorKind::VersionMismatch: return "version mismatch";
        case FormatErrorKind::Truncated: return "truncated file";
        case FormatErrorKind::ChecksumMismatch: return "checksum mismatch";
        case FormatErrorKind::ShapeMismatch: return "shape mismatch";
        case FormatErrorKind::Malformed: return "malformed";
    }
    return "unknown";
}

void require_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw DimensionError(std::string(what) + " contains a non-finite value");
        }
    }
}

namespace {

template <typename B>
double squared_l2_impl(std::span<const double> a, std::span<const B> b) {
    if (a.size() != b.size()) {
        throw DimensionError("squared_l2: dimension mismatch (" + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()) + ")");
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - static_cast<double>(b[j]);
        sum += d * d;
    }
    return sum;
}

}  // namespace

double squared_l2(std::span<const double> a, std::span<const double> b) {
    return squared_l2_impl(a, b);
}

double squared_l2(std::span<const double> a, std::span<const float> b) {
    return squared_l2_impl(a, b);
}

LabelDistribution::LabelDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) {
        throw InvalidArgument("LabelDistribution: empty label set");
    }
    double sum = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw InvalidArgument("LabelDistribution: entry outside [0, 1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        throw InvalidArgument("LabelDistribution: entries sum to " + std::to_string(sum));
    }
}

LabelDistribution LabelDistribution::uniform(std::size_t num_labels) {
    if (num_labels == 0) {
        throw InvalidArgument("LabelDistribution: empty label set");
    }
    return LabelDistribution(std::vector<double>(num_labels, 1.0 / static_cast<double>(num_labels)));
}

LabelDistribution LabelDistribution::one_hot(std::size_t num_labels, LabelId label) {
    if (label >= num_labels) {
        throw InvalidArgument("one_hot: label out of range");
    }
    std::vector<double> probs(num_labels, 0.0);
    probs[label] = 1.0;
    return LabelDistribution(std::move(probs));
}

LabelDistribution softmax(std::span<const double> logits) {
    if (logits.empty()) {
        throw InvalidArgument("softmax: empty input");
    }
    for (double v : logits) {
        if (!std::isfinite(v)) {
            throw InvalidArgument("softmax: non-finite logit");
        }
    }
    const double max = *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - max);
        sum += probs[i];
    }
    for (double& p : probs) {
        p /= sum;
    }
    return LabelDistribution(std::move(probs));
}

LabelId argmax_label(const LabelDistribution& dist) {
    const auto& probs = dist.probs();
    // max_element returns the first maximal element.
    return static_cast<LabelId>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

}  // namespace knncls
