#pragma once

#include "knncls/core.hpp"
#include "knncls/model.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace knncls {

struct TrainExample {
    TokenSequence input;
    LabelId label = 0;
    std::uint64_t id = 0;

    friend bool operator==(const TrainExample&, const TrainExample&) = default;
};

struct Dataset {
    std::vector<TrainExample> examples;
    std::uint32_t num_labels = 0;
    std::vector<std::string> label_names;  // empty, or exactly num_labels entries
    std::size_t input_dim = 0;

    std::size_t size() const noexcept { return examples.size(); }
    /// Throws InvalidArgument/DimensionError if a label or a token dimension is off.
    void validate() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// One JSON object per line:
///   {"label": 1, "features": [0.5, ...]}
///   {"label": "pos", "tokens": [[...], [...]]}
/// An optional first record without "label" is a header carrying
/// "label_names" and/or "num_labels". Blank lines are skipped; ids follow
/// record order. Errors are DataError carrying the 1-based line number.
Dataset parse_jsonl(std::istream& in);
Dataset load_jsonl(const std::filesystem::path& path);

/// Emits a header line with num_labels (and label_names if present), then one
/// record per example. Length-1 sequences are written as "features".
void write_jsonl(const Dataset& ds, std::ostream& out);
void write_jsonl(const Dataset& ds, const std::filesystem::path& path);

struct SyntheticSpec {
    std::size_t num_classes = 4;
    std::size_t dim = 16;
    std::size_t per_class_count = 125;
    double class_separation = 6.0;
    double noise_sigma = 1.0;
    std::uint64_t seed = 7;

    void validate() const;
};

struct SplitDataset {
    Dataset train;
    Dataset test;
};

/// Isotropic Gaussian clusters. Class c is centred at
/// class_separation * Q_m e_(c mod dim), where Q_m is a seeded random rotation
/// for the m-th pass over the basis (m = c / dim). Each class is split 80/20
/// into train/test.
SplitDataset generate_synthetic(const SyntheticSpec& spec);

/// Cluster centres used by generate_synthetic, one per class.
std::vector<Vector> synthetic_class_means(const SyntheticSpec& spec);

}  // namespace knncls
