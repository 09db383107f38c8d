#pragma once

#include "knncls/data_io.hpp"
#include "knncls/evaluation.hpp"
#include "knncls/model.hpp"
#include "knncls/training.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace knncls {

/// One experiment, read from a single JSON document:
///
///   {
///     "data":      {"train": "train.jsonl", "test": "test.jsonl"}
///                  or {"synthetic": {"num_classes": 4, "dim": 16, ...}},
///     "model":     {"hidden_dim": 32, "emb_dim": 32, "pooling": "cls",
///                   "activation": "tanh", "decouple": true, "triplet": true, ...},
///     "train":     {"beta": 0.5, "mu": 1.0, "learning_rate": 0.05,
///                   "batch_size": 32, "epochs": 20, "seed": 42},
///     "retrieval": {"k": 64, "T": 10, "lambda": 0.2},
///     "sweep":     {"k": [1, 8, 64], "T": [1, 10, 100], "lambda": [0, 0.5, 1]},
///     "output":    {"model": "model.json", "log": "train.log"}
///   }
///
/// Every section is optional. Unknown keys are rejected. Relative data paths
/// resolve against the config file's directory.
struct RunConfig {
    std::optional<std::filesystem::path> train_path;
    std::optional<std::filesystem::path> test_path;
    std::optional<SyntheticSpec> synthetic;
    ModelConfig model;
    Hyperparams hyper;
    SweepSpec sweep;
    std::filesystem::path model_out = "model.json";
    std::filesystem::path log_out = "train.log";
};

/// Throws FormatError(Malformed) on bad JSON, unknown keys or invalid values.
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// The training and test split named by the config: files when given,
/// otherwise the synthetic spec (defaulting to SyntheticSpec{}).
SplitDataset load_config_data(const RunConfig& config);

}  // namespace knncls
