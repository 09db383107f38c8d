#pragma once

#include "knncls/data_io.hpp"
#include "knncls/datastore.hpp"
#include "knncls/model.hpp"
#include "knncls/retrieval.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace knncls {

/// One (k, T, lambda) cell of an evaluation.
struct EvalRow {
    std::size_t k = 0;
    double temperature = 0.0;
    double lambda = 0.0;
    double accuracy = 0.0;
    std::size_t n_correct = 0;
    std::size_t n_total = 0;
    double wall_ms = 0.0;

    friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct EvalReport {
    EvalRow row;
    double wall_ms = 0.0;
};

struct SweepSpec {
    std::vector<std::size_t> k_values{1, 8, 64};
    std::vector<double> temperature_values{1.0, 10.0, 100.0};
    std::vector<double> lambda_values{0.0, 0.5, 1.0};

    void validate() const;
    std::size_t cells() const noexcept {
        return k_values.size() * temperature_values.size() * lambda_values.size();
    }
};

struct SweepReport {
    std::vector<EvalRow> rows;  // grid order: k, then T, then lambda
    std::size_t best = 0;       // first row with the highest accuracy
    double wall_ms = 0.0;
};

/// Keys every training example by the model's retrieval representation.
Datastore build_datastore(const Model& model, const Dataset& train);

/// Per-example predictions. `ds` may be null when params.lambda == 0.
std::vector<Prediction> predict_all(const Model& model, const Datastore* ds, const Dataset& data,
                                    const RetrievalParams& params);

/// Runs predict() on every example. Timing fields stay 0 unless
/// `record_timing` is set, so reports are reproducible byte for byte.
EvalReport evaluate(const Model& model, const Datastore* ds, const Dataset& test,
                    const RetrievalParams& params, bool record_timing = false);

/// Full grid. Each query is encoded and searched once at the largest k; the
/// smaller k cells use prefixes of the sorted hit list.
SweepReport sweep(const Model& model, const Datastore* ds, const Dataset& test, const SweepSpec& spec,
                  bool record_timing = false);

inline constexpr const char* kReportHeader = "k,T,lambda,accuracy,n_correct,n_total,wall_ms";

/// Shortest decimal text that parses back to the same double.
std::string format_number(double value);

void write_report_csv(std::span<const EvalRow> rows, std::ostream& out);
void write_report_csv(std::span<const EvalRow> rows, const std::filesystem::path& path);

}  // namespace knncls
