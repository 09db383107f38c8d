#include "knncls/evaluation.hpp"

#include "knncls/errors.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <ostream>

namespace knncls {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_labels(const Model& model, const Dataset& data) {
    if (data.num_labels > model.config.num_labels) {
        throw DimensionError("dataset has more labels than the model predicts");
    }
}

}  // namespace

void SweepSpec::validate() const {
    if (k_values.empty() || temperature_values.empty() || lambda_values.empty()) {
        throw InvalidArgument("sweep: k, T and lambda lists must be non-empty");
    }
    for (std::size_t k : k_values) RetrievalParams{k, 1.0, 0.0}.validate();
    for (double t : temperature_values) RetrievalParams{1, t, 0.0}.validate();
    for (double l : lambda_values) RetrievalParams{1, 1.0, l}.validate();
}

Datastore build_datastore(const Model& model, const Dataset& train) {
    check_labels(model, train);
    std::vector<Datastore::Entry> entries;
    entries.reserve(train.size());
    for (const auto& ex : train.examples) {
        entries.emplace_back(encode(model, ex.input).r, ex.label);
    }
    return Datastore::build(entries, static_cast<std::uint32_t>(model.config.num_labels),
                            static_cast<std::uint32_t>(model.retrieval_dim()));
}

std::vector<Prediction> predict_all(const Model& model, const Datastore* ds, const Dataset& data,
                                    const RetrievalParams& params) {
    check_labels(model, data);
    std::vector<Prediction> out;
    out.reserve(data.size());
    for (const auto& ex : data.examples) out.push_back(predict(model, ds, ex.input, params));
    return out;
}

EvalReport evaluate(const Model& model, const Datastore* ds, const Dataset& test,
                    const RetrievalParams& params, bool record_timing) {
    params.validate();
    check_labels(model, test);
    const auto start = Clock::now();
    EvalRow row{params.k, params.temperature, params.lambda, 0.0, 0, test.size(), 0.0};
    for (const auto& ex : test.examples) {
        if (predict(model, ds, ex.input, params).label == ex.label) ++row.n_correct;
    }
    row.accuracy = row.n_total == 0 ? 0.0 : static_cast<double>(row.n_correct) / static_cast<double>(row.n_total);
    EvalReport report{row, 0.0};
    if (record_timing) report.wall_ms = report.row.wall_ms = elapsed_ms(start);
    return report;
}

SweepReport sweep(const Model& model, const Datastore* ds, const Dataset& test, const SweepSpec& spec,
                  bool record_timing) {
    spec.validate();
    check_labels(model, test);
    const auto start = Clock::now();
    const bool needs_retrieval =
        std::any_of(spec.lambda_values.begin(), spec.lambda_values.end(), [](double l) { return l > 0.0; });
    if (needs_retrieval) {
        if (ds == nullptr || ds->empty()) {
            throw RetrievalUnavailable("sweep: lambda > 0 requires a non-empty datastore");
        }
        check_compatible(model, *ds);
    }
    const std::size_t max_k = *std::max_element(spec.k_values.begin(), spec.k_values.end());
    const std::size_t num_labels = model.config.num_labels;

    std::vector<LabelDistribution> p_cls;
    std::vector<std::vector<NeighborHit>> hits;
    p_cls.reserve(test.size());
    hits.reserve(test.size());
    for (const auto& ex : test.examples) {
        const Encoding enc = encode(model, ex.input);
        p_cls.push_back(classify(model, enc.h0));
        hits.push_back(needs_retrieval ? ds->search(enc.r, max_k) : std::vector<NeighborHit>{});
    }

    SweepReport report;
    report.rows.reserve(spec.cells());
    for (std::size_t k : spec.k_values) {
        for (double t : spec.temperature_values) {
            for (double lambda : spec.lambda_values) {
                const auto cell_start = Clock::now();
                EvalRow row{k, t, lambda, 0.0, 0, test.size(), 0.0};
                for (std::size_t i = 0; i < test.size(); ++i) {
                    LabelId label;
                    if (lambda == 0.0) {
                        label = argmax_label(p_cls[i]);
                    } else {
                        const std::span<const NeighborHit> prefix(hits[i].data(), std::min(k, hits[i].size()));
                        label = argmax_label(interpolate(knn_distribution(prefix, t, num_labels), p_cls[i], lambda));
                    }
                    if (label == test.examples[i].label) ++row.n_correct;
                }
                row.accuracy = row.n_total == 0
                                   ? 0.0
                                   : static_cast<double>(row.n_correct) / static_cast<double>(row.n_total);
                if (record_timing) row.wall_ms = elapsed_ms(cell_start);
                report.rows.push_back(row);
            }
        }
    }
    for (std::size_t i = 1; i < report.rows.size(); ++i) {
        if (report.rows[i].accuracy > report.rows[report.best].accuracy) report.best = i;
    }
    if (record_timing) report.wall_ms = elapsed_ms(start);
    return report;
}

std::string format_number(double value) {
    char buf[64];
    const auto result = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, result.ptr);
}

void write_report_csv(std::span<const EvalRow> rows, std::ostream& out) {
    out << kReportHeader << '\n';
    for (const auto& r : rows) {
        out << r.k << ',' << format_number(r.temperature) << ',' << format_number(r.lambda) << ','
            << format_number(r.accuracy) << ',' << r.n_correct << ',' << r.n_total << ','
            << format_number(r.wall_ms) << '\n';
    }
}

void write_report_csv(std::span<const EvalRow> rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string() + " for writing");
    write_report_csv(rows, out);
    if (!out) throw FormatError(FormatErrorKind::Io, "write failed for " + path.string());
}

}  // namespace knncls
