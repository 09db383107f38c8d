#include "knncls/data_io.hpp"

#include "knncls/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <cctype>
#include <numeric>
#include <optional>
#include <random>
#include <unordered_map>

namespace knncls {

using nlohmann::json;

void Dataset::validate() const {
    if (num_labels == 0) throw InvalidArgument("dataset: num_labels must be positive");
    if (!label_names.empty() && label_names.size() != num_labels) {
        throw InvalidArgument("dataset: label_names must have num_labels entries");
    }
    for (const auto& ex : examples) {
        if (ex.label >= num_labels) {
            throw InvalidArgument("dataset: example " + std::to_string(ex.id) + " label out of range");
        }
        if (ex.input.dim() != input_dim) {
            throw DimensionError("dataset: example " + std::to_string(ex.id) + " has dimension " +
                                 std::to_string(ex.input.dim()) + ", expected " +
                                 std::to_string(input_dim));
        }
    }
}

namespace {

Vector parse_vector(const json& j, std::size_t line, const char* what) {
    if (!j.is_array() || j.empty()) {
        throw DataError(line, std::string(what) + " must be a non-empty numeric array");
    }
    Vector v;
    v.reserve(j.size());
    for (const auto& x : j) {
        if (!x.is_number()) {
            throw DataError(line, std::string(what) + " contains a non-numeric entry");
        }
        const double d = x.get<double>();
        if (!std::isfinite(d)) throw DataError(line, std::string(what) + " contains a non-finite entry");
        v.push_back(d);
    }
    return v;
}

}  // namespace

Dataset parse_jsonl(std::istream& in) {
    Dataset ds;
    std::unordered_map<std::string, LabelId> name_to_id;
    std::optional<std::uint32_t> declared_labels;
    bool seen_record = false;
    LabelId max_label = 0;
    std::size_t line_no = 0;
    std::string line;

    while (std::getline(in, line)) {
        ++line_no;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
            continue;
        }
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error&) {
            throw DataError(line_no, "not valid JSON");
        }
        if (!rec.is_object()) throw DataError(line_no, "record must be a JSON object");

        if (!rec.contains("label")) {
            if (seen_record || declared_labels || !ds.label_names.empty()) {
                throw DataError(line_no, "record has no \"label\" (header only allowed on first line)");
            }
            try {
                if (rec.contains("label_names")) {
                    ds.label_names = rec.at("label_names").get<std::vector<std::string>>();
                    for (std::size_t i = 0; i < ds.label_names.size(); ++i) {
                        if (!name_to_id.emplace(ds.label_names[i], static_cast<LabelId>(i)).second) {
                            throw DataError(line_no, "duplicate label name '" + ds.label_names[i] + "'");
                        }
                    }
                }
                if (rec.contains("num_labels")) declared_labels = rec.at("num_labels").get<std::uint32_t>();
            } catch (const json::exception&) {
                throw DataError(line_no, "malformed header");
            }
            if (!rec.contains("label_names") && !rec.contains("num_labels")) {
                throw DataError(line_no, "record has no \"label\"");
            }
            if (declared_labels && !ds.label_names.empty() && *declared_labels != ds.label_names.size()) {
                throw DataError(line_no, "header num_labels disagrees with label_names");
            }
            if (declared_labels && *declared_labels == 0) throw DataError(line_no, "num_labels must be positive");
            continue;
        }

        LabelId label = 0;
        const json& l = rec.at("label");
        if (l.is_number_integer() && l.get<long long>() >= 0) {
            label = static_cast<LabelId>(l.get<long long>());
        } else if (l.is_string()) {
            auto it = name_to_id.find(l.get<std::string>());
            if (it == name_to_id.end()) {
                throw DataError(line_no, "unknown label name '" + l.get<std::string>() + "'");
            }
            label = it->second;
        } else {
            throw DataError(line_no, "label must be a non-negative integer or a declared name");
        }
        const std::uint32_t limit =
            declared_labels ? *declared_labels : static_cast<std::uint32_t>(ds.label_names.size());
        if (limit > 0 && label >= limit) {
            throw DataError(line_no, "label " + std::to_string(label) + " out of range");
        }

        std::vector<Vector> tokens;
        if (rec.contains("features") == rec.contains("tokens")) {
            throw DataError(line_no, "record needs exactly one of \"features\" or \"tokens\"");
        }
        if (rec.contains("features")) {
            tokens.push_back(parse_vector(rec.at("features"), line_no, "features"));
        } else {
            const json& t = rec.at("tokens");
            if (!t.is_array() || t.empty()) throw DataError(line_no, "tokens must be a non-empty array");
            for (const auto& tok : t) tokens.push_back(parse_vector(tok, line_no, "token"));
        }
        const std::size_t dim = tokens.front().size();
        for (const auto& tok : tokens) {
            if (tok.size() != dim) throw DataError(line_no, "tokens have mixed dimensions");
        }
        if (!seen_record) {
            ds.input_dim = dim;
        } else if (dim != ds.input_dim) {
            throw DataError(line_no, "dimension " + std::to_string(dim) + " differs from earlier records (" +
                                         std::to_string(ds.input_dim) + ")");
        }
        seen_record = true;
        max_label = std::max(max_label, label);
        ds.examples.push_back({TokenSequence(std::move(tokens)), label, ds.examples.size()});
    }
    if (!seen_record) throw DataError(line_no, "dataset contains no records");

    if (declared_labels) {
        ds.num_labels = *declared_labels;
    } else if (!ds.label_names.empty()) {
        ds.num_labels = static_cast<std::uint32_t>(ds.label_names.size());
    } else {
        ds.num_labels = max_label + 1;
    }
    return ds;
}

Dataset load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
    return parse_jsonl(in);
}

void write_jsonl(const Dataset& ds, std::ostream& out) {
    json header{{"num_labels", ds.num_labels}};
    if (!ds.label_names.empty()) header["label_names"] = ds.label_names;
    out << header.dump() << '\n';
    for (const auto& ex : ds.examples) {
        json rec{{"label", ex.label}};
        const auto& tokens = ex.input.tokens();
        if (tokens.size() == 1) {
            rec["features"] = tokens.front();
        } else {
            rec["tokens"] = tokens;
        }
        out << rec.dump() << '\n';
    }
}

void write_jsonl(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string() + " for writing");
    write_jsonl(ds, out);
    if (!out) throw FormatError(FormatErrorKind::Io, "write failed for " + path.string());
}

void SyntheticSpec::validate() const {
    if (num_classes < 2) throw InvalidArgument("synthetic: need at least two classes");
    if (dim == 0 || per_class_count == 0) throw InvalidArgument("synthetic: dim and per_class_count must be positive");
    if (!(class_separation > 0.0)) throw InvalidArgument("synthetic: class_separation must be positive");
    if (!(noise_sigma >= 0.0)) throw InvalidArgument("synthetic: noise_sigma must be non-negative");
}

namespace {

/// Gram-Schmidt on a Gaussian matrix; columns form an orthonormal basis.
std::vector<Vector> random_rotation(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vector> cols;
    while (cols.size() < dim) {
        Vector v(dim);
        for (double& x : v) x = normal(rng);
        for (const auto& c : cols) {
            const double dot = std::inner_product(v.begin(), v.end(), c.begin(), 0.0);
            for (std::size_t j = 0; j < dim; ++j) v[j] -= dot * c[j];
        }
        const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (norm < 1e-8) continue;  // degenerate draw, resample
        for (double& x : v) x /= norm;
        cols.push_back(std::move(v));
    }
    return cols;
}

}  // namespace

std::vector<Vector> synthetic_class_means(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::vector<std::vector<Vector>> rotations;
    std::vector<Vector> means;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        const std::size_t pass = c / spec.dim;
        while (rotations.size() <= pass) rotations.push_back(random_rotation(spec.dim, rng));
        Vector mean = rotations[pass][c % spec.dim];
        for (double& x : mean) x *= spec.class_separation;
        means.push_back(std::move(mean));
    }
    return means;
}

SplitDataset generate_synthetic(const SyntheticSpec& spec) {
    const auto means = synthetic_class_means(spec);
    // Separate stream from the rotations so means stay fixed if sampling changes.
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, 1.0);

    SplitDataset out;
    for (Dataset* d : {&out.train, &out.test}) {
        d->num_labels = static_cast<std::uint32_t>(spec.num_classes);
        d->input_dim = spec.dim;
    }
    const auto train_per_class = static_cast<std::size_t>(
        std::llround(0.8 * static_cast<double>(spec.per_class_count)));

    std::vector<std::pair<Vector, LabelId>> train_points;
    std::vector<std::pair<Vector, LabelId>> test_points;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        std::vector<Vector> points;
        for (std::size_t i = 0; i < spec.per_class_count; ++i) {
            Vector p = means[c];
            for (double& x : p) x += spec.noise_sigma * normal(rng);
            points.push_back(std::move(p));
        }
        std::shuffle(points.begin(), points.end(), rng);
        for (std::size_t i = 0; i < points.size(); ++i) {
            auto& dst = i < train_per_class ? train_points : test_points;
            dst.emplace_back(std::move(points[i]), static_cast<LabelId>(c));
        }
    }
    std::shuffle(train_points.begin(), train_points.end(), rng);
    std::shuffle(test_points.begin(), test_points.end(), rng);
    for (auto [points, dataset] : {std::pair{&train_points, &out.train}, std::pair{&test_points, &out.test}}) {
        for (auto& [p, label] : *points) {
            dataset->examples.push_back(
                {TokenSequence::from_features(std::move(p)), label, dataset->examples.size()});
        }
    }
    return out;
}

}  // namespace knncls
