// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Usage: acceptance <path-to-knncls-binary>

#include "knncls/config.hpp"
#include "knncls/data_io.hpp"
#include "knncls/datastore.hpp"
#include "knncls/errors.hpp"
#include "knncls/evaluation.hpp"
#include "knncls/model.hpp"
#include "knncls/retrieval.hpp"
#include "knncls/training.hpp"

#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

using namespace knncls;
namespace fs = std::filesystem;

namespace {

/// Collects the failed checks of one criterion.
class Criterion {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok && failures_.size() < 5) failures_.push_back(what);
        failed_ = failed_ || !ok;
    }
    void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
    bool failed() const { return failed_; }
    const std::vector<std::string>& failures() const { return failures_; }
    const std::string& notes() const { return notes_; }

private:
    bool failed_ = false;
    std::vector<std::string> failures_;
    std::string notes_;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
    return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(double v) { return format_number(v); }

std::vector<NeighborHit> brute_force(const Datastore& ds, const Vector& q, std::size_t k) {
    std::vector<NeighborHit> all;
    all.reserve(ds.count());
    for (std::size_t i = 0; i < ds.count(); ++i) {
        const auto key = ds.key(i);
        double d = 0;
        for (std::size_t j = 0; j < q.size(); ++j) {
            const double diff = q[j] - static_cast<double>(key[j]);
            d += diff * diff;
        }
        all.push_back({i, d, ds.label(i)});
    }
    std::sort(all.begin(), all.end(), [](const NeighborHit& a, const NeighborHit& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
    });
    all.resize(std::min(k, all.size()));
    return all;
}

LabelDistribution random_distribution(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(n);
    double s = 0;
    for (double& v : p) s += (v = u(rng));
    for (double& v : p) v /= s;
    return LabelDistribution(std::move(p));
}

// 1. Exact search equals full-sort brute force.
void knn_oracle_equivalence(Criterion& c) {
    const auto start = Clock::now();
    std::mt19937_64 rng(20240601);
    std::uniform_int_distribution<std::size_t> sizes(1, 2000);
    std::uniform_int_distribution<std::size_t> dims(1, 64);
    std::uniform_int_distribution<LabelId> labels(0, 9);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = sizes(rng);
        const std::size_t dim = dims(rng);
        std::vector<Datastore::Entry> entries;
        entries.reserve(n);
        for (std::size_t i = 0; i < n; ++i) entries.emplace_back(testing::random_vector(dim, rng), labels(rng));
        const auto ds = Datastore::build(entries, 10);
        const auto query = testing::random_vector(dim, rng);
        std::uniform_int_distribution<std::size_t> ks(1, n + 5);
        const std::size_t k = ks(rng);
        c.expect(ds.search(query, k) == brute_force(ds, query, k),
                 "trial " + std::to_string(trial) + " (N=" + std::to_string(n) + ", k=" + std::to_string(k) + ")");
    }
    const double secs = seconds_since(start);
    c.expect(secs < 30.0, "runtime " + fmt(secs) + " s >= 30 s");
    c.note("100 trials in " + fmt(std::round(secs * 1000) / 1000) + " s");
}

// 2. kNN label distribution.
void knn_distribution_correctness(Criterion& c) {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<std::size_t> sizes(1, 128);
    std::uniform_real_distribution<double> dist(0.0, 100.0);
    std::uniform_real_distribution<double> temps(0.1, 100.0);
    std::uniform_int_distribution<LabelId> labels(0, 5);
    double worst = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<NeighborHit> hits(sizes(rng));
        for (std::size_t i = 0; i < hits.size(); ++i) hits[i] = {i, dist(rng), labels(rng)};
        const auto p = knn_distribution(hits, temps(rng), 6);
        double sum = 0;
        for (double v : p.probs()) sum += v;
        worst = std::max(worst, std::abs(sum - 1.0));

        const std::vector<NeighborHit> single{hits.front()};
        c.expect(knn_distribution(single, temps(rng), 6) == LabelDistribution::one_hot(6, hits.front().label),
                 "k=1 hit set is not one-hot");
    }
    c.expect(worst <= 1e-9, "sum deviates from 1 by " + fmt(worst));

    const std::vector<NeighborHit> worked{{0, 1.0, 0}, {1, 2.0, 1}};
    const auto p = knn_distribution(worked, 10.0, 2);
    c.expect(std::abs(p[0] - 0.52498) <= 1e-5 && std::abs(p[1] - 0.47502) <= 1e-5,
             "worked example gave (" + fmt(p[0]) + ", " + fmt(p[1]) + ")");

    // k=1 through the real search path as well.
    std::vector<Datastore::Entry> entries;
    for (int i = 0; i < 50; ++i) entries.emplace_back(testing::random_vector(3, rng), LabelId(i % 6));
    const auto ds = Datastore::build(entries, 6);
    for (int i = 0; i < 20; ++i) {
        const auto hits = ds.search(testing::random_vector(3, rng), 1);
        c.expect(knn_distribution(hits, 10.0, 6) == LabelDistribution::one_hot(6, hits[0].label),
                 "searched k=1 is not one-hot");
    }
    c.note("max |sum-1| = " + fmt(worst));
}

// 3. Interpolation endpoints are bit-exact.
void interpolation_endpoints(Criterion& c) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> sizes(1, 12);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = sizes(rng);
        const auto knn = random_distribution(n, rng);
        const auto cls = random_distribution(n, rng);
        c.expect(interpolate(knn, cls, 0.0).probs() == cls.probs(), "lambda=0 differs from p_cls");
        c.expect(interpolate(knn, cls, 1.0).probs() == knn.probs(), "lambda=1 differs from p_knn");
    }
}

// 4. Gradient check of the combined loss.
void gradient_check(Criterion& c) {
    const auto start = Clock::now();
    const auto data = generate_synthetic(SyntheticSpec{}).train;
    const std::vector<TrainExample> batch(data.examples.begin(), data.examples.begin() + 32);
    std::mt19937_64 rng(4);
    const auto pairs = select_pairs(std::span<const TrainExample>(batch), rng);
    GradCheckOptions options;
    options.step = 1e-5;
    options.rel_tol = 1e-4;
    options.abs_tol = 1e-8;
    for (bool decouple : {true, false}) {
        ModelConfig cfg;
        cfg.input_dim = data.input_dim;
        cfg.num_labels = data.num_labels;
        cfg.decouple_enabled = decouple;
        const auto model = Model::initialize(cfg, 44);
        for (double beta : {0.0, 0.3, 0.5, 1.0}) {
            Hyperparams h;
            h.beta = beta;
            const auto report = grad_check(model, batch, pairs, h, options);
            if (beta > 0.0) {
                c.expect(combined_loss(model, batch, pairs, h).triplet > 0.0,
                         "triplet hinge inactive on the check batch, beta=" + fmt(beta));
            }
            const std::string tag = "beta=" + fmt(beta) + (decouple ? " decoupled" : " shared");
            c.expect(report.passed, tag + ": " + report.message + ", max rel " + fmt(report.max_relative_error));
            c.note(tag + " rel=" + fmt(report.max_relative_error));
        }
    }
    const double secs = seconds_since(start);
    c.expect(secs < 60.0, "runtime " + fmt(secs) + " s >= 60 s");
}

// 5. End-to-end synthetic experiment.
void end_to_end(Criterion& c) {
    const auto start = Clock::now();
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.dim = 16;
    spec.per_class_count = 125;
    spec.class_separation = 6.0;
    spec.noise_sigma = 1.0;
    spec.seed = 7;
    const auto data = generate_synthetic(spec);
    Hyperparams h;
    h.beta = 0.5;
    h.epochs = 20;
    ModelConfig cfg;
    cfg.decouple_enabled = true;
    cfg.triplet_enabled = true;
    const auto model = train(data.train, h, cfg).model;
    const auto ds = build_datastore(model, data.train);

    for (double lambda : {0.0, 1.0, 0.2}) {
        const auto row = evaluate(model, &ds, data.test, RetrievalParams{64, 10.0, lambda}).row;
        c.expect(row.accuracy >= 0.95, "lambda=" + fmt(lambda) + " accuracy " + fmt(row.accuracy));
        c.note("acc(lambda=" + fmt(lambda) + ")=" + fmt(row.accuracy));
    }

    std::vector<Vector> reps;
    for (const auto& ex : data.train.examples) reps.push_back(encode(model, ex.input).r);
    double intra = 0, inter = 0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t i = 0; i < reps.size(); ++i) {
        for (std::size_t j = i + 1; j < reps.size(); ++j) {
            const double d = squared_l2(reps[i], reps[j]);
            if (data.train.examples[i].label == data.train.examples[j].label) {
                intra += d;
                ++n_intra;
            } else {
                inter += d;
                ++n_inter;
            }
        }
    }
    intra /= static_cast<double>(n_intra);
    inter /= static_cast<double>(n_inter);
    c.expect(intra < inter, "intra " + fmt(intra) + " >= inter " + fmt(inter));
    c.note("r-space intra=" + fmt(std::round(intra * 1000) / 1000) + " inter=" + fmt(std::round(inter * 1000) / 1000));
    const double secs = seconds_since(start);
    c.expect(secs < 120.0, "runtime " + fmt(secs) + " s >= 120 s");
}

// 6. Sweep integrity.
void sweep_integrity(Criterion& c) {
    SyntheticSpec spec;
    spec.class_separation = 2.5;  // overlapping classes so cells differ
    const auto data = generate_synthetic(spec);
    Hyperparams h;
    h.epochs = 5;
    const auto model = train(data.train, h, ModelConfig{}).model;
    const auto ds = build_datastore(model, data.train);
    SweepSpec grid;
    grid.k_values = {1, 8, 64};
    grid.temperature_values = {1, 10, 100};
    grid.lambda_values = {0, 0.5, 1};
    const auto report = sweep(model, &ds, data.test, grid);
    c.expect(report.rows.size() == 27, "sweep produced " + std::to_string(report.rows.size()) + " rows");
    for (const auto& row : report.rows) {
        const auto direct = evaluate(model, &ds, data.test, RetrievalParams{row.k, row.temperature, row.lambda}).row;
        c.expect(direct == row, "cell k=" + std::to_string(row.k) + " T=" + fmt(row.temperature) +
                                    " lambda=" + fmt(row.lambda) + " differs from direct evaluation");
        if (row.lambda == 0.0) {
            c.expect(report.rows[report.best].accuracy >= row.accuracy, "best row below a lambda=0 row");
        }
    }
    c.note("best accuracy " + fmt(report.rows[report.best].accuracy));
}

// 7. Persistence.
void persistence(Criterion& c) {
    const auto dir = testing::scratch_dir("acceptance_persistence");
    std::mt19937_64 rng(7);

    std::vector<Datastore::Entry> entries;
    std::uniform_int_distribution<LabelId> labels(0, 4);
    for (int i = 0; i < 300; ++i) entries.emplace_back(testing::random_vector(24, rng), labels(rng));
    const auto ds = Datastore::build(entries, 5);
    save_datastore(ds, dir / "ds.bin");
    c.expect(load_datastore(dir / "ds.bin") == ds, "datastore round trip differs");
    const auto empty = Datastore::build({}, 2, 4);
    save_datastore(empty, dir / "empty.bin");
    c.expect(load_datastore(dir / "empty.bin") == empty, "empty datastore round trip differs");

    ModelConfig cfg;
    cfg.num_labels = 5;
    const auto model = Model::initialize(cfg, 70);
    save_model(model, dir / "model.json");
    const auto back = load_model(dir / "model.json");
    c.expect(back == model, "model round trip differs");
    for (int i = 0; i < 100; ++i) {
        const auto seq = TokenSequence::from_features(testing::random_vector(16, rng));
        const auto a = encode(model, seq);
        const auto b = encode(back, seq);
        c.expect(a.r == b.r && classify(model, a.h0) == classify(back, b.h0), "prediction changed after reload");
    }

    const auto bytes = serialize_datastore(ds);
    auto expect_kind = [&](const std::vector<std::uint8_t>& file, FormatErrorKind want, const std::string& tag) {
        const auto path = dir / "fuzz.bin";
        std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(file.data()),
                                                    static_cast<std::streamsize>(file.size()));
        try {
            load_datastore(path);
            c.expect(false, tag + ": loaded without error");
        } catch (const FormatError& e) {
            c.expect(e.kind() == want, tag + ": got '" + e.what() + "'");
        } catch (const std::exception& e) {
            c.expect(false, tag + ": untyped error " + e.what());
        }
    };
    std::uniform_int_distribution<std::size_t> magic_pos(0, 5);
    std::uniform_int_distribution<int> byte(1, 255);
    for (int i = 0; i < 10; ++i) {
        auto file = bytes;
        file[magic_pos(rng)] ^= static_cast<std::uint8_t>(byte(rng));
        expect_kind(file, FormatErrorKind::BadMagic, "magic fuzz " + std::to_string(i));
    }
    std::uniform_int_distribution<std::size_t> cut(0, bytes.size() - 1);
    for (int i = 0; i < 10; ++i) {
        const std::vector<std::uint8_t> file(bytes.begin(), bytes.begin() + static_cast<long>(cut(rng)));
        expect_kind(file, FormatErrorKind::Truncated, "truncation fuzz " + std::to_string(i));
    }

    // Model files: wrong magic and truncated JSON.
    const auto text = model_to_json(model);
    for (int i = 0; i < 10; ++i) {
        std::string mangled = text;
        const auto pos = mangled.find("knncls-model");
        mangled[pos + static_cast<std::size_t>(i % 12)] = '#';
        try {
            model_from_json(mangled);
            c.expect(false, "mangled model format loaded");
        } catch (const FormatError& e) {
            c.expect(e.kind() == FormatErrorKind::BadMagic, std::string("model magic: ") + e.what());
        }
        try {
            model_from_json(text.substr(0, cut(rng) % text.size()));
            c.expect(false, "truncated model loaded");
        } catch (const FormatError&) {
        }
    }
}

int run_cli(const std::string& bin, const fs::path& dir, const std::string& args) {
    const std::string cmd = "cd '" + dir.string() + "' && '" + bin + "' " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

// 8. Two full CLI pipelines with equal seeds give byte-identical reports.
void determinism(Criterion& c, const std::string& bin) {
    if (bin.empty()) {
        c.expect(false, "no CLI binary given");
        return;
    }
    std::string reports[2];
    for (int run = 0; run < 2; ++run) {
        const auto dir = testing::scratch_dir("acceptance_determinism_" + std::to_string(run));
        std::ofstream(dir / "cfg.json") << R"({
            "data": {"train": "data/train.jsonl", "test": "data/test.jsonl"},
            "train": {"beta": 0.5, "epochs": 5, "seed": 42},
            "sweep": {"k": [1, 8, 64], "T": [1, 10, 100], "lambda": [0, 0.5, 1]}
        })";
        const bool ok = run_cli(bin, dir, "gen-data --seed 7 --out data") == 0 &&
                        run_cli(bin, dir, "train --config cfg.json --out model.json --log train.log") == 0 &&
                        run_cli(bin, dir, "build-datastore --config cfg.json --model model.json --out ds.bin") == 0 &&
                        run_cli(bin, dir, "sweep --config cfg.json --model model.json --datastore ds.bin --out sweep.csv") == 0;
        c.expect(ok, "pipeline run " + std::to_string(run) + " failed");
        reports[run] = slurp(dir / "sweep.csv");
    }
    c.expect(!reports[0].empty() && reports[0] == reports[1], "sweep reports differ between runs");
    c.expect(std::count(reports[0].begin(), reports[0].end(), '\n') == 28, "sweep report does not have 27 rows");
}

}  // namespace

int main(int argc, char** argv) {
    const std::string bin = argc > 1 ? fs::absolute(argv[1]).string() : "";
    struct Entry {
        const char* name;
        std::function<void(Criterion&)> run;
    };
    const std::vector<Entry> criteria{
        {"AC1 kNN search equals brute force", knn_oracle_equivalence},
        {"AC2 kNN label distribution", knn_distribution_correctness},
        {"AC3 interpolation endpoints", interpolation_endpoints},
        {"AC4 combined-loss gradient check", gradient_check},
        {"AC5 end-to-end synthetic experiment", end_to_end},
        {"AC6 sweep integrity", sweep_integrity},
        {"AC7 persistence", persistence},
        {"AC8 pipeline determinism", [&bin](Criterion& c) { determinism(c, bin); }},
    };
    int failed = 0;
    for (const auto& entry : criteria) {
        Criterion c;
        const auto start = Clock::now();
        try {
            entry.run(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = seconds_since(start);
        std::printf("[%s] %s (%.2f s)%s%s\n", c.failed() ? "FAIL" : "PASS", entry.name, secs,
                    c.notes().empty() ? "" : " -- ", c.notes().c_str());
        for (const auto& f : c.failures()) std::printf("       %s\n", f.c_str());
        failed += c.failed();
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
