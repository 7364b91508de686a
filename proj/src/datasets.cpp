#include "hmip/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "hmip/error.hpp"
#include "hmip/parallel.hpp"

namespace hmip {

namespace {

void append_number(std::string& out, double v) {
    if (v == 0.0) v = 0.0;  // drop negative zero
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

struct Labeled {
    bool ok = false;
    LabeledSample sample;
};

Labeled label(const HierarchicalFamily& family, std::vector<double> theta, int id, const SolveConfig& config) {
    Labeled out;
    const MilpProblem master = family.build_master(theta);
    const MilpSolution sol = solve_milp(master, config);
    if (sol.status != SolveStatus::kOptimal) return out;
    const int n1 = family.upper_dim();
    std::vector<double> point = sol.values;
    for (int j = 0; j < master.num_vars(); ++j) {
        if (master.integrality[j]) point[j] = std::round(point[j]);
    }
    LabeledSample& s = out.sample;
    s.theta_id = id;
    s.theta = std::move(theta);
    s.x_star.assign(point.begin(), point.begin() + n1);
    s.y_star.assign(point.begin() + n1, point.end());
    s.z = master.evaluate_objective(point);
    s.l = family.relaxation_bound(s.theta);
    s.label_gap = std::max(0.0, sol.objective_value - sol.dual_bound) / std::max(1.0, std::abs(sol.objective_value));
    out.ok = true;
    return out;
}

nlohmann::json header_json(const DatasetHeader& h, std::size_t count) {
    return {{"format", "hmip-dataset-1"},
            {"family", to_string(h.kind)},
            {"family_file", h.family_file},
            {"family_seed", h.family_seed},
            {"seed", h.seed},
            {"solve", {{"gap", h.gap_tolerance}, {"time_limit", h.time_limit}}},
            {"params", h.params},
            {"upper_dim", h.upper_dim},
            {"lower_dim", h.lower_dim},
            {"samples", count},
            {"fields", "theta_id z l label_gap theta[params] x_star[upper_dim] y_star[lower_dim]"}};
}

}  // namespace

SolveConfig labeling_config() {
    SolveConfig c;
    c.gap_tolerance = 1e-4;
    c.time_limit = 100.0;
    return c;
}

Dataset generate_dataset(const HierarchicalFamily& family, int total, std::uint64_t seed, const SolveConfig& config,
                         int jobs) {
    if (total <= 0) throw Error(ErrorCode::kInvalidArgument, "dataset size must be positive");
    config.validate();
    Dataset ds;
    ds.header.kind = family.kind();
    ds.header.family_seed = family.seed();
    ds.header.seed = seed;
    ds.header.gap_tolerance = config.gap_tolerance;
    ds.header.time_limit = config.time_limit;
    ds.header.params = family.param_dim();
    ds.header.upper_dim = family.upper_dim();
    ds.header.lower_dim = family.lower_dim();

    Rng rng(seed);
    const int max_discards = static_cast<int>(std::floor(0.05 * total));
    int next_id = 0;
    while (static_cast<int>(ds.samples.size()) < total) {
        const int need = total - static_cast<int>(ds.samples.size());
        std::vector<std::vector<double>> thetas;
        for (int i = 0; i < need; ++i) thetas.push_back(family.sample_theta(rng));
        std::vector<Labeled> results(need);
        parallel_for(need, jobs, [&](int i) { results[i] = label(family, thetas[i], next_id + i, config); });
        for (int i = 0; i < need; ++i) {
            if (results[i].ok) {
                ds.samples.push_back(std::move(results[i].sample));
            } else {
                ++ds.discarded;
                spdlog::warn("theta {} discarded: master not solved to optimality within limits", next_id + i);
            }
        }
        next_id += need;
        if (ds.discarded > max_discards) {
            throw Error(ErrorCode::kTooManyDiscards, std::to_string(ds.discarded) + " of " +
                                                         std::to_string(next_id) + " draws discarded");
        }
    }
    if (ds.discarded > 0) spdlog::info("{} draws discarded while labeling {} samples", ds.discarded, total);
    return ds;
}

void check_sample(const HierarchicalFamily& family, const LabeledSample& s) {
    if (static_cast<int>(s.theta.size()) != family.param_dim() ||
        static_cast<int>(s.x_star.size()) != family.upper_dim() ||
        static_cast<int>(s.y_star.size()) != family.lower_dim()) {
        throw Error(ErrorCode::kDimensionMismatch, "sample " + std::to_string(s.theta_id) + " has wrong sizes");
    }
    const auto c = family.upper_cost(s.theta);
    const auto d = family.lower_cost(s.theta);
    double value = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) value += c[j] * s.x_star[j];
    for (std::size_t j = 0; j < d.size(); ++j) value += d[j] * s.y_star[j];
    if (std::abs(s.z - value) > 1e-6 * std::max(1.0, std::abs(s.z))) {
        throw Error(ErrorCode::kInvalidArgument, "sample " + std::to_string(s.theta_id) + ": z does not match x*, y*");
    }
    if (s.l > s.z + 1e-6) {
        throw Error(ErrorCode::kInvalidArgument, "sample " + std::to_string(s.theta_id) + ": l exceeds z");
    }
}

void SplitSpec::validate() const {
    if (train <= 0 || eval <= 0 || calib <= 0 || test <= 0) {
        throw Error(ErrorCode::kInvalidArgument, "split sizes must be positive");
    }
}

SplitIndices split(const Dataset& dataset, const SplitSpec& spec) {
    spec.validate();
    const int n = static_cast<int>(dataset.samples.size());
    if (spec.total() > n) {
        throw Error(ErrorCode::kInsufficientSamples,
                    "split needs " + std::to_string(spec.total()) + " samples, dataset has " + std::to_string(n));
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Fisher-Yates with an explicit draw so the split is identical across standard libraries.
    Rng rng(spec.seed);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[i], order[j]);
    }
    SplitIndices out;
    auto take = [&, pos = 0](std::vector<int>& dst, int count) mutable {
        dst.assign(order.begin() + pos, order.begin() + pos + count);
        pos += count;
    };
    take(out.train, spec.train);
    take(out.eval, spec.eval);
    take(out.calib, spec.calib);
    take(out.test, spec.test);
    return out;
}

std::vector<LabeledSample> select(const Dataset& dataset, const std::vector<int>& indices) {
    std::vector<LabeledSample> out;
    out.reserve(indices.size());
    for (int i : indices) {
        if (i < 0 || i >= static_cast<int>(dataset.samples.size())) {
            throw Error(ErrorCode::kInvalidArgument, "split index " + std::to_string(i) + " out of range");
        }
        out.push_back(dataset.samples[i]);
    }
    return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << header_json(dataset.header, dataset.samples.size()).dump() << '\n';
    std::string line;
    for (const auto& s : dataset.samples) {
        line = std::to_string(s.theta_id);
        for (double v : {s.z, s.l, s.label_gap}) {
            line += ' ';
            append_number(line, v);
        }
        for (const auto* vec : {&s.theta, &s.x_star, &s.y_star}) {
            for (double v : *vec) {
                line += ' ';
                append_number(line, v);
            }
        }
        out << line << '\n';
    }
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::kParse, path.string() + ": empty file");
    Dataset ds;
    std::size_t count = 0;
    try {
        const auto h = nlohmann::json::parse(line);
        if (h.at("format").get<std::string>() != "hmip-dataset-1") {
            throw Error(ErrorCode::kParse, path.string() + ": unknown format");
        }
        ds.header.kind = family_kind_from_string(h.at("family").get<std::string>());
        ds.header.family_file = h.at("family_file").get<std::string>();
        ds.header.family_seed = h.at("family_seed").get<std::uint64_t>();
        ds.header.seed = h.at("seed").get<std::uint64_t>();
        ds.header.gap_tolerance = h.at("solve").at("gap").get<double>();
        ds.header.time_limit = h.at("solve").at("time_limit").get<double>();
        ds.header.params = h.at("params").get<int>();
        ds.header.upper_dim = h.at("upper_dim").get<int>();
        ds.header.lower_dim = h.at("lower_dim").get<int>();
        count = h.at("samples").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, path.string() + ": bad header: " + e.what());
    }
    const auto& h = ds.header;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        LabeledSample s;
        s.theta_id = -1;
        fields >> s.theta_id >> s.z >> s.l >> s.label_gap;
        auto read_vec = [&](std::vector<double>& v, int n) {
            v.resize(n);
            for (double& x : v) fields >> x;
        };
        read_vec(s.theta, h.params);
        read_vec(s.x_star, h.upper_dim);
        read_vec(s.y_star, h.lower_dim);
        std::string extra;
        if (fields.fail() || (fields >> extra)) {
            throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(line_no) + ": malformed record");
        }
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.size() != count) {
        throw Error(ErrorCode::kParse, path.string() + ": header promises " + std::to_string(count) + " samples, found " +
                                           std::to_string(ds.samples.size()));
    }
    return ds;
}

void save_splits(const SplitIndices& splits, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    auto write = [&](const char* name, const std::vector<int>& idx) {
        out << name;
        for (int i : idx) out << ' ' << i;
        out << '\n';
    };
    write("train", splits.train);
    write("eval", splits.eval);
    write("calib", splits.calib);
    write("test", splits.test);
}

SplitIndices load_splits(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
    SplitIndices out;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream fields(line);
        std::string name;
        if (!(fields >> name)) continue;
        std::vector<int>* dst = name == "train" ? &out.train
                                : name == "eval" ? &out.eval
                                : name == "calib" ? &out.calib
                                : name == "test" ? &out.test
                                                 : nullptr;
        if (!dst) throw Error(ErrorCode::kParse, path.string() + ": unknown split '" + name + "'");
        int i;
        while (fields >> i) dst->push_back(i);
        if (!fields.eof()) throw Error(ErrorCode::kParse, path.string() + ": bad index in split '" + name + "'");
    }
    return out;
}

std::filesystem::path dataset_dir(const std::filesystem::path& root, FamilyKind kind, std::uint64_t seed) {
    return root / to_string(kind) / std::to_string(seed);
}

}  // namespace hmip
