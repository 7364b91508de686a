#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hmip/milp.hpp"
#include "hmip/problems.hpp"

namespace hmip {

struct LabeledSample {
    int theta_id = 0;
    std::vector<double> theta;
    std::vector<double> x_star;
    std::vector<double> y_star;
    double z = 0.0;
    double l = 0.0;
    double label_gap = 0.0;  ///< relative proven gap of the labeling solve
};

struct DatasetHeader {
    std::string family_file = "family.json";
    FamilyKind kind = FamilyKind::kKnapsack;
    std::uint64_t family_seed = 0;
    std::uint64_t seed = 0;
    double gap_tolerance = 1e-4;
    double time_limit = 100.0;
    int params = 0;
    int upper_dim = 0;
    int lower_dim = 0;
};

struct Dataset {
    DatasetHeader header;
    std::vector<LabeledSample> samples;
    int discarded = 0;  ///< not persisted
};

/// Label solves: gap 1e-4 and a 100 s limit.
SolveConfig labeling_config();

/// Draws theta from Rng(seed) and labels each by solving the master. Draws that
/// do not reach optimality are discarded; more than 5% discards throws
/// kTooManyDiscards.
Dataset generate_dataset(const HierarchicalFamily& family, int total, std::uint64_t seed,
                         const SolveConfig& config = labeling_config(), int jobs = 1);

/// Throws kInvalidArgument when a sample violates the label invariants.
void check_sample(const HierarchicalFamily& family, const LabeledSample& sample);

struct SplitSpec {
    int train = 500;
    int eval = 50;
    int calib = 50;
    int test = 100;
    std::uint64_t seed = 0;

    int total() const { return train + eval + calib + test; }
    void validate() const;
};

/// Indices into Dataset::samples.
struct SplitIndices {
    std::vector<int> train, eval, calib, test;
};

/// Deterministic shuffle by seed, then contiguous slices train, eval, calib, test.
SplitIndices split(const Dataset& dataset, const SplitSpec& spec);

std::vector<LabeledSample> select(const Dataset& dataset, const std::vector<int>& indices);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

void save_splits(const SplitIndices& splits, const std::filesystem::path& path);
SplitIndices load_splits(const std::filesystem::path& path);

/// data/<family>/<seed>
std::filesystem::path dataset_dir(const std::filesystem::path& root, FamilyKind kind, std::uint64_t seed);

}  // namespace hmip
