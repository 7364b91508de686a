#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hmip/conformal.hpp"
#include "hmip/datasets.hpp"
#include "hmip/evaluation.hpp"
#include "hmip/predictor.hpp"
#include "hmip/problems.hpp"

namespace hmip {

struct RunConfig {
    FamilyKind family = FamilyKind::kKnapsack;
    FamilyDims dims = FamilyDims::desk(FamilyKind::kKnapsack);
    std::uint64_t seed = 1;
    int total = 700;
    SplitSpec split;
    LossKind loss = LossKind::kAsl;
    double nu = 1.0;
    double omega = 1.0;
    TrainConfig train;
    double alpha = 0.1;
    ConformalConvention convention = ConformalConvention::kCorrected;
    ConformalTrainConfig conformal;
    std::filesystem::path out = "data";
    int jobs = 1;
    double label_time_limit = 100.0;
    double eval_time_limit = 100.0;

    /// Applies one `key = value` setting. Throws kInvalidArgument on unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    void validate() const;

    std::filesystem::path dir() const;
    LossSpec loss_spec(LossKind kind) const;
    TrainConfig train_config(LossKind kind) const;
};

/// Reads `key = value` lines; `#` starts a comment.
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Known keys, for usage text.
std::vector<std::string> run_config_keys();

struct Artifacts {
    std::filesystem::path dir;
    std::filesystem::path family() const { return dir / "family.json"; }
    std::filesystem::path dataset() const { return dir / "dataset.txt"; }
    std::filesystem::path splits() const { return dir / "splits.txt"; }
    std::filesystem::path model(const std::string& name) const { return dir / ("model_" + name + ".json"); }
    std::filesystem::path curve(const std::string& name) const { return dir / ("curve_" + name + ".csv"); }
    std::filesystem::path conformal_model() const { return dir / "conformal_model.json"; }
    std::filesystem::path calibration(ConformalConvention c) const {
        return dir / (std::string("calibration_") + to_string(c) + ".json");
    }
};

/// Loaded dataset plus its family and split.
struct Workspace {
    std::unique_ptr<HierarchicalFamily> family;
    Dataset dataset;
    SplitIndices splits;
    std::vector<LabeledSample> train, eval, calib, test;
};

/// Throws kIo naming the missing path.
void require_file(const std::filesystem::path& path);

Workspace load_workspace(const Artifacts& a);

struct GenerateSummary {
    int samples = 0;
    int discarded = 0;
};
GenerateSummary run_generate(const RunConfig& cfg);

struct TrainSummary {
    std::string name;
    double learning_rate = 0.0;
    double eval_regret = 0.0;
};
/// Trains a cost predictor for `loss` ("asl", "z", "fy", "gspo") or the DP baseline ("dp").
TrainSummary run_train(const RunConfig& cfg, const std::string& loss);

/// Stored predictor: network plus the loss it was trained with.
struct StoredPredictor {
    std::string name;
    Mlp model;
    LossSpec spec;
    double learning_rate = 0.0;
};
void save_predictor(const StoredPredictor& p, const std::filesystem::path& path);
StoredPredictor load_predictor(const std::filesystem::path& path);

/// Decision function of a stored predictor.
Decider make_decider(const HierarchicalFamily& family, const StoredPredictor& p);

/// Trains psi on the eval split with the configured loss's policy, calibrates on
/// the calibration split, writes the model and the calibration artifact.
Calibration run_calibrate(const RunConfig& cfg);

/// One certificate per theta line (whitespace-separated values) in theta_file.
void run_bound(const RunConfig& cfg, const std::filesystem::path& theta_file, const std::filesystem::path& out_csv);

/// All methods on the test split; writes results, trajectories, summary,
/// certificates and coverage CSVs. Returns the summaries.
std::vector<MethodSummary> run_evaluate(const RunConfig& cfg);

/// Names of the CSV files run_evaluate writes.
std::vector<std::string> evaluation_outputs(const RunConfig& cfg);

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path);

}  // namespace hmip
