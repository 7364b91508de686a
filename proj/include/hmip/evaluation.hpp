#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hmip/datasets.hpp"
#include "hmip/milp.hpp"
#include "hmip/predictor.hpp"
#include "hmip/problems.hpp"

namespace hmip {

/// argmin over X(theta) of ||x - t||^2 for binary x, i.e. min sum_j x_j (1 - 2 t_j).
std::vector<double> project_onto_upper(const HierarchicalFamily& family, std::span<const double> theta,
                                       std::span<const double> target);

/// Projection of the x_star of the nearest training theta (ties to the lowest index).
std::vector<double> nearest_neighbor_predict(const std::vector<LabeledSample>& train_set,
                                             const HierarchicalFamily& family, std::span<const double> theta);

/// Squared-loss regression on x_star; decisions are projections of the prediction.
class DirectObjective final : public TrainingObjective {
public:
    explicit DirectObjective(const HierarchicalFamily& family) : family_(family) {}
    double loss_and_gradient(const LabeledSample& sample, const Eigen::VectorXd& output,
                             std::vector<double>& gradient) const override;
    std::vector<double> decide(std::span<const double> theta, const Eigen::VectorXd& output) const override;

private:
    const HierarchicalFamily& family_;
};

GridSearchResult direct_prediction_train(const HierarchicalFamily& family, const std::vector<LabeledSample>& train_set,
                                         const std::vector<LabeledSample>& eval_set, const TrainConfig& config);

struct MethodRow {
    int theta_id = 0;
    std::vector<double> x_hat;
    bool feasible = false;
    double true_cost = 0.0;
    double regret = 0.0;
    double normalized_regret = 0.0;  ///< NaN when |f(x_star)| < 1e-9
    double wall_time_upper = 0.0;
    double wall_time_lower = 0.0;
    double wall_time_total = 0.0;
};

struct TrajectoryRow {
    int theta_id = 0;
    double time_s = 0.0;
    double incumbent_objective = 0.0;
};

struct MethodResult {
    std::string method_id;
    std::vector<MethodRow> rows;
    std::vector<TrajectoryRow> trajectory;
};

/// Decides x_hat for theta and reports the time spent in solver calls.
using UpperMethod = std::function<std::vector<double>(std::span<const double> theta, double& solve_time)>;

/// Runs an upper method on every test sample, then the sequential lower solves.
/// `f_star` holds f(x_star) per sample (see label_true_costs).
MethodResult run_hierarchical(const std::string& method_id, const HierarchicalFamily& family,
                              const std::vector<LabeledSample>& test_set, const std::vector<double>& f_star,
                              const UpperMethod& method);

/// Master solve under `config` (optimality, or stop after k incumbents).
MethodResult run_master(const std::string& method_id, const HierarchicalFamily& family,
                        const std::vector<LabeledSample>& test_set, const std::vector<double>& f_star,
                        const SolveConfig& config);

SolveConfig exact_config(double time_limit = 100.0);
SolveConfig first_feasible_config(int incumbents, double time_limit = 100.0);

/// f(x_star) for every sample, with exact lower solves.
std::vector<double> label_true_costs(const HierarchicalFamily& family, const std::vector<LabeledSample>& set,
                                     int jobs = 1);

struct MethodSummary {
    std::string method_id;
    int instances = 0;
    double r_abs = 0.0;
    double r_norm = 0.0;
    int norm_skipped = 0;
    double mean_time = 0.0;
    double median_time = 0.0;
    double mean_time_upper = 0.0;
    double mean_time_lower = 0.0;
};

/// Aggregates from rows. The normalized regret divides by |f(x_star)| and skips
/// samples where that is below 1e-9.
MethodSummary compute_metrics(const MethodResult& result);

double median(std::vector<double> values);

// CSV output. Numbers use 17 significant digits.
void write_results_csv(const MethodResult& result, const std::filesystem::path& path);
void write_trajectory_csv(const MethodResult& result, const std::filesystem::path& path);
void write_summary_csv(const std::vector<MethodSummary>& summaries, const std::filesystem::path& path);
std::vector<MethodRow> read_results_csv(const std::filesystem::path& path);

std::string format_number(double v);

}  // namespace hmip
