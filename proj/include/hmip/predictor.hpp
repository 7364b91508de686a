#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmip/datasets.hpp"
#include "hmip/losses.hpp"
#include "hmip/mlp.hpp"
#include "hmip/problems.hpp"

namespace hmip {

enum class OptimizerKind { kSgd, kMomentum };

struct TrainConfig {
    LossSpec loss = LossSpec::training(LossKind::kAsl);
    double learning_rate = 1e-3;
    int batch_size = 16;
    int epochs = 30;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::kSgd;
    double momentum = 0.9;
    std::vector<double> lr_grid{1e-4, 1e-3, 1e-2};
    int eval_every = 0;  ///< steps between eval-regret checks; 0 means once per epoch
    std::vector<int> hidden{128, 128};
    int jobs = 1;

    void validate() const;
};

/// What the network is trained to do: a per-sample loss with its gradient
/// with respect to the network output, and the decision made from an output.
class TrainingObjective {
public:
    virtual ~TrainingObjective() = default;
    virtual OutputActivation output_activation() const { return OutputActivation::kIdentity; }
    virtual double loss_and_gradient(const LabeledSample& sample, const Eigen::VectorXd& output,
                                     std::vector<double>& gradient) const = 0;
    /// Upper decision x_hat for theta, always in X(theta).
    virtual std::vector<double> decide(std::span<const double> theta, const Eigen::VectorXd& output) const = 0;
};

/// Surrogate-loss training of a cost predictor c_hat(theta).
class SurrogateObjective final : public TrainingObjective {
public:
    SurrogateObjective(const HierarchicalFamily& family, LossSpec spec);
    double loss_and_gradient(const LabeledSample& sample, const Eigen::VectorXd& output,
                             std::vector<double>& gradient) const override;
    std::vector<double> decide(std::span<const double> theta, const Eigen::VectorXd& output) const override;

private:
    const HierarchicalFamily& family_;
    LossSpec spec_;
};

/// Policy decision for a predicted cost: FY models keep their penalty at decision time.
std::vector<double> solve_policy(const HierarchicalFamily& family, std::span<const double> theta,
                                 std::span<const double> c_hat, const LossSpec& spec);

struct CurvePoint {
    int step = 0;
    double train_loss = 0.0;  ///< mean batch loss since the previous point (NaN at step 0)
    double eval_regret = 0.0;
    double best_eval_regret = 0.0;
    double wall_time = 0.0;
};

struct TrainResult {
    Mlp model;  ///< snapshot with the lowest eval regret
    std::vector<CurvePoint> curve;
    double eval_regret = 0.0;
    double learning_rate = 0.0;
    int steps = 0;
    int aborted_steps = 0;
};

/// Mean over eval of f(x_hat) - f(x_star), with f evaluated by exact lower solves.
double eval_regret(const Mlp& model, const HierarchicalFamily& family, const TrainingObjective& objective,
                   const std::vector<LabeledSample>& eval, int jobs = 1);

Mlp make_network(const HierarchicalFamily& family, const TrainConfig& config, OutputActivation output);

TrainResult train(const HierarchicalFamily& family, const std::vector<LabeledSample>& train_set,
                  const std::vector<LabeledSample>& eval_set, const TrainConfig& config,
                  const TrainingObjective& objective);

/// Same, starting from the given network instead of a fresh initialization.
TrainResult train(Mlp init, const HierarchicalFamily& family, const std::vector<LabeledSample>& train_set,
                  const std::vector<LabeledSample>& eval_set, const TrainConfig& config,
                  const TrainingObjective& objective);

struct GridSearchResult {
    TrainResult best;
    TrainConfig best_config;
    std::vector<double> learning_rates;  ///< grid points that trained
    std::vector<double> eval_regrets;    ///< matching final eval regrets
};

/// One run per learning rate with a common seed; lowest eval regret wins, ties
/// go to the smaller rate. Throws kAllRunsFailed when no run completes.
GridSearchResult grid_search(const HierarchicalFamily& family, const std::vector<LabeledSample>& train_set,
                             const std::vector<LabeledSample>& eval_set, const TrainConfig& config,
                             const TrainingObjective& objective);

}  // namespace hmip
