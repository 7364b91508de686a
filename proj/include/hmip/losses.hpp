#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hmip/milp.hpp"
#include "hmip/problems.hpp"

namespace hmip {

enum class LossKind { kGspoPlus, kAsl, kZero, kFenchelYoung };

const char* to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

struct LossSpec {
    LossKind kind = LossKind::kAsl;
    double nu = 1.0;            ///< ASL scale
    double omega_weight = 1.0;  ///< FY penalty on ||x||^2
    SolveConfig inner_config = SolveConfig::exact();

    void validate() const;

    /// Truncated inner solves used during training (gap 1e-3, 10,000 nodes).
    static LossSpec training(LossKind kind);
};

inline constexpr std::uint64_t kGspoGuard = std::uint64_t{1} << 16;

/// g for GSPO+: the true cost of an upper point.
using UpperCostFn = std::function<double(std::span<const double>)>;

struct InnerResult {
    std::vector<double> x;
    double value = 0.0;    ///< max_x { g(x) - c_hat^T x } (FY: with -Omega(x))
    SolveStatus status = SolveStatus::kOptimal;
    double epsilon = 0.0;  ///< proven suboptimality of x in the inner max
};

struct LossEval {
    double value = 0.0;
    std::vector<double> subgradient;
    std::vector<double> x_inner;
    SolveStatus inner_status = SolveStatus::kOptimal;
    double epsilon = 0.0;
    bool epsilon_subgradient = false;
};

// Generic forms: `upper_set` is X as a minimize MILP (its objective is ignored)
// and the policy minimizes c_hat^T x over it. `g` is only used by GSPO+.

InnerResult inner_maximize(const LossSpec& spec, const MilpProblem& upper_set, std::span<const double> x_star,
                           std::span<const double> c_hat, const UpperCostFn& g = {});

LossEval loss_value_and_subgradient(const LossSpec& spec, const MilpProblem& upper_set,
                                    std::span<const double> x_star, std::span<const double> c_hat,
                                    const UpperCostFn& g = {});

/// Worst g over the minimizers of c_hat^T x, minus min g over X. Enumeration oracle.
double suboptimality_loss(const MilpProblem& upper_set, std::span<const double> c_hat, const UpperCostFn& g);

/// Cost that makes the binary point x_star the unique policy minimizer with
/// c^T (x - x_star) >= g(x) - g(x_star) - epsilon on X, given gap_bound >= max g - g(x_star).
std::vector<double> separating_cost(std::span<const double> x_star, double gap_bound, double delta);

struct ApproximationBoundReport {
    bool holds = false;
    std::vector<double> anchor;
    std::vector<double> c_hat;
    double loss = 0.0;         ///< misspecified loss reached at c_hat
    double worst_policy_g = 0.0;
    double g_min = 0.0;
    int iterations = 0;
};

/// Builds the worst epsilon-optimal anchor for g, drives the misspecified Z-type
/// loss (g as the penalty) to <= delta by subgradient descent, and checks every
/// policy minimizer against g_min + epsilon + delta. Throws
/// kOptimizationDidNotReachDelta when the descent stalls.
ApproximationBoundReport check_approximation_bound(const MilpProblem& upper_set, const UpperCostFn& g,
                                                   double epsilon, double delta);

// Family forms: c_hat follows the family's policy convention (maximized for
// knapsack), and the subgradient is with respect to that c_hat.

InnerResult inner_maximize(const LossSpec& spec, const HierarchicalFamily& family, std::span<const double> theta,
                           std::span<const double> x_star, std::span<const double> c_hat);

LossEval loss_value_and_subgradient(const LossSpec& spec, const HierarchicalFamily& family,
                                    std::span<const double> theta, std::span<const double> x_star,
                                    std::span<const double> c_hat);

double suboptimality_loss(const HierarchicalFamily& family, std::span<const double> theta,
                          std::span<const double> c_hat);

/// Family form of check_approximation_bound with g = true cost; returns the verdict.
bool check_approximation_bound(const HierarchicalFamily& family, std::span<const double> theta,
                               double epsilon, double delta);

}  // namespace hmip
