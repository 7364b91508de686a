#include "hmip/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hmip/error.hpp"

namespace hmip {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_binary(const MilpProblem& upper_set) {
    for (int j = 0; j < upper_set.num_vars(); ++j) {
        if (!upper_set.integrality[j] || upper_set.var_lower[j] < 0.0 || upper_set.var_upper[j] > 1.0) {
            throw Error(ErrorCode::kNonBinaryUpperVariables, "ASL and FY need binary upper variables");
        }
    }
}

void check_inputs(const MilpProblem& upper_set, std::span<const double> x_star, std::span<const double> c_hat) {
    const auto n = static_cast<std::size_t>(upper_set.num_vars());
    if (x_star.size() != n || c_hat.size() != n) {
        throw Error(ErrorCode::kDimensionMismatch, "x_star and c_hat must match the upper dimension");
    }
    if (!upper_set.is_feasible(x_star, 1e-7, 1e-6)) {
        throw Error(ErrorCode::kUpperInfeasiblePoint, "x_star is not in the upper feasible set");
    }
}

struct Point {
    std::vector<double> x;
    double g;
};

std::vector<Point> enumerate_with_g(const MilpProblem& upper_set, const UpperCostFn& g, std::uint64_t guard) {
    if (!g) throw Error(ErrorCode::kInvalidArgument, "this loss needs the true-cost function g");
    std::vector<Point> points;
    enumerate_feasible(upper_set, guard, [&](std::span<const double> x, double) {
        points.push_back({{x.begin(), x.end()}, g(x)});
    });
    if (points.empty()) throw Error(ErrorCode::kInvalidArgument, "upper feasible set is empty");
    return points;
}

}  // namespace

const char* to_string(LossKind kind) {
    switch (kind) {
        case LossKind::kGspoPlus: return "gspo";
        case LossKind::kAsl: return "asl";
        case LossKind::kZero: return "z";
        case LossKind::kFenchelYoung: return "fy";
    }
    return "unknown";
}

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "gspo" || name == "gspo+") return LossKind::kGspoPlus;
    if (name == "asl") return LossKind::kAsl;
    if (name == "z") return LossKind::kZero;
    if (name == "fy") return LossKind::kFenchelYoung;
    throw Error(ErrorCode::kInvalidArgument, "unknown loss '" + name + "' (expected asl|z|fy|gspo)");
}

void LossSpec::validate() const {
    if (kind == LossKind::kAsl && !(nu > 0.0)) throw Error(ErrorCode::kInvalidArgument, "ASL needs nu > 0");
    if (!(omega_weight >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "omega_weight must be >= 0");
    inner_config.validate();
}

LossSpec LossSpec::training(LossKind kind) {
    LossSpec spec;
    spec.kind = kind;
    spec.inner_config = SolveConfig{};
    spec.inner_config.gap_tolerance = 1e-3;
    spec.inner_config.node_limit = 10000;
    return spec;
}

InnerResult inner_maximize(const LossSpec& spec, const MilpProblem& upper_set, std::span<const double> x_star,
                           std::span<const double> c_hat, const UpperCostFn& g) {
    spec.validate();
    check_inputs(upper_set, x_star, c_hat);
    const int n = upper_set.num_vars();
    InnerResult out;

    if (spec.kind == LossKind::kGspoPlus) {
        const auto points = enumerate_with_g(upper_set, g, kGspoGuard);
        double best = -kInf;
        for (const auto& p : points) {
            const double v = p.g - dot(c_hat, p.x);
            if (v > best) {
                best = v;
                out.x = p.x;
            }
        }
        out.value = best;
        return out;
    }

    // max { const - q^T x } solved as min q^T x.
    MilpProblem inner = upper_set;
    inner.sense = ObjectiveSense::kMinimize;
    inner.objective.assign(c_hat.begin(), c_hat.end());
    double constant = 0.0;
    if (spec.kind == LossKind::kAsl) {
        check_binary(upper_set);
        for (int i = 0; i < n; ++i) {
            inner.objective[i] -= spec.nu * (1.0 - 2.0 * x_star[i]);
            constant += spec.nu * x_star[i];
        }
    } else if (spec.kind == LossKind::kFenchelYoung) {
        check_binary(upper_set);
        for (int i = 0; i < n; ++i) inner.objective[i] += spec.omega_weight;
    }
    const MilpSolution sol = solve_milp(inner, spec.inner_config);
    if (!sol.has_values()) {
        throw Error(ErrorCode::kInternal, std::string("inner maximization returned ") + to_string(sol.status));
    }
    out.x = sol.values;
    out.value = constant - sol.objective_value;
    out.status = sol.status;
    out.epsilon = std::isfinite(sol.dual_bound) ? std::max(0.0, sol.objective_value - sol.dual_bound) : kInf;
    return out;
}

LossEval loss_value_and_subgradient(const LossSpec& spec, const MilpProblem& upper_set,
                                    std::span<const double> x_star, std::span<const double> c_hat,
                                    const UpperCostFn& g) {
    const InnerResult inner = inner_maximize(spec, upper_set, x_star, c_hat, g);
    LossEval out;
    out.value = inner.value + dot(c_hat, x_star);
    if (spec.kind == LossKind::kGspoPlus) {
        out.value -= g(x_star);
    } else if (spec.kind == LossKind::kFenchelYoung) {
        out.value += spec.omega_weight * std::accumulate(x_star.begin(), x_star.end(), 0.0);
    }
    if (out.value < 0.0 && out.value > -1e-6) out.value = 0.0;
    out.x_inner = inner.x;
    out.subgradient.resize(x_star.size());
    for (std::size_t i = 0; i < x_star.size(); ++i) out.subgradient[i] = x_star[i] - inner.x[i];
    out.inner_status = inner.status;
    out.epsilon = inner.epsilon;
    out.epsilon_subgradient = inner.status != SolveStatus::kOptimal || inner.epsilon > 0.0;
    return out;
}

double suboptimality_loss(const MilpProblem& upper_set, std::span<const double> c_hat, const UpperCostFn& g) {
    if (static_cast<int>(c_hat.size()) != upper_set.num_vars()) {
        throw Error(ErrorCode::kDimensionMismatch, "c_hat must match the upper dimension");
    }
    const auto points = enumerate_with_g(upper_set, g, kEnumerationGuard);
    double g_min = kInf;
    for (const auto& p : points) g_min = std::min(g_min, p.g);
    MilpProblem policy = upper_set;
    policy.sense = ObjectiveSense::kMinimize;
    policy.objective.assign(c_hat.begin(), c_hat.end());
    const EnumerationResult minimizers = enumerate_optimal(policy);
    double worst = -kInf;
    for (const auto& x : minimizers.optimal_points) worst = std::max(worst, g(x));
    return worst - g_min;
}

std::vector<double> separating_cost(std::span<const double> x_star, double gap_bound, double delta) {
    if (!(delta > 0.0) || delta >= 1.0) throw Error(ErrorCode::kInvalidArgument, "delta must lie in (0, 1)");
    // c~ = 1 - 2 x_star gives c~^T (x - x_star) = Hamming(x, x_star), so only x_star
    // sits within delta < 1 of the minimum and lambda >= C / delta dominates the rest.
    const double lambda = std::max(gap_bound, 0.0) / delta + 1.0;
    std::vector<double> c(x_star.size());
    for (std::size_t i = 0; i < x_star.size(); ++i) c[i] = lambda * (1.0 - 2.0 * x_star[i]);
    return c;
}

ApproximationBoundReport check_approximation_bound(const MilpProblem& upper_set, const UpperCostFn& g,
                                                   double epsilon, double delta) {
    if (epsilon < 0.0 || delta < 0.0) throw Error(ErrorCode::kInvalidArgument, "epsilon and delta must be >= 0");
    const auto points = enumerate_with_g(upper_set, g, kGspoGuard);
    ApproximationBoundReport report;
    report.g_min = kInf;
    double g_max = -kInf;
    for (const auto& p : points) {
        report.g_min = std::min(report.g_min, p.g);
        g_max = std::max(g_max, p.g);
    }
    const double tie = 1e-12 * std::max(1.0, std::abs(report.g_min));
    double anchor_g = -kInf;
    for (const auto& p : points) {
        if (p.g <= report.g_min + epsilon + tie && p.g > anchor_g) {
            anchor_g = p.g;
            report.anchor = p.x;
        }
    }
    const auto& a = report.anchor;
    const std::size_t n = a.size();

    // Misspecified loss max_x { g(x) - g(a) - c^T (x - a) } by enumeration.
    auto evaluate = [&](const std::vector<double>& c, const std::vector<double>** arg) {
        double best = -kInf;
        for (const auto& p : points) {
            double v = p.g - anchor_g;
            for (std::size_t i = 0; i < n; ++i) v -= c[i] * (p.x[i] - a[i]);
            if (v > best) {
                best = v;
                *arg = &p.x;
            }
        }
        return best;
    };

    // Relaxation steps aimed past zero so the descent terminates in finitely many steps.
    const double margin = 0.05 * (g_max - report.g_min) + 1e-9;
    std::vector<double> c(n, 0.0);
    constexpr int kMaxIterations = 20000;
    const std::vector<double>* arg = nullptr;
    report.loss = evaluate(c, &arg);
    while (report.loss > delta) {
        if (report.iterations >= kMaxIterations) {
            throw Error(ErrorCode::kOptimizationDidNotReachDelta,
                        "subgradient descent stopped at loss " + std::to_string(report.loss));
        }
        double norm2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm2 += (a[i] - (*arg)[i]) * (a[i] - (*arg)[i]);
        if (norm2 == 0.0) break;
        const double step = (report.loss + margin) / norm2;
        for (std::size_t i = 0; i < n; ++i) c[i] -= step * (a[i] - (*arg)[i]);
        report.loss = evaluate(c, &arg);
        ++report.iterations;
    }
    report.c_hat = c;

    MilpProblem policy = upper_set;
    policy.sense = ObjectiveSense::kMinimize;
    policy.objective = c;
    report.worst_policy_g = -kInf;
    for (const auto& x : enumerate_optimal(policy).optimal_points) {
        report.worst_policy_g = std::max(report.worst_policy_g, g(x));
    }
    report.holds = report.worst_policy_g <= report.g_min + epsilon + delta + 1e-6;
    return report;
}

namespace {

std::vector<double> effective_cost(const HierarchicalFamily& family, std::span<const double> c_hat) {
    std::vector<double> c(c_hat.begin(), c_hat.end());
    for (double& v : c) v *= family.policy_sign();
    return c;
}

UpperCostFn true_cost_fn(const HierarchicalFamily& family, std::span<const double> theta) {
    return [&family, theta](std::span<const double> x) { return family.true_cost(theta, x); };
}

}  // namespace

InnerResult inner_maximize(const LossSpec& spec, const HierarchicalFamily& family, std::span<const double> theta,
                           std::span<const double> x_star, std::span<const double> c_hat) {
    const auto c = effective_cost(family, c_hat);
    return inner_maximize(spec, family.upper_feasible_set(theta), x_star, c, true_cost_fn(family, theta));
}

LossEval loss_value_and_subgradient(const LossSpec& spec, const HierarchicalFamily& family,
                                    std::span<const double> theta, std::span<const double> x_star,
                                    std::span<const double> c_hat) {
    const auto c = effective_cost(family, c_hat);
    LossEval out = loss_value_and_subgradient(spec, family.upper_feasible_set(theta), x_star, c,
                                              true_cost_fn(family, theta));
    for (double& s : out.subgradient) s *= family.policy_sign();
    return out;
}

double suboptimality_loss(const HierarchicalFamily& family, std::span<const double> theta,
                          std::span<const double> c_hat) {
    const auto c = effective_cost(family, c_hat);
    return suboptimality_loss(family.upper_feasible_set(theta), c, true_cost_fn(family, theta));
}

bool check_approximation_bound(const HierarchicalFamily& family, std::span<const double> theta, double epsilon,
                               double delta) {
    return check_approximation_bound(family.upper_feasible_set(theta), true_cost_fn(family, theta), epsilon, delta)
        .holds;
}

}  // namespace hmip
