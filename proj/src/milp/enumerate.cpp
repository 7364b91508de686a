#include <cmath>

#include "hmip/error.hpp"
#include "hmip/milp.hpp"

namespace hmip {

namespace {

struct IntegerGrid {
    std::vector<int> vars;
    std::vector<double> lo, hi;
};

IntegerGrid integer_grid(const MilpProblem& problem, std::uint64_t guard) {
    IntegerGrid grid;
    double count = 1.0;
    for (int j = 0; j < problem.num_vars(); ++j) {
        if (!problem.integrality[j]) continue;
        const double lo = std::ceil(problem.var_lower[j] - 1e-9);
        const double hi = std::floor(problem.var_upper[j] + 1e-9);
        if (!std::isfinite(lo) || !std::isfinite(hi)) {
            throw Error(ErrorCode::kSearchSpaceTooLarge, "integer variable with infinite bound");
        }
        grid.vars.push_back(j);
        grid.lo.push_back(lo);
        grid.hi.push_back(hi);
        count *= std::max(0.0, hi - lo + 1.0);
    }
    if (count > static_cast<double>(guard)) {
        throw Error(ErrorCode::kSearchSpaceTooLarge,
                    "enumeration space of " + std::to_string(count) + " points exceeds the guard");
    }
    return grid;
}

// Visits every assignment of the grid in lexicographic order (first variable most significant).
template <typename Visit>
void for_each_assignment(const IntegerGrid& grid, std::vector<double>& point, Visit&& visit) {
    const std::size_t k = grid.vars.size();
    for (std::size_t i = 0; i < k; ++i) {
        if (grid.lo[i] > grid.hi[i]) return;
        point[grid.vars[i]] = grid.lo[i];
    }
    while (true) {
        visit(point);
        std::size_t i = k;
        while (i > 0) {
            --i;
            double& v = point[grid.vars[i]];
            if (v < grid.hi[i]) {
                v += 1.0;
                break;
            }
            v = grid.lo[i];
            if (i == 0) return;
        }
        if (k == 0) return;
    }
}

}  // namespace

EnumerationResult enumerate_optimal(const MilpProblem& problem, std::uint64_t guard) {
    problem.validate();
    const IntegerGrid grid = integer_grid(problem, guard);
    const MilpProblem minp = problem.normalized();
    const double sign = problem.sense == ObjectiveSense::kMaximize ? -1.0 : 1.0;
    const bool pure = static_cast<int>(grid.vars.size()) == problem.num_vars();
    SolveConfig lp_config;

    std::vector<std::pair<std::vector<double>, double>> candidates;
    double best = kInf;
    std::vector<double> point(static_cast<std::size_t>(problem.num_vars()), 0.0);
    for_each_assignment(grid, point, [&](const std::vector<double>& p) {
        std::vector<double> full;
        double obj;
        if (pure) {
            if (minp.max_violation(p) > 1e-7) return;
            full = p;
            obj = minp.evaluate_objective(p);
        } else {
            MilpProblem fixed = minp;
            for (int j : grid.vars) fixed.var_lower[j] = fixed.var_upper[j] = p[j];
            const MilpSolution lp = solve_lp(fixed, lp_config);
            if (lp.status != SolveStatus::kOptimal) return;
            full = lp.values;
            for (int j : grid.vars) full[j] = p[j];
            obj = lp.objective_value;
        }
        const double tol = 1e-9 * std::max(1.0, std::abs(std::min(best, obj)));
        if (obj > best + tol) return;
        if (obj < best) best = obj;
        candidates.emplace_back(std::move(full), obj);
    });

    EnumerationResult result;
    if (candidates.empty()) return result;
    const double tol = 1e-9 * std::max(1.0, std::abs(best));
    for (auto& [x, obj] : candidates) {
        if (obj <= best + tol) result.optimal_points.push_back(std::move(x));
    }
    result.optimal_value = sign * best;
    return result;
}

void enumerate_feasible(const MilpProblem& problem, std::uint64_t guard,
                        const std::function<void(std::span<const double>, double)>& visit) {
    problem.validate();
    const IntegerGrid grid = integer_grid(problem, guard);
    if (static_cast<int>(grid.vars.size()) != problem.num_vars()) {
        throw Error(ErrorCode::kInvalidArgument, "enumerate_feasible needs a pure integer problem");
    }
    std::vector<double> point(static_cast<std::size_t>(problem.num_vars()), 0.0);
    for_each_assignment(grid, point, [&](const std::vector<double>& p) {
        if (problem.max_violation(p) > 1e-7) return;
        visit(p, problem.evaluate_objective(p));
    });
}

}  // namespace hmip
