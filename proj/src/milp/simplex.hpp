#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "hmip/milp.hpp"

namespace hmip::detail {

enum class LpOutcome { kOptimal, kInfeasible, kUnbounded, kCutoff };

struct SimplexOptions {
    double feasibility_tolerance = 1e-7;
    double optimality_tolerance = 1e-9;
    double pivot_tolerance = 1e-9;
    /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
    int degenerate_pivots_before_bland = 50;
};

/// Dense bounded-variable tableau simplex over min c^T x, A x + s = b,
/// lower <= x <= upper, s >= 0. Nonbasic variables sit at one of their bounds
/// (free ones at zero). Copyable so branch-and-bound children can warm start
/// from the parent's final tableau.
class DenseSimplex {
public:
    /// `problem` must already be in minimize form.
    DenseSimplex(const MilpProblem& problem, const SimplexOptions& options);

    /// Solves from the slack basis: dual simplex when the initial placement is
    /// dual feasible, artificial phase 1 plus primal phase 2 otherwise.
    LpOutcome solve();

    /// Re-solves after bound changes from the current (dual feasible) basis.
    /// Returns kCutoff as soon as the objective provably exceeds `cutoff`.
    LpOutcome reoptimize(double cutoff);

    /// Changes the bounds of structural variable `var`.
    void set_bounds(int var, double lower, double upper);

    double lower(int var) const { return lo_[static_cast<std::size_t>(var)]; }
    double upper(int var) const { return hi_[static_cast<std::size_t>(var)]; }

    double objective() const;
    std::vector<double> structural_values() const;
    int num_structural() const { return n_; }
    std::size_t memory_bytes() const;
    std::int64_t pivots() const { return pivots_; }

private:
    struct Original {
        std::vector<std::vector<MatrixEntry>> rows;  // over structural columns
        std::vector<double> rhs;
        std::vector<double> cost;  // structural
    };

    double& at(int row, int col) { return tab_[static_cast<std::size_t>(row) * cols_ + col]; }
    double at(int row, int col) const { return tab_[static_cast<std::size_t>(row) * cols_ + col]; }

    void build_tableau(const std::vector<int>& artificial_rows);
    void set_phase_costs(bool phase_one);
    void recompute_reduced_costs();
    void recompute_basic_values();
    void refactor();
    void pivot(int row, int col);

    bool is_basic(int j) const { return row_of_[static_cast<std::size_t>(j)] >= 0; }
    bool can_increase(int j) const;
    bool can_decrease(int j) const;
    bool dual_feasible() const;
    double max_primal_infeasibility(int* worst_row) const;
    double residual_violation() const;

    LpOutcome run_primal();
    LpOutcome run_dual(double cutoff);
    LpOutcome finish(LpOutcome outcome, double cutoff, int depth);

    SimplexOptions opt_;
    std::shared_ptr<const Original> original_;
    int m_ = 0;      // rows
    int n_ = 0;      // structural columns
    int cols_ = 0;   // structural + slack + artificial
    std::vector<double> tab_;   // m x cols, B^-1 [A I Art]
    std::vector<double> beta_;  // B^-1 b
    std::vector<double> cost_;  // current phase costs
    std::vector<double> d_;     // reduced costs
    std::vector<double> lo_, hi_, x_;
    std::vector<int> basis_;    // variable basic in each row
    std::vector<int> row_of_;   // row of a basic variable, -1 otherwise
    std::vector<int> art_row_;  // row of each artificial column
    std::vector<int> nz_;       // scratch: pivot row support
    bool built_ = false;
    std::int64_t pivots_ = 0;
};

}  // namespace hmip::detail
