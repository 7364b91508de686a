#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

namespace hmip {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct MatrixEntry {
    int col;
    double value;
};

/// Row-wise sparse matrix. Rows are appended one at a time; duplicate column
/// entries within a row are summed.
class SparseMatrix {
public:
    SparseMatrix() = default;
    explicit SparseMatrix(int cols) : cols_(cols) {}

    int rows() const { return static_cast<int>(rows_.size()); }
    int cols() const { return cols_; }
    void set_cols(int cols) { cols_ = cols; }

    int add_row(std::vector<MatrixEntry> entries);
    std::span<const MatrixEntry> row(int i) const { return rows_[static_cast<std::size_t>(i)]; }
    double row_dot(int i, std::span<const double> x) const;
    std::size_t nonzeros() const;

private:
    int cols_ = 0;
    std::vector<std::vector<MatrixEntry>> rows_;
};

enum class ObjectiveSense { kMinimize, kMaximize };

/// min/max c^T x  s.t.  A x <= b,  lower <= x <= upper,  x_j integer where flagged.
struct MilpProblem {
    std::vector<double> objective;
    SparseMatrix constraints;
    std::vector<double> rhs;
    std::vector<double> var_lower;
    std::vector<double> var_upper;
    std::vector<std::uint8_t> integrality;
    ObjectiveSense sense = ObjectiveSense::kMinimize;

    int num_vars() const { return static_cast<int>(objective.size()); }
    int num_rows() const { return constraints.rows(); }

    /// Adds a variable and returns its index.
    int add_var(double cost, double lower, double upper, bool is_integer);
    /// Adds sum(entries) <= rhs and returns the row index.
    int add_le(std::vector<MatrixEntry> entries, double rhs_value);
    /// Adds sum(entries) == rhs as two opposing <= rows.
    void add_eq(const std::vector<MatrixEntry>& entries, double rhs_value);

    /// Throws kDimensionMismatch / kInvalidArgument when the fields disagree.
    void validate() const;

    /// Copy with the objective negated when the sense is maximize.
    MilpProblem normalized() const;

    double evaluate_objective(std::span<const double> x) const;
    /// Largest violation over rows and bounds (0 when feasible).
    double max_violation(std::span<const double> x) const;
    bool is_feasible(std::span<const double> x, double feas_tol, double int_tol) const;
};

enum class SolveStatus { kOptimal, kFeasible, kInfeasible, kUnbounded, kLimitReached };

const char* to_string(SolveStatus status);

struct IncumbentEvent {
    double time_s;
    std::int64_t node;
    double objective;
};

struct MilpSolution {
    SolveStatus status = SolveStatus::kLimitReached;
    std::vector<double> values;  ///< empty unless status is Optimal or Feasible
    double objective_value = kInf;
    double dual_bound = -kInf;
    std::int64_t node_count = 0;
    double wall_time = 0.0;
    std::vector<IncumbentEvent> incumbents;
    std::vector<double> bound_trace;  ///< global dual bound after each node

    bool has_values() const { return !values.empty(); }
};

struct SolveConfig {
    double gap_tolerance = 1e-4;
    double feasibility_tolerance = 1e-7;
    double integrality_tolerance = 1e-6;
    double time_limit = kInf;
    std::int64_t node_limit = std::numeric_limits<std::int64_t>::max();
    std::int64_t stop_after_incumbents = std::numeric_limits<std::int64_t>::max();
    /// Trivial bound points and root rounding before branching.
    bool root_heuristics = true;
    /// Upper limit on memory held by warm-start tableaus of open nodes.
    std::size_t warm_start_budget_bytes = std::size_t{256} << 20;

    void validate() const;

    static SolveConfig exact();
};

/// LP relaxation (integrality ignored). Values are in the caller's sense.
MilpSolution solve_lp(const MilpProblem& problem, const SolveConfig& config = {});

/// Best-bound branch and bound over the LP relaxation.
MilpSolution solve_milp(const MilpProblem& problem, const SolveConfig& config = {});

struct EnumerationResult {
    double optimal_value = kInf;  ///< in the caller's sense
    std::vector<std::vector<double>> optimal_points;  ///< lexicographic order
    bool feasible() const { return !optimal_points.empty(); }
};

inline constexpr std::uint64_t kEnumerationGuard = std::uint64_t{1} << 20;

/// Brute force over every integer assignment; continuous variables are
/// optimized by solve_lp per assignment. Test-only oracle.
EnumerationResult enumerate_optimal(const MilpProblem& problem,
                                    std::uint64_t guard = kEnumerationGuard);

/// Calls visit(point, objective) for every feasible integer assignment of a
/// pure-integer problem, in lexicographic order.
void enumerate_feasible(const MilpProblem& problem, std::uint64_t guard,
                        const std::function<void(std::span<const double>, double)>& visit);

/// Plain-text listing, one constraint per line.
void write_lp_listing(const MilpProblem& problem, std::ostream& out);

}  // namespace hmip
