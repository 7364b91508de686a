#include <algorithm>
#include <cmath>
#include <ostream>

#include "hmip/error.hpp"
#include "hmip/milp.hpp"

namespace hmip {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
        case ErrorCode::kNumericalFailure: return "NumericalFailure";
        case ErrorCode::kSearchSpaceTooLarge: return "SearchSpaceTooLarge";
        case ErrorCode::kInvalidArgument: return "InvalidArgument";
        case ErrorCode::kNonBinaryUpperVariables: return "NonBinaryUpperVariables";
        case ErrorCode::kUpperInfeasiblePoint: return "UpperInfeasiblePoint";
        case ErrorCode::kInternal: return "InternalError";
        case ErrorCode::kStaleActivationCache: return "StaleActivationCache";
        case ErrorCode::kMissingLabels: return "MissingLabels";
        case ErrorCode::kEmptyTrainSet: return "EmptyTrainSet";
        case ErrorCode::kAllRunsFailed: return "AllRunsFailed";
        case ErrorCode::kTooManyAbortedSteps: return "TooManyAbortedSteps";
        case ErrorCode::kEmptyCalibrationSet: return "EmptyCalibrationSet";
        case ErrorCode::kAlphaOutOfRange: return "AlphaOutOfRange";
        case ErrorCode::kUncalibrated: return "Uncalibrated";
        case ErrorCode::kTooManyDiscards: return "TooManyDiscards";
        case ErrorCode::kInsufficientSamples: return "InsufficientSamples";
        case ErrorCode::kOptimizationDidNotReachDelta: return "OptimizationDidNotReachDelta";
        case ErrorCode::kParse: return "ParseError";
        case ErrorCode::kIo: return "IoError";
    }
    return "Unknown";
}

const char* to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::kOptimal: return "Optimal";
        case SolveStatus::kFeasible: return "Feasible";
        case SolveStatus::kInfeasible: return "Infeasible";
        case SolveStatus::kUnbounded: return "Unbounded";
        case SolveStatus::kLimitReached: return "LimitReached";
    }
    return "Unknown";
}

int SparseMatrix::add_row(std::vector<MatrixEntry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const MatrixEntry& a, const MatrixEntry& b) { return a.col < b.col; });
    std::vector<MatrixEntry> merged;
    merged.reserve(entries.size());
    for (const auto& e : entries) {
        if (e.col < 0 || e.col >= cols_) {
            throw Error(ErrorCode::kDimensionMismatch, "column index out of range in sparse row");
        }
        if (!merged.empty() && merged.back().col == e.col) {
            merged.back().value += e.value;
        } else {
            merged.push_back(e);
        }
    }
    std::erase_if(merged, [](const MatrixEntry& e) { return e.value == 0.0; });
    rows_.push_back(std::move(merged));
    return rows() - 1;
}

double SparseMatrix::row_dot(int i, std::span<const double> x) const {
    double s = 0.0;
    for (const auto& e : row(i)) s += e.value * x[static_cast<std::size_t>(e.col)];
    return s;
}

std::size_t SparseMatrix::nonzeros() const {
    std::size_t nnz = 0;
    for (const auto& r : rows_) nnz += r.size();
    return nnz;
}

int MilpProblem::add_var(double cost, double lower, double upper, bool is_integer) {
    objective.push_back(cost);
    var_lower.push_back(lower);
    var_upper.push_back(upper);
    integrality.push_back(is_integer ? 1 : 0);
    constraints.set_cols(num_vars());
    return num_vars() - 1;
}

int MilpProblem::add_le(std::vector<MatrixEntry> entries, double rhs_value) {
    constraints.set_cols(num_vars());
    const int r = constraints.add_row(std::move(entries));
    rhs.push_back(rhs_value);
    return r;
}

void MilpProblem::add_eq(const std::vector<MatrixEntry>& entries, double rhs_value) {
    add_le(entries, rhs_value);
    std::vector<MatrixEntry> neg = entries;
    for (auto& e : neg) e.value = -e.value;
    add_le(std::move(neg), -rhs_value);
}

void MilpProblem::validate() const {
    const auto n = objective.size();
    if (n == 0) throw Error(ErrorCode::kDimensionMismatch, "problem has no variables");
    if (var_lower.size() != n || var_upper.size() != n || integrality.size() != n) {
        throw Error(ErrorCode::kDimensionMismatch, "bound/integrality vectors must match objective length");
    }
    if (constraints.cols() != static_cast<int>(n)) {
        throw Error(ErrorCode::kDimensionMismatch, "constraint matrix columns must equal variable count");
    }
    if (rhs.size() != static_cast<std::size_t>(constraints.rows())) {
        throw Error(ErrorCode::kDimensionMismatch, "rhs length must equal constraint rows");
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (std::isnan(var_lower[j]) || std::isnan(var_upper[j]) || var_lower[j] > var_upper[j]) {
            throw Error(ErrorCode::kInvalidArgument, "variable " + std::to_string(j) + " has lower > upper");
        }
        if (!std::isfinite(objective[j])) {
            throw Error(ErrorCode::kInvalidArgument, "objective coefficients must be finite");
        }
    }
    for (double b : rhs) {
        if (!std::isfinite(b)) throw Error(ErrorCode::kInvalidArgument, "rhs entries must be finite");
    }
}

MilpProblem MilpProblem::normalized() const {
    MilpProblem out = *this;
    if (sense == ObjectiveSense::kMaximize) {
        for (double& c : out.objective) c = -c;
        out.sense = ObjectiveSense::kMinimize;
    }
    return out;
}

double MilpProblem::evaluate_objective(std::span<const double> x) const {
    double s = 0.0;
    for (std::size_t j = 0; j < objective.size(); ++j) s += objective[j] * x[j];
    return s;
}

double MilpProblem::max_violation(std::span<const double> x) const {
    double worst = 0.0;
    for (int i = 0; i < num_rows(); ++i) {
        worst = std::max(worst, constraints.row_dot(i, x) - rhs[static_cast<std::size_t>(i)]);
    }
    for (std::size_t j = 0; j < objective.size(); ++j) {
        worst = std::max(worst, var_lower[j] - x[j]);
        worst = std::max(worst, x[j] - var_upper[j]);
    }
    return worst;
}

bool MilpProblem::is_feasible(std::span<const double> x, double feas_tol, double int_tol) const {
    if (x.size() != objective.size()) return false;
    for (std::size_t j = 0; j < objective.size(); ++j) {
        if (integrality[j] && std::abs(x[j] - std::round(x[j])) > int_tol) return false;
    }
    return max_violation(x) <= feas_tol;
}

void SolveConfig::validate() const {
    if (!(gap_tolerance > 0.0) || !(feasibility_tolerance > 0.0) || !(integrality_tolerance > 0.0)) {
        throw Error(ErrorCode::kInvalidArgument, "solver tolerances must be strictly positive");
    }
    if (!(time_limit > 0.0) || node_limit <= 0 || stop_after_incumbents <= 0) {
        throw Error(ErrorCode::kInvalidArgument, "solver limits must be positive");
    }
}

SolveConfig SolveConfig::exact() {
    SolveConfig c;
    c.gap_tolerance = 1e-9;
    return c;
}

namespace {

void write_term(std::ostream& out, double coef, int col, bool first) {
    if (coef < 0) {
        out << (first ? "-" : " - ");
    } else if (!first) {
        out << " + ";
    }
    const double a = std::abs(coef);
    if (a != 1.0) out << a << ' ';
    out << 'x' << col;
}

}  // namespace

void write_lp_listing(const MilpProblem& problem, std::ostream& out) {
    out << (problem.sense == ObjectiveSense::kMinimize ? "minimize" : "maximize") << "\n  obj: ";
    bool first = true;
    for (int j = 0; j < problem.num_vars(); ++j) {
        if (problem.objective[j] == 0.0) continue;
        write_term(out, problem.objective[j], j, first);
        first = false;
    }
    if (first) out << '0';
    out << "\nsubject to\n";
    for (int i = 0; i < problem.num_rows(); ++i) {
        out << "  c" << i << ": ";
        first = true;
        for (const auto& e : problem.constraints.row(i)) {
            write_term(out, e.value, e.col, first);
            first = false;
        }
        if (first) out << '0';
        out << " <= " << problem.rhs[i] << '\n';
    }
    out << "bounds\n";
    for (int j = 0; j < problem.num_vars(); ++j) {
        out << "  " << problem.var_lower[j] << " <= x" << j << " <= " << problem.var_upper[j] << '\n';
    }
    out << "integer\n ";
    for (int j = 0; j < problem.num_vars(); ++j) {
        if (problem.integrality[j]) out << " x" << j;
    }
    out << "\nend\n";
}

}  // namespace hmip
