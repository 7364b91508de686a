#include "milp/simplex.hpp"

#include <algorithm>
#include <cmath>

#include "hmip/error.hpp"

namespace hmip::detail {
namespace {

constexpr double kSnap = 1e-12;

}  // namespace

DenseSimplex::DenseSimplex(const MilpProblem& problem, const SimplexOptions& options)
    : opt_(options), m_(problem.num_rows()), n_(problem.num_vars()) {
    auto original = std::make_shared<Original>();
    original->rows.reserve(static_cast<std::size_t>(m_));
    for (int i = 0; i < m_; ++i) {
        auto row = problem.constraints.row(i);
        original->rows.emplace_back(row.begin(), row.end());
    }
    original->rhs = problem.rhs;
    original->cost = problem.objective;
    original_ = std::move(original);

    lo_.assign(static_cast<std::size_t>(n_ + m_), 0.0);
    hi_.assign(static_cast<std::size_t>(n_ + m_), kInf);
    x_.assign(static_cast<std::size_t>(n_ + m_), 0.0);
    for (int j = 0; j < n_; ++j) {
        lo_[j] = problem.var_lower[j];
        hi_[j] = problem.var_upper[j];
    }
}

bool DenseSimplex::can_increase(int j) const {
    return x_[j] < hi_[j] - kSnap;
}

bool DenseSimplex::can_decrease(int j) const {
    return x_[j] > lo_[j] + kSnap;
}

double DenseSimplex::objective() const {
    double obj = 0.0;
    for (int j = 0; j < n_; ++j) obj += original_->cost[j] * x_[j];
    return obj;
}

std::vector<double> DenseSimplex::structural_values() const {
    return {x_.begin(), x_.begin() + n_};
}

std::size_t DenseSimplex::memory_bytes() const {
    return sizeof(double) * (tab_.size() + beta_.size() + cost_.size() + d_.size() + lo_.size() +
                             hi_.size() + x_.size()) +
           sizeof(int) * (basis_.size() + row_of_.size()) + sizeof(*this);
}

void DenseSimplex::build_tableau(const std::vector<int>& artificial_rows) {
    const int n_art = static_cast<int>(artificial_rows.size());
    cols_ = n_ + m_ + n_art;
    tab_.assign(static_cast<std::size_t>(m_) * cols_, 0.0);
    beta_ = original_->rhs;
    lo_.resize(static_cast<std::size_t>(n_ + m_));
    hi_.resize(static_cast<std::size_t>(n_ + m_));
    x_.resize(static_cast<std::size_t>(n_ + m_));
    for (int i = 0; i < m_; ++i) {
        for (const auto& e : original_->rows[i]) at(i, e.col) += e.value;
        at(i, n_ + i) = 1.0;
        lo_[n_ + i] = 0.0;
        hi_[n_ + i] = kInf;
        x_[n_ + i] = 0.0;
    }
    basis_.resize(static_cast<std::size_t>(m_));
    row_of_.assign(static_cast<std::size_t>(cols_), -1);
    for (int i = 0; i < m_; ++i) basis_[i] = n_ + i;
    for (int k = 0; k < n_art; ++k) {
        const int i = artificial_rows[k];
        const int col = n_ + m_ + k;
        at(i, col) = -1.0;
        lo_.push_back(0.0);
        hi_.push_back(kInf);
        x_.push_back(0.0);
        basis_[i] = col;
        // Basis column is -e_i, so B^-1 negates the row.
        double* row = &tab_[static_cast<std::size_t>(i) * cols_];
        for (int j = 0; j < cols_; ++j) row[j] = -row[j];
        beta_[i] = -beta_[i];
    }
    for (int i = 0; i < m_; ++i) row_of_[basis_[i]] = i;
    recompute_basic_values();
}

void DenseSimplex::set_phase_costs(bool phase_one) {
    cost_.assign(static_cast<std::size_t>(cols_), 0.0);
    if (phase_one) {
        for (int j = n_ + m_; j < cols_; ++j) cost_[j] = 1.0;
    } else {
        for (int j = 0; j < n_; ++j) cost_[j] = original_->cost[j];
    }
    recompute_reduced_costs();
}

void DenseSimplex::recompute_reduced_costs() {
    d_ = cost_;
    for (int i = 0; i < m_; ++i) {
        const double cb = cost_[basis_[i]];
        if (cb == 0.0) continue;
        const double* row = &tab_[static_cast<std::size_t>(i) * cols_];
        for (int j = 0; j < cols_; ++j) d_[j] -= cb * row[j];
    }
    for (int i = 0; i < m_; ++i) d_[basis_[i]] = 0.0;
}

void DenseSimplex::recompute_basic_values() {
    std::vector<int> moved;
    for (int j = 0; j < cols_; ++j) {
        if (!is_basic(j) && x_[j] != 0.0) moved.push_back(j);
    }
    for (int i = 0; i < m_; ++i) {
        const double* row = &tab_[static_cast<std::size_t>(i) * cols_];
        double v = beta_[i];
        for (int j : moved) v -= row[j] * x_[j];
        x_[basis_[i]] = v;
    }
}

void DenseSimplex::pivot(int r, int e) {
    double* prow = &tab_[static_cast<std::size_t>(r) * cols_];
    const double inv = 1.0 / prow[e];
    // Branch-and-bound tableaus stay sparse, so only the pivot row's nonzeros are swept.
    nz_.clear();
    for (int j = 0; j < cols_; ++j) {
        if (prow[j] != 0.0) {
            prow[j] *= inv;
            nz_.push_back(j);
        }
    }
    prow[e] = 1.0;
    beta_[r] *= inv;
    const bool dense = 4 * nz_.size() > static_cast<std::size_t>(cols_);
    for (int i = 0; i < m_; ++i) {
        if (i == r) continue;
        double* row = &tab_[static_cast<std::size_t>(i) * cols_];
        const double f = row[e];
        if (f == 0.0) continue;
        if (dense) {
            for (int j = 0; j < cols_; ++j) row[j] -= f * prow[j];
        } else {
            for (int j : nz_) row[j] -= f * prow[j];
        }
        row[e] = 0.0;
        beta_[i] -= f * beta_[r];
    }
    const double fd = d_[e];
    if (fd != 0.0) {
        for (int j : nz_) d_[j] -= fd * prow[j];
    }
    d_[e] = 0.0;
    const int leaving = basis_[r];
    row_of_[leaving] = -1;
    basis_[r] = e;
    row_of_[e] = r;
    ++pivots_;
}

bool DenseSimplex::dual_feasible() const {
    const double tol = opt_.optimality_tolerance * 10.0;
    for (int j = 0; j < cols_; ++j) {
        if (is_basic(j)) continue;
        if (can_increase(j) && d_[j] < -tol) return false;
        if (can_decrease(j) && d_[j] > tol) return false;
    }
    return true;
}

double DenseSimplex::max_primal_infeasibility(int* worst_row) const {
    double worst = 0.0;
    if (worst_row) *worst_row = -1;
    for (int i = 0; i < m_; ++i) {
        const int b = basis_[i];
        const double v = std::max(lo_[b] - x_[b], x_[b] - hi_[b]);
        if (v > worst) {
            worst = v;
            if (worst_row) *worst_row = i;
        }
    }
    return worst;
}

double DenseSimplex::residual_violation() const {
    double worst = 0.0;
    for (int i = 0; i < m_; ++i) {
        double ax = 0.0;
        for (const auto& e : original_->rows[i]) ax += e.value * x_[e.col];
        const double b = original_->rhs[i];
        worst = std::max(worst, (ax - b) / (1.0 + std::abs(b)));
    }
    for (int j = 0; j < n_; ++j) {
        worst = std::max(worst, lo_[j] - x_[j]);
        worst = std::max(worst, x_[j] - hi_[j]);
    }
    return worst;
}

void DenseSimplex::refactor() {
    const std::vector<int> want = basis_;
    const int n_art = cols_ - n_ - m_;
    tab_.assign(static_cast<std::size_t>(m_) * cols_, 0.0);
    beta_ = original_->rhs;
    for (int i = 0; i < m_; ++i) {
        for (const auto& e : original_->rows[i]) at(i, e.col) += e.value;
        at(i, n_ + i) = 1.0;
    }
    for (int k = 0; k < n_art; ++k) at(art_row_[k], n_ + m_ + k) = -1.0;

    std::vector<char> assigned(static_cast<std::size_t>(m_), 0);
    std::vector<int> new_basis(static_cast<std::size_t>(m_), -1);
    for (int col : want) {
        int best = -1;
        double best_abs = 1e-11;
        for (int i = 0; i < m_; ++i) {
            if (assigned[i]) continue;
            const double a = std::abs(at(i, col));
            if (a > best_abs) {
                best_abs = a;
                best = i;
            }
        }
        if (best < 0) throw Error(ErrorCode::kNumericalFailure, "singular basis during refactorization");
        assigned[best] = 1;
        new_basis[best] = col;
        double* prow = &tab_[static_cast<std::size_t>(best) * cols_];
        const double inv = 1.0 / prow[col];
        for (int j = 0; j < cols_; ++j) prow[j] *= inv;
        beta_[best] *= inv;
        for (int i = 0; i < m_; ++i) {
            if (i == best) continue;
            double* row = &tab_[static_cast<std::size_t>(i) * cols_];
            const double f = row[col];
            if (f == 0.0) continue;
            for (int j = 0; j < cols_; ++j) row[j] -= f * prow[j];
            row[col] = 0.0;
            beta_[i] -= f * beta_[best];
        }
    }
    basis_ = new_basis;
    row_of_.assign(static_cast<std::size_t>(cols_), -1);
    for (int i = 0; i < m_; ++i) row_of_[basis_[i]] = i;
    recompute_reduced_costs();
    recompute_basic_values();
}

LpOutcome DenseSimplex::run_primal() {
    const std::int64_t max_iter = 50LL * (m_ + cols_) + 1000;
    int degenerate = 0;
    for (std::int64_t iter = 0; iter < max_iter; ++iter) {
        const bool bland = degenerate >= opt_.degenerate_pivots_before_bland;
        int e = -1;
        double dir = 0.0;
        double best_score = 0.0;
        for (int j = 0; j < cols_; ++j) {
            if (is_basic(j)) continue;
            double score = 0.0;
            double jdir = 0.0;
            if (d_[j] < -opt_.optimality_tolerance && can_increase(j)) {
                score = -d_[j];
                jdir = 1.0;
            } else if (d_[j] > opt_.optimality_tolerance && can_decrease(j)) {
                score = d_[j];
                jdir = -1.0;
            } else {
                continue;
            }
            if (bland) {
                e = j;
                dir = jdir;
                break;
            }
            if (score > best_score) {
                best_score = score;
                e = j;
                dir = jdir;
            }
        }
        if (e < 0) return LpOutcome::kOptimal;

        double step = hi_[e] - lo_[e];  // bound flip
        int leave = -1;
        double leave_alpha = 0.0;
        for (int i = 0; i < m_; ++i) {
            const double alpha = at(i, e) * dir;
            const int b = basis_[i];
            double limit;
            if (alpha > opt_.pivot_tolerance) {
                if (lo_[b] == -kInf) continue;
                limit = std::max(0.0, (x_[b] - lo_[b]) / alpha);
            } else if (alpha < -opt_.pivot_tolerance) {
                if (hi_[b] == kInf) continue;
                limit = std::max(0.0, (hi_[b] - x_[b]) / -alpha);
            } else {
                continue;
            }
            bool take = limit < step;
            if (!take && leave >= 0 && limit == step) {
                take = bland ? b < basis_[leave] : std::abs(alpha) > std::abs(leave_alpha);
            }
            if (take) {
                step = limit;
                leave = i;
                leave_alpha = alpha;
            }
        }
        if (step == kInf) return LpOutcome::kUnbounded;

        const double delta = dir * step;
        if (delta != 0.0) {
            for (int i = 0; i < m_; ++i) {
                const double a = at(i, e);
                if (a != 0.0) x_[basis_[i]] -= a * delta;
            }
            x_[e] += delta;
        }
        degenerate = step < 1e-12 ? degenerate + 1 : 0;
        if (leave < 0) {
            x_[e] = dir > 0 ? hi_[e] : lo_[e];
            continue;
        }
        const int b = basis_[leave];
        x_[b] = leave_alpha > 0 ? lo_[b] : hi_[b];
        pivot(leave, e);
    }
    throw Error(ErrorCode::kNumericalFailure, "primal simplex iteration limit (cycling)");
}

LpOutcome DenseSimplex::run_dual(double cutoff) {
    const std::int64_t max_iter = 50LL * (m_ + cols_) + 1000;
    int degenerate = 0;
    for (std::int64_t iter = 0; iter < max_iter; ++iter) {
        if (cutoff < kInf && objective() > cutoff) return LpOutcome::kCutoff;
        const bool bland = degenerate >= opt_.degenerate_pivots_before_bland;
        int r = -1;
        double worst = opt_.feasibility_tolerance;
        for (int i = 0; i < m_; ++i) {
            const int b = basis_[i];
            const double v = std::max(lo_[b] - x_[b], x_[b] - hi_[b]);
            if (v <= opt_.feasibility_tolerance) continue;
            if (bland) {
                if (r < 0 || b < basis_[r]) r = i;
            } else if (v > worst) {
                worst = v;
                r = i;
            }
        }
        if (r < 0) return LpOutcome::kOptimal;

        const int p = basis_[r];
        const bool raise = x_[p] < lo_[p];
        const double target = raise ? lo_[p] : hi_[p];
        int e = -1;
        double best_ratio = kInf;
        double best_abs = 0.0;
        for (int j = 0; j < cols_; ++j) {
            if (is_basic(j)) continue;
            const double a = at(r, j);
            if (std::abs(a) <= opt_.pivot_tolerance) continue;
            // x_p moves by -a * dx_j; find directions that push x_p toward target.
            const double need = raise ? -a : a;  // sign of dx_j that helps
            bool ok;
            if (need > 0) {
                ok = can_increase(j);
            } else {
                ok = can_decrease(j);
            }
            if (!ok) continue;
            const double ratio = std::max(0.0, need > 0 ? d_[j] : -d_[j]) / std::abs(a);
            const bool better = ratio < best_ratio - 1e-12 ||
                                (ratio <= best_ratio + 1e-12 && std::abs(a) > best_abs);
            if (e < 0 || better) {
                best_ratio = ratio;
                best_abs = std::abs(a);
                e = j;
            }
        }
        if (e < 0) return LpOutcome::kInfeasible;

        const double delta = (x_[p] - target) / at(r, e);
        for (int i = 0; i < m_; ++i) {
            const double a = at(i, e);
            if (a != 0.0) x_[basis_[i]] -= a * delta;
        }
        x_[e] += delta;
        x_[p] = target;
        degenerate = best_ratio < 1e-12 ? degenerate + 1 : 0;
        pivot(r, e);
    }
    throw Error(ErrorCode::kNumericalFailure, "dual simplex iteration limit (cycling)");
}

LpOutcome DenseSimplex::finish(LpOutcome outcome, double cutoff, int depth) {
    if (outcome != LpOutcome::kOptimal) return outcome;
    if (!dual_feasible()) {
        outcome = run_primal();
        if (outcome != LpOutcome::kOptimal) return outcome;
    }
    if (residual_violation() <= 1e-6 && max_primal_infeasibility(nullptr) <= 1e-6) {
        return LpOutcome::kOptimal;
    }
    if (depth >= 2) throw Error(ErrorCode::kNumericalFailure, "LP residual too large after refactorization");
    refactor();
    if (max_primal_infeasibility(nullptr) > opt_.feasibility_tolerance) {
        if (!dual_feasible()) throw Error(ErrorCode::kNumericalFailure, "basis lost feasibility");
        return finish(run_dual(cutoff), cutoff, depth + 1);
    }
    return finish(LpOutcome::kOptimal, cutoff, depth + 1);
}

LpOutcome DenseSimplex::solve() {
    bool dual_ok = true;
    for (int j = 0; j < n_; ++j) {
        const double c = original_->cost[j];
        const bool lo_fin = lo_[j] > -kInf;
        const bool hi_fin = hi_[j] < kInf;
        if (c > 0.0) {
            if (lo_fin) x_[j] = lo_[j];
            else { dual_ok = false; x_[j] = hi_fin ? hi_[j] : 0.0; }
        } else if (c < 0.0) {
            if (hi_fin) x_[j] = hi_[j];
            else { dual_ok = false; x_[j] = lo_fin ? lo_[j] : 0.0; }
        } else {
            x_[j] = lo_fin ? lo_[j] : (hi_fin ? hi_[j] : 0.0);
        }
    }
    // Slack values at the initial placement decide which rows need artificials.
    std::vector<int> art_rows;
    if (!dual_ok) {
        for (int i = 0; i < m_; ++i) {
            double ax = 0.0;
            for (const auto& e : original_->rows[i]) ax += e.value * x_[e.col];
            if (original_->rhs[i] - ax < -opt_.feasibility_tolerance) art_rows.push_back(i);
        }
    }
    art_row_ = art_rows;
    build_tableau(art_rows);
    built_ = true;

    if (dual_ok) {
        set_phase_costs(false);
        return finish(run_dual(kInf), kInf, 0);
    }
    if (!art_rows.empty()) {
        set_phase_costs(true);
        run_primal();
        double worst = 0.0;
        for (int j = n_ + m_; j < cols_; ++j) worst = std::max(worst, x_[j]);
        if (worst > opt_.feasibility_tolerance) return LpOutcome::kInfeasible;
        for (int j = n_ + m_; j < cols_; ++j) {
            hi_[j] = 0.0;
            x_[j] = 0.0;
        }
        recompute_basic_values();
    }
    set_phase_costs(false);
    return finish(run_primal(), kInf, 0);
}

void DenseSimplex::set_bounds(int var, double lower, double upper) {
    const double old = x_[var];
    const bool was_upper = hi_[var] < kInf && old == hi_[var] && old != lo_[var];
    lo_[var] = lower;
    hi_[var] = upper;
    if (is_basic(var)) return;
    double next;
    const double dj = d_.empty() ? 0.0 : d_[var];
    if (dj > opt_.optimality_tolerance) {
        next = lower > -kInf ? lower : (upper < kInf ? upper : 0.0);
    } else if (dj < -opt_.optimality_tolerance) {
        next = upper < kInf ? upper : (lower > -kInf ? lower : 0.0);
    } else if (was_upper && upper < kInf) {
        next = upper;
    } else {
        next = lower > -kInf ? lower : (upper < kInf ? upper : 0.0);
    }
    const double delta = next - old;
    if (delta != 0.0) {
        for (int i = 0; i < m_; ++i) {
            const double a = at(i, var);
            if (a != 0.0) x_[basis_[i]] -= a * delta;
        }
        x_[var] = next;
    }
}

LpOutcome DenseSimplex::reoptimize(double cutoff) {
    if (!built_) return solve();
    recompute_basic_values();
    if (!dual_feasible()) return solve();
    return finish(run_dual(cutoff), cutoff, 0);
}

}  // namespace hmip::detail
