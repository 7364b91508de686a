#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <queue>

#include "hmip/error.hpp"
#include "hmip/milp.hpp"
#include "milp/simplex.hpp"

namespace hmip {

namespace {

using detail::DenseSimplex;
using detail::LpOutcome;
using Clock = std::chrono::steady_clock;

detail::SimplexOptions simplex_options(const SolveConfig& config) {
    detail::SimplexOptions opt;
    opt.feasibility_tolerance = config.feasibility_tolerance;
    return opt;
}

double sense_sign(const MilpProblem& problem) {
    return problem.sense == ObjectiveSense::kMaximize ? -1.0 : 1.0;
}

struct BoundChange {
    int var;
    double lower;
    double upper;
};

struct Node {
    double key;  // LP bound of the parent
    std::int64_t seq;
    std::vector<BoundChange> path;
    std::shared_ptr<DenseSimplex> warm;  // parent's final tableau, may be null
};

struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const {
        if (a.key != b.key) return a.key > b.key;
        return a.seq > b.seq;
    }
};

class BranchAndBound {
public:
    BranchAndBound(const MilpProblem& original, const SolveConfig& config)
        : config_(config), sign_(sense_sign(original)), problem_(original.normalized()),
          start_(Clock::now()) {}

    MilpSolution run();

private:
    double elapsed() const {
        return std::chrono::duration<double>(Clock::now() - start_).count();
    }
    double cutoff() const {
        if (!has_incumbent()) return kInf;
        return incumbent_obj_ - config_.gap_tolerance * std::max(1.0, std::abs(incumbent_obj_));
    }
    bool has_incumbent() const { return !incumbent_.empty(); }
    bool stop_requested() const {
        return static_cast<std::int64_t>(solution_.incumbents.size()) >= config_.stop_after_incumbents;
    }

    bool tighten_integer_bounds();
    void offer(std::vector<double> values);
    void try_assignment(std::vector<double> point);
    void root_heuristics(const std::vector<double>& root_values);
    int most_fractional(const std::vector<double>& values) const;
    std::shared_ptr<DenseSimplex> share(DenseSimplex&& s);
    LpOutcome solve_node(Node& node, std::unique_ptr<DenseSimplex>& lp);
    double open_bound() const;
    MilpSolution finish(bool limit_hit);

    SolveConfig config_;
    double sign_;
    MilpProblem problem_;
    Clock::time_point start_;
    std::unique_ptr<DenseSimplex> root_;
    std::priority_queue<Node, std::vector<Node>, NodeOrder> open_;
    std::int64_t next_seq_ = 0;
    std::shared_ptr<std::size_t> warm_counter_ = std::make_shared<std::size_t>(0);
    double pruned_bound_ = kInf;
    double last_trace_ = -kInf;
    std::vector<double> incumbent_;
    double incumbent_obj_ = kInf;
    MilpSolution solution_;
};

bool BranchAndBound::tighten_integer_bounds() {
    const double tol = config_.integrality_tolerance;
    for (int j = 0; j < problem_.num_vars(); ++j) {
        if (!problem_.integrality[j]) continue;
        double& lo = problem_.var_lower[j];
        double& hi = problem_.var_upper[j];
        if (!std::isfinite(lo) || !std::isfinite(hi)) {
            throw Error(ErrorCode::kInvalidArgument,
                        "integer variable " + std::to_string(j) + " needs finite bounds");
        }
        lo = std::ceil(lo - tol);
        hi = std::floor(hi + tol);
        if (lo > hi) return false;
    }
    return true;
}

void BranchAndBound::offer(std::vector<double> values) {
    for (int j = 0; j < problem_.num_vars(); ++j) {
        if (problem_.integrality[j]) values[j] = std::round(values[j]);
    }
    if (problem_.max_violation(values) > config_.feasibility_tolerance) return;
    const double obj = problem_.evaluate_objective(values);
    if (has_incumbent() && !(obj < incumbent_obj_ - 1e-12 * std::max(1.0, std::abs(incumbent_obj_)))) return;
    incumbent_ = std::move(values);
    incumbent_obj_ = obj;
    solution_.incumbents.push_back({elapsed(), solution_.node_count, sign_ * obj});
}

// Integer part fixed; continuous part completed by an LP when present.
void BranchAndBound::try_assignment(std::vector<double> point) {
    bool has_continuous = false;
    for (int j = 0; j < problem_.num_vars(); ++j) {
        if (!problem_.integrality[j]) has_continuous = true;
    }
    if (!has_continuous) {
        offer(std::move(point));
        return;
    }
    MilpProblem fixed = problem_;
    for (int j = 0; j < problem_.num_vars(); ++j) {
        if (problem_.integrality[j]) fixed.var_lower[j] = fixed.var_upper[j] = point[j];
    }
    DenseSimplex lp(fixed, simplex_options(config_));
    if (lp.solve() != LpOutcome::kOptimal) return;
    std::vector<double> values = lp.structural_values();
    for (int j = 0; j < problem_.num_vars(); ++j) {
        if (problem_.integrality[j]) values[j] = point[j];
    }
    offer(std::move(values));
}

void BranchAndBound::root_heuristics(const std::vector<double>& root_values) {
    const int n = problem_.num_vars();
    std::vector<double> low(root_values), high(root_values), rounded(root_values);
    for (int j = 0; j < n; ++j) {
        if (!problem_.integrality[j]) continue;
        low[j] = problem_.var_lower[j];
        high[j] = problem_.var_upper[j];
        rounded[j] = std::clamp(std::round(root_values[j]), problem_.var_lower[j], problem_.var_upper[j]);
    }
    for (auto* p : {&low, &high, &rounded}) {
        if (stop_requested()) return;
        try_assignment(*p);
    }
}

int BranchAndBound::most_fractional(const std::vector<double>& values) const {
    int best = -1;
    double best_frac = config_.integrality_tolerance;
    for (int j = 0; j < problem_.num_vars(); ++j) {
        if (!problem_.integrality[j]) continue;
        const double frac = std::abs(values[j] - std::round(values[j]));
        if (frac > best_frac) {
            best_frac = frac;
            best = j;
        }
    }
    return best;
}

std::shared_ptr<DenseSimplex> BranchAndBound::share(DenseSimplex&& s) {
    const std::size_t bytes = s.memory_bytes();
    if (*warm_counter_ + bytes > config_.warm_start_budget_bytes) return nullptr;
    *warm_counter_ += bytes;
    auto counter = warm_counter_;
    return std::shared_ptr<DenseSimplex>(new DenseSimplex(std::move(s)),
                                               [counter, bytes](const DenseSimplex* p) {
                                                   *counter -= bytes;
                                                   delete p;
                                               });
}

LpOutcome BranchAndBound::solve_node(Node& node, std::unique_ptr<DenseSimplex>& lp) {
    try {
        if (node.warm) {
            // The last child to leave the queue takes the parent's tableau without a copy.
            if (node.warm.use_count() == 1) {
                lp = std::make_unique<DenseSimplex>(std::move(*node.warm));
            } else {
                lp = std::make_unique<DenseSimplex>(*node.warm);
            }
            if (!node.path.empty()) lp->set_bounds(node.path.back().var, node.path.back().lower,
                                                   node.path.back().upper);
        } else {
            lp = std::make_unique<DenseSimplex>(*root_);
            for (const auto& c : node.path) lp->set_bounds(c.var, c.lower, c.upper);
        }
        return lp->reoptimize(cutoff());
    } catch (const Error& e) {
        if (e.code() != ErrorCode::kNumericalFailure) throw;
    }
    // Numerical trouble on the warm path: rebuild this node from the slack basis.
    MilpProblem fresh = problem_;
    for (const auto& c : node.path) {
        fresh.var_lower[c.var] = c.lower;
        fresh.var_upper[c.var] = c.upper;
    }
    lp = std::make_unique<DenseSimplex>(fresh, simplex_options(config_));
    const LpOutcome out = lp->solve();
    if (out == LpOutcome::kOptimal && lp->objective() > cutoff()) return LpOutcome::kCutoff;
    return out;
}

double BranchAndBound::open_bound() const {
    double b = pruned_bound_;
    if (!open_.empty()) b = std::min(b, open_.top().key);
    return b;
}

MilpSolution BranchAndBound::run() {
    problem_.validate();
    config_.validate();
    solution_.status = SolveStatus::kInfeasible;
    if (!tighten_integer_bounds()) return finish(false);

    root_ = std::make_unique<DenseSimplex>(problem_, simplex_options(config_));
    const LpOutcome root_out = root_->solve();
    if (root_out == LpOutcome::kInfeasible) return finish(false);
    if (root_out == LpOutcome::kUnbounded) {
        solution_.status = SolveStatus::kUnbounded;
        solution_.wall_time = elapsed();
        return solution_;
    }
    const double root_bound = root_->objective();
    if (config_.root_heuristics) root_heuristics(root_->structural_values());
    if (stop_requested()) {
        pruned_bound_ = root_bound;
        return finish(true);
    }

    open_.push(Node{root_bound, next_seq_++, {}, share(DenseSimplex(*root_))});
    while (!open_.empty()) {
        if (solution_.node_count >= config_.node_limit || elapsed() >= config_.time_limit) {
            return finish(true);
        }
        if (open_.top().key >= cutoff()) {
            // Everything left is dominated by the incumbent.
            pruned_bound_ = std::min(pruned_bound_, open_.top().key);
            while (!open_.empty()) open_.pop();
            break;
        }
        Node node = std::move(const_cast<Node&>(open_.top()));
        open_.pop();
        ++solution_.node_count;

        std::unique_ptr<DenseSimplex> lp;
        const LpOutcome out = solve_node(node, lp);
        node.warm.reset();
        if (out == LpOutcome::kCutoff) {
            pruned_bound_ = std::min(pruned_bound_, std::max(node.key, lp->objective()));
        } else if (out == LpOutcome::kOptimal) {
            const double obj = lp->objective();
            std::vector<double> values = lp->structural_values();
            const int branch = most_fractional(values);
            if (obj >= cutoff()) {
                pruned_bound_ = std::min(pruned_bound_, obj);
            } else if (branch < 0) {
                offer(std::move(values));
                pruned_bound_ = std::min(pruned_bound_, obj);
            } else {
                const double v = values[branch];
                auto warm = share(std::move(*lp));
                Node down{obj, next_seq_++, node.path, warm};
                down.path.push_back({branch, problem_.var_lower[branch], std::floor(v)});
                for (const auto& c : node.path) {
                    if (c.var == branch) down.path.back().lower = c.lower;
                }
                Node up{obj, next_seq_++, node.path, warm};
                up.path.push_back({branch, std::ceil(v), problem_.var_upper[branch]});
                for (const auto& c : node.path) {
                    if (c.var == branch) up.path.back().upper = c.upper;
                }
                open_.push(std::move(down));
                open_.push(std::move(up));
            }
        }
        // Unbounded at a node cannot happen once the root is bounded; Infeasible just drops the node.

        const double bound = std::min(open_bound(), has_incumbent() ? incumbent_obj_ : kInf);
        last_trace_ = std::max(last_trace_, bound);
        solution_.bound_trace.push_back(sign_ * last_trace_);
        if (stop_requested()) return finish(true);
    }
    return finish(false);
}

MilpSolution BranchAndBound::finish(bool limit_hit) {
    solution_.wall_time = elapsed();
    if (has_incumbent()) {
        solution_.status = limit_hit ? SolveStatus::kFeasible : SolveStatus::kOptimal;
        solution_.values = incumbent_;
        solution_.objective_value = sign_ * incumbent_obj_;
        solution_.dual_bound = sign_ * std::min(open_bound(), incumbent_obj_);
    } else {
        solution_.status = limit_hit ? SolveStatus::kLimitReached : SolveStatus::kInfeasible;
        solution_.objective_value = sign_ * kInf;
        const double bound = open_bound();
        solution_.dual_bound = limit_hit && std::isfinite(bound) ? sign_ * bound : sign_ * -kInf;
        if (!limit_hit) solution_.dual_bound = sign_ * kInf;
    }
    return solution_;
}

}  // namespace

MilpSolution solve_lp(const MilpProblem& problem, const SolveConfig& config) {
    problem.validate();
    config.validate();
    const auto start = Clock::now();
    const double sign = sense_sign(problem);
    DenseSimplex lp(problem.normalized(), simplex_options(config));
    MilpSolution sol;
    switch (lp.solve()) {
        case LpOutcome::kOptimal:
            sol.status = SolveStatus::kOptimal;
            sol.values = lp.structural_values();
            sol.objective_value = sign * lp.objective();
            sol.dual_bound = sol.objective_value;
            break;
        case LpOutcome::kInfeasible:
            sol.status = SolveStatus::kInfeasible;
            break;
        case LpOutcome::kUnbounded:
            sol.status = SolveStatus::kUnbounded;
            sol.objective_value = -sign * kInf;
            break;
        case LpOutcome::kCutoff:
            throw Error(ErrorCode::kInternal, "cutoff without a cutoff value");
    }
    sol.node_count = 1;
    sol.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
    return sol;
}

MilpSolution solve_milp(const MilpProblem& problem, const SolveConfig& config) {
    return BranchAndBound(problem, config).run();
}

}  // namespace hmip
