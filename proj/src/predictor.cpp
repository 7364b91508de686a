#include "hmip/predictor.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "hmip/error.hpp"
#include "hmip/parallel.hpp"

namespace hmip {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<double> true_costs_of_labels(const HierarchicalFamily& family, const std::vector<LabeledSample>& set,
                                         int jobs) {
    std::vector<double> out(set.size());
    parallel_for(static_cast<int>(set.size()), jobs,
                 [&](int i) { out[i] = family.true_cost(set[i].theta, set[i].x_star); });
    return out;
}

double regret_against(const Mlp& model, const HierarchicalFamily& family, const TrainingObjective& objective,
                      const std::vector<LabeledSample>& eval, const std::vector<double>& f_star, int jobs) {
    std::vector<double> regret(eval.size());
    parallel_for(static_cast<int>(eval.size()), jobs, [&](int i) {
        const Eigen::VectorXd out = model.forward(eval[i].theta);
        const auto x = objective.decide(eval[i].theta, out);
        regret[i] = family.true_cost(eval[i].theta, x) - f_star[i];
    });
    return std::accumulate(regret.begin(), regret.end(), 0.0) / static_cast<double>(regret.size());
}

}  // namespace

void TrainConfig::validate() const {
    loss.validate();
    if (!(learning_rate >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be >= 0");
    if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 1");
    if (epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 1");
    if (eval_every < 0) throw Error(ErrorCode::kInvalidArgument, "eval_every must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::kInvalidArgument, "momentum must lie in [0, 1)");
    for (int h : hidden) {
        if (h < 1) throw Error(ErrorCode::kInvalidArgument, "hidden widths must be positive");
    }
    if (jobs < 1) throw Error(ErrorCode::kInvalidArgument, "jobs must be >= 1");
}

SurrogateObjective::SurrogateObjective(const HierarchicalFamily& family, LossSpec spec)
    : family_(family), spec_(std::move(spec)) {
    spec_.validate();
}

double SurrogateObjective::loss_and_gradient(const LabeledSample& sample, const Eigen::VectorXd& output,
                                             std::vector<double>& gradient) const {
    const LossEval e = loss_value_and_subgradient(spec_, family_, sample.theta, sample.x_star,
                                                  std::span<const double>(output.data(), output.size()));
    gradient = e.subgradient;
    return e.value;
}

std::vector<double> SurrogateObjective::decide(std::span<const double> theta, const Eigen::VectorXd& output) const {
    return solve_policy(family_, theta, std::span<const double>(output.data(), output.size()), spec_);
}

std::vector<double> solve_policy(const HierarchicalFamily& family, std::span<const double> theta,
                                 std::span<const double> c_hat, const LossSpec& spec) {
    const MilpProblem policy = spec.kind == LossKind::kFenchelYoung
                                   ? family.build_upper_policy_fy(theta, c_hat, spec.omega_weight)
                                   : family.build_upper_policy(theta, c_hat);
    const MilpSolution sol = solve_milp(policy, SolveConfig{});
    if (!sol.has_values()) {
        throw Error(ErrorCode::kInternal, std::string("upper policy returned ") + to_string(sol.status));
    }
    std::vector<double> x = sol.values;
    for (double& v : x) v = std::round(v);
    return x;
}

double eval_regret(const Mlp& model, const HierarchicalFamily& family, const TrainingObjective& objective,
                   const std::vector<LabeledSample>& eval, int jobs) {
    if (eval.empty()) throw Error(ErrorCode::kInvalidArgument, "eval set is empty");
    return regret_against(model, family, objective, eval, true_costs_of_labels(family, eval, jobs), jobs);
}

Mlp make_network(const HierarchicalFamily& family, const TrainConfig& config, OutputActivation output) {
    std::vector<int> dims{family.param_dim()};
    dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
    dims.push_back(family.upper_dim());
    return Mlp(dims, output, config.seed);
}

TrainResult train(const HierarchicalFamily& family, const std::vector<LabeledSample>& train_set,
                  const std::vector<LabeledSample>& eval_set, const TrainConfig& config,
                  const TrainingObjective& objective) {
    config.validate();
    return train(make_network(family, config, objective.output_activation()), family, train_set, eval_set, config,
                 objective);
}

TrainResult train(Mlp model, const HierarchicalFamily& family, const std::vector<LabeledSample>& train_set,
                  const std::vector<LabeledSample>& eval_set, const TrainConfig& config,
                  const TrainingObjective& objective) {
    config.validate();
    if (train_set.empty()) throw Error(ErrorCode::kEmptyTrainSet, "training set is empty");
    if (eval_set.empty()) throw Error(ErrorCode::kInvalidArgument, "eval set is empty");
    if (model.input_dim() != family.param_dim() || model.output_dim() != family.upper_dim()) {
        throw Error(ErrorCode::kDimensionMismatch, "network shape does not match the family");
    }

    const auto start = Clock::now();
    const int n = static_cast<int>(train_set.size());
    const int steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const int total_steps = steps_per_epoch * config.epochs;
    const int eval_every = config.eval_every > 0 ? config.eval_every : steps_per_epoch;
    const std::vector<double> f_star = true_costs_of_labels(family, eval_set, config.jobs);

    TrainResult result;
    result.learning_rate = config.learning_rate;
    result.eval_regret = regret_against(model, family, objective, eval_set, f_star, config.jobs);
    result.model = model;
    result.curve.push_back({0, std::numeric_limits<double>::quiet_NaN(), result.eval_regret, result.eval_regret,
                            seconds_since(start)});

    Mlp::Gradients velocity = model.zero_gradients();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(config.seed ^ 0x5eedULL);
    double loss_sum = 0.0;
    int loss_count = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (int i = n - 1; i > 0; --i) {
            std::swap(order[i], order[static_cast<int>(shuffle_rng() % static_cast<std::uint64_t>(i + 1))]);
        }
        for (int b = 0; b < steps_per_epoch; ++b) {
            const int lo = b * config.batch_size;
            const int hi = std::min(n, lo + config.batch_size);
            const int m = hi - lo;
            std::vector<Mlp::Gradients> grads(m);
            std::vector<double> losses(m);
            bool aborted = false;
            try {
                parallel_for(m, config.jobs, [&](int k) {
                    const LabeledSample& s = train_set[order[lo + k]];
                    Mlp::Cache cache;
                    const Eigen::VectorXd out = model.forward(s.theta, cache);
                    std::vector<double> upstream;
                    losses[k] = objective.loss_and_gradient(s, out, upstream);
                    grads[k] = model.backward(cache, upstream);
                });
            } catch (const Error& e) {
                aborted = true;
                ++result.aborted_steps;
                spdlog::warn("step {} aborted: {}", result.steps + 1, e.what());
            }
            ++result.steps;
            if (!aborted) {
                Mlp::Gradients mean = model.zero_gradients();
                for (int k = 0; k < m; ++k) {
                    mean.add(grads[k], 1.0 / m);
                    loss_sum += losses[k];
                    ++loss_count;
                }
                if (config.optimizer == OptimizerKind::kMomentum) {
                    velocity.scale(config.momentum);
                    velocity.add(mean);
                    model.apply(velocity, config.learning_rate);
                } else {
                    model.apply(mean, config.learning_rate);
                }
            }
            if (result.steps % eval_every == 0 || result.steps == total_steps) {
                const double regret = regret_against(model, family, objective, eval_set, f_star, config.jobs);
                if (regret < result.eval_regret) {
                    result.eval_regret = regret;
                    result.model = model;
                }
                result.curve.push_back({result.steps,
                                        loss_count > 0 ? loss_sum / loss_count : std::numeric_limits<double>::quiet_NaN(),
                                        regret, result.eval_regret, seconds_since(start)});
                loss_sum = 0.0;
                loss_count = 0;
            }
        }
    }
    if (result.aborted_steps > 0.01 * total_steps) {
        throw Error(ErrorCode::kTooManyAbortedSteps, std::to_string(result.aborted_steps) + " of " +
                                                         std::to_string(total_steps) + " steps aborted");
    }
    return result;
}

GridSearchResult grid_search(const HierarchicalFamily& family, const std::vector<LabeledSample>& train_set,
                             const std::vector<LabeledSample>& eval_set, const TrainConfig& config,
                             const TrainingObjective& objective) {
    if (config.lr_grid.empty()) throw Error(ErrorCode::kInvalidArgument, "learning-rate grid is empty");
    GridSearchResult out;
    bool have = false;
    for (double lr : config.lr_grid) {
        TrainConfig run = config;
        run.learning_rate = lr;
        try {
            TrainResult r = train(family, train_set, eval_set, run, objective);
            spdlog::info("lr {}: eval regret {}", lr, r.eval_regret);
            out.learning_rates.push_back(lr);
            out.eval_regrets.push_back(r.eval_regret);
            const bool better = !have || r.eval_regret < out.best.eval_regret ||
                                (r.eval_regret == out.best.eval_regret && lr < out.best_config.learning_rate);
            if (better) {
                out.best = std::move(r);
                out.best_config = run;
                have = true;
            }
        } catch (const Error& e) {
            if (e.code() == ErrorCode::kEmptyTrainSet || e.code() == ErrorCode::kInvalidArgument ||
                e.code() == ErrorCode::kDimensionMismatch) {
                throw;
            }
            spdlog::warn("lr {} failed: {}", lr, e.what());
        }
    }
    if (!have) throw Error(ErrorCode::kAllRunsFailed, "every learning rate in the grid failed");
    return out;
}

}  // namespace hmip
