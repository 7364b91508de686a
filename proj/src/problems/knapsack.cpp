#include <chrono>
#include <cmath>

#include "hmip/error.hpp"
#include "hmip/problems.hpp"

namespace hmip {

namespace {

double abs_normal(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return std::abs(n(rng));
}

void check_size(const std::vector<double>& v, std::size_t n, const char* what) {
    if (v.size() != n) throw Error(ErrorCode::kParse, std::string("knapsack field '") + what + "' has wrong length");
}

}  // namespace

KnapsackFamily::KnapsackFamily(FamilyDims dims, std::uint64_t seed) : HierarchicalFamily(dims, seed) {
    Rng rng(seed);
    const int J = dims.blocks, k = dims.items;
    a0_.resize(J);
    for (double& v : a0_) v = abs_normal(rng);
    b0_ = abs_normal(rng);
    a_.resize(static_cast<std::size_t>(J) * k);
    b_.resize(J);
    for (int j = 0; j < J; ++j) {
        for (int i = 0; i < k; ++i) a_[j * k + i] = abs_normal(rng);
        b_[j] = abs_normal(rng);
    }
    std::normal_distribution<double> n(0.0, 1.0);
    cost_map_.resize(static_cast<std::size_t>(J) * k * dims.params);
    for (double& v : cost_map_) v = n(rng);
}

KnapsackFamily::KnapsackFamily(const nlohmann::json& doc)
    : HierarchicalFamily({doc.at("blocks").get<int>(), doc.at("items").get<int>(), doc.at("params").get<int>()},
                         doc.at("seed").get<std::uint64_t>()) {
    a0_ = doc.at("a0").get<std::vector<double>>();
    b0_ = doc.at("b0").get<double>();
    a_ = doc.at("a").get<std::vector<double>>();
    b_ = doc.at("b").get<std::vector<double>>();
    cost_map_ = doc.at("cost_map").get<std::vector<double>>();
    const std::size_t J = dims_.blocks, k = dims_.items;
    check_size(a0_, J, "a0");
    check_size(a_, J * k, "a");
    check_size(b_, J, "b");
    check_size(cost_map_, J * k * dims_.params, "cost_map");
}

nlohmann::json KnapsackFamily::to_json() const {
    return {{"kind", name()}, {"seed", seed_},     {"blocks", dims_.blocks}, {"items", dims_.items},
            {"params", dims_.params}, {"a0", a0_}, {"b0", b0_},          {"a", a_},
            {"b", b_},                {"cost_map", cost_map_}};
}

std::vector<double> KnapsackFamily::sample_theta(Rng& rng) const {
    std::vector<double> theta(dims_.params);
    for (double& t : theta) t = abs_normal(rng);
    return theta;
}

std::vector<double> KnapsackFamily::upper_cost(std::span<const double> theta) const {
    check_theta(theta);
    return std::vector<double>(upper_dim(), 0.0);
}

std::vector<double> KnapsackFamily::lower_cost(std::span<const double> theta) const {
    check_theta(theta);
    const int n2 = lower_dim(), p = dims_.params;
    std::vector<double> d(n2);
    for (int r = 0; r < n2; ++r) {
        double s = 0.0;
        const double* row = &cost_map_[static_cast<std::size_t>(r) * p];
        for (int t = 0; t < p; ++t) s += row[t] * theta[t];
        d[r] = -std::abs(s);
    }
    return d;
}

MilpProblem KnapsackFamily::upper_feasible_set(std::span<const double> theta) const {
    check_theta(theta);
    MilpProblem p;
    std::vector<MatrixEntry> row;
    for (int j = 0; j < upper_dim(); ++j) {
        p.add_var(0.0, 0.0, 1.0, true);
        row.push_back({j, a0_[j]});
    }
    p.add_le(std::move(row), b0_);
    return p;
}

MilpProblem KnapsackFamily::build_master(std::span<const double> theta) const {
    const std::vector<double> d = lower_cost(theta);
    const int J = dims_.blocks, k = dims_.items;
    MilpProblem p;
    for (int j = 0; j < J; ++j) p.add_var(0.0, 0.0, 1.0, true);
    for (int r = 0; r < J * k; ++r) p.add_var(d[r], 0.0, 1.0, true);

    std::vector<MatrixEntry> upper;
    for (int j = 0; j < J; ++j) upper.push_back({j, a0_[j]});
    p.add_le(std::move(upper), b0_);
    for (int j = 0; j < J; ++j) {
        std::vector<MatrixEntry> row;
        for (int i = 0; i < k; ++i) row.push_back({J + j * k + i, a_[j * k + i]});
        row.push_back({j, -b_[j]});
        p.add_le(std::move(row), 0.0);
    }
    for (int j = 0; j < J; ++j) {
        for (int i = 0; i < k; ++i) p.add_le({{J + j * k + i, 1.0}, {j, -1.0}}, 0.0);
    }
    return p;
}

LowerSolution KnapsackFamily::solve_lower(std::span<const double> theta, std::span<const double> x) const {
    check_upper_feasible(theta, x);
    const std::vector<double> d = lower_cost(theta);
    const int J = dims_.blocks, k = dims_.items;
    const SolveConfig exact = SolveConfig::exact();
    LowerSolution out;
    out.y.assign(lower_dim(), 0.0);
    for (int j = 0; j < J; ++j) {
        const auto start = std::chrono::steady_clock::now();
        double cost = 0.0;
        if (x[j] > 0.5) {
            MilpProblem block;
            std::vector<MatrixEntry> row;
            for (int i = 0; i < k; ++i) {
                block.add_var(d[j * k + i], 0.0, 1.0, true);
                row.push_back({i, a_[j * k + i]});
            }
            block.add_le(std::move(row), b_[j]);
            const MilpSolution sol = solve_milp(block, exact);
            if (sol.status != SolveStatus::kOptimal) {
                throw Error(ErrorCode::kInternal, "lower knapsack block not solved to optimality");
            }
            for (int i = 0; i < k; ++i) out.y[j * k + i] = sol.values[i];
            cost = sol.objective_value;
        }
        out.cost += cost;
        out.block_costs.push_back(cost);
        out.block_times.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    return out;
}

}  // namespace hmip
