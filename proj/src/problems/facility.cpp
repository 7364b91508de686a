#include <chrono>
#include <cmath>

#include "hmip/error.hpp"
#include "hmip/problems.hpp"

namespace hmip {

namespace {

void check_size(const std::vector<double>& v, std::size_t n, const char* what) {
    if (v.size() != n) throw Error(ErrorCode::kParse, std::string("facility field '") + what + "' has wrong length");
}

}  // namespace

std::vector<double> FacilityFamily::AffineMap::eval(std::span<const double> theta, int p) const {
    std::vector<double> out(base.size());
    for (std::size_t r = 0; r < base.size(); ++r) {
        double s = base[r];
        const double* g = &slope[r * static_cast<std::size_t>(p)];
        for (int t = 0; t < p; ++t) s += g[t] * theta[t];
        out[r] = std::max(0.0, s);
    }
    return out;
}

FacilityFamily::FacilityFamily(FamilyDims dims, std::uint64_t seed) : HierarchicalFamily(dims, seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::normal_distribution<double> small(0.0, 0.1);
    std::uniform_real_distribution<double> spread(0.5, 1.5);
    const int I = clients(), J = sites(), p = dims.params;

    a_.resize(static_cast<std::size_t>(kComplicatingRows) * J);
    for (double& v : a_) v = std::abs(normal(rng));
    b_.assign(kComplicatingRows, 0.0);
    for (int r = 0; r < kComplicatingRows; ++r) {
        for (int j = 0; j < J; ++j) b_[r] += a_[r * J + j];
        b_[r] *= 0.5;
    }
    capacity_.resize(J);
    for (double& s : capacity_) s = 2.0 * I / J * spread(rng);

    auto draw = [&](AffineMap& map, int outputs) {
        map.base.resize(outputs);
        for (double& v : map.base) v = std::abs(normal(rng));
        map.slope.resize(static_cast<std::size_t>(outputs) * p);
        for (double& v : map.slope) v = small(rng);
    };
    draw(service_, I * J);
    draw(opening_, J);
    draw(demand_, I);
}

FacilityFamily::FacilityFamily(const nlohmann::json& doc)
    : HierarchicalFamily({doc.at("blocks").get<int>(), doc.at("items").get<int>(), doc.at("params").get<int>()},
                         doc.at("seed").get<std::uint64_t>()) {
    a_ = doc.at("A").get<std::vector<double>>();
    b_ = doc.at("b").get<std::vector<double>>();
    capacity_ = doc.at("capacity").get<std::vector<double>>();
    gamma_ = doc.at("gamma").get<double>();
    auto read = [&](AffineMap& map, const char* key, std::size_t outputs) {
        map.base = doc.at(key).at("base").get<std::vector<double>>();
        map.slope = doc.at(key).at("slope").get<std::vector<double>>();
        check_size(map.base, outputs, key);
        check_size(map.slope, outputs * dims_.params, key);
    };
    const std::size_t I = clients(), J = sites();
    read(service_, "service", I * J);
    read(opening_, "opening", J);
    read(demand_, "demand", I);
    check_size(a_, kComplicatingRows * J, "A");
    check_size(b_, kComplicatingRows, "b");
    check_size(capacity_, J, "capacity");
    if (!(gamma_ > 0.0)) throw Error(ErrorCode::kParse, "facility penalty must be positive");
}

nlohmann::json FacilityFamily::to_json() const {
    auto map = [](const AffineMap& m) { return nlohmann::json{{"base", m.base}, {"slope", m.slope}}; };
    return {{"kind", name()},          {"seed", seed_},         {"blocks", dims_.blocks},
            {"items", dims_.items},    {"params", dims_.params}, {"A", a_},
            {"b", b_},                 {"capacity", capacity_}, {"gamma", gamma_},
            {"service", map(service_)}, {"opening", map(opening_)}, {"demand", map(demand_)}};
}

std::vector<double> FacilityFamily::sample_theta(Rng& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> theta(dims_.params);
    for (double& t : theta) t = normal(rng);
    return theta;
}

std::vector<double> FacilityFamily::upper_cost(std::span<const double> theta) const {
    check_theta(theta);
    return opening_.eval(theta, dims_.params);
}

std::vector<double> FacilityFamily::lower_cost(std::span<const double> theta) const {
    check_theta(theta);
    std::vector<double> d = service_.eval(theta, dims_.params);
    d.resize(lower_dim(), gamma_);
    return d;
}

std::vector<double> FacilityFamily::demand(std::span<const double> theta) const {
    check_theta(theta);
    return demand_.eval(theta, dims_.params);
}

MilpProblem FacilityFamily::upper_feasible_set(std::span<const double> theta) const {
    check_theta(theta);
    const int J = sites();
    MilpProblem p;
    for (int j = 0; j < J; ++j) p.add_var(0.0, 0.0, 1.0, true);
    for (int r = 0; r < kComplicatingRows; ++r) {
        std::vector<MatrixEntry> row;
        for (int j = 0; j < J; ++j) row.push_back({j, a_[r * J + j]});
        p.add_le(std::move(row), b_[r]);
    }
    return p;
}

MilpProblem FacilityFamily::build_master(std::span<const double> theta) const {
    const int I = clients(), J = sites();
    const std::vector<double> c = upper_cost(theta);
    const std::vector<double> d = lower_cost(theta);
    const std::vector<double> e = demand(theta);

    MilpProblem p = upper_feasible_set(theta);
    p.objective = c;
    for (int i = 0; i < I; ++i) {
        for (int j = 0; j < J; ++j) p.add_var(d[i * J + j], 0.0, 1.0, false);
    }
    for (int i = 0; i < I; ++i) p.add_var(gamma_, 0.0, 1.0, false);

    // Existing rows are the complicating constraints; demand and capacity follow.
    for (int i = 0; i < I; ++i) {
        std::vector<MatrixEntry> row;
        for (int j = 0; j < J; ++j) row.push_back({y_col(i, j), 1.0});
        row.push_back({eta_col(i), 1.0});
        p.add_eq(row, 1.0);
    }
    for (int j = 0; j < J; ++j) {
        std::vector<MatrixEntry> row;
        for (int i = 0; i < I; ++i) {
            if (e[i] != 0.0) row.push_back({y_col(i, j), e[i]});
        }
        row.push_back({j, -capacity_[j]});
        p.add_le(std::move(row), 0.0);
    }
    return p;
}

LowerSolution FacilityFamily::solve_lower(std::span<const double> theta, std::span<const double> x) const {
    check_upper_feasible(theta, x);
    const auto start = std::chrono::steady_clock::now();
    const int I = clients(), J = sites();
    const std::vector<double> d = lower_cost(theta);
    const std::vector<double> e = demand(theta);

    // Variables (y i-major, eta); y_ij for a closed site is fixed to zero unless client i has no demand.
    MilpProblem lp;
    for (int i = 0; i < I; ++i) {
        for (int j = 0; j < J; ++j) {
            const bool usable = x[j] > 0.5 || e[i] == 0.0;
            lp.add_var(d[i * J + j], 0.0, usable ? 1.0 : 0.0, false);
        }
    }
    for (int i = 0; i < I; ++i) lp.add_var(gamma_, 0.0, 1.0, false);
    for (int i = 0; i < I; ++i) {
        std::vector<MatrixEntry> row;
        for (int j = 0; j < J; ++j) row.push_back({i * J + j, 1.0});
        row.push_back({I * J + i, 1.0});
        lp.add_eq(row, 1.0);
    }
    for (int j = 0; j < J; ++j) {
        if (x[j] <= 0.5) continue;
        std::vector<MatrixEntry> row;
        for (int i = 0; i < I; ++i) {
            if (e[i] != 0.0) row.push_back({i * J + j, e[i]});
        }
        if (!row.empty()) lp.add_le(std::move(row), capacity_[j]);
    }
    const MilpSolution sol = solve_lp(lp);
    if (sol.status != SolveStatus::kOptimal) {
        throw Error(ErrorCode::kInternal, std::string("facility lower LP is ") + to_string(sol.status));
    }
    LowerSolution out;
    out.y = sol.values;
    out.cost = sol.objective_value;
    out.block_costs = {sol.objective_value};
    out.block_times = {std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
    return out;
}

}  // namespace hmip
