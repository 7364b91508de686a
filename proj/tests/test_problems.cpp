#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hmip/error.hpp"
#include "hmip/problems.hpp"

using namespace hmip;

namespace {

// Hand-built knapsack family: J blocks of k items, p = 1, d = -|cost_map * theta|.
std::unique_ptr<HierarchicalFamily> hand_knapsack(std::vector<double> a0, double b0, std::vector<double> a,
                                                  std::vector<double> b, std::vector<double> cost_map) {
    const int J = static_cast<int>(a0.size());
    const int k = static_cast<int>(a.size()) / J;
    nlohmann::json doc = {{"kind", "knapsack"}, {"seed", 0}, {"blocks", J}, {"items", k}, {"params", 1},
                          {"a0", a0},          {"b0", b0},  {"a", a},       {"b", b},     {"cost_map", cost_map}};
    return HierarchicalFamily::from_json(doc);
}

std::vector<std::vector<double>> all_binary(int n) {
    std::vector<std::vector<double>> out;
    for (int mask = 0; mask < (1 << n); ++mask) {
        std::vector<double> x(n);
        for (int j = 0; j < n; ++j) x[j] = (mask >> j) & 1;
        out.push_back(x);
    }
    return out;
}

double solve_value(const MilpProblem& p) {
    const auto sol = solve_milp(p, SolveConfig::exact());
    REQUIRE(sol.status == SolveStatus::kOptimal);
    return sol.objective_value;
}

// Greedy fractional knapsack: max v^T y, w^T y <= cap, 0 <= y <= 1.
double fractional_knapsack(const std::vector<double>& v, const std::vector<double>& w, double cap) {
    std::vector<int> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) { return v[i] * w[j] > v[j] * w[i]; });
    double total = 0.0;
    for (int i : order) {
        if (v[i] <= 0.0) continue;
        const double take = std::min(1.0, cap / w[i]);
        total += take * v[i];
        cap -= take * w[i];
        if (cap <= 0.0) break;
    }
    return total;
}

}  // namespace

TEST_CASE("knapsack master counts for J=2, k=2") {
    auto fam = generate_family(FamilyKind::kKnapsack, {2, 2, 5}, 3);
    Rng rng(1);
    const auto theta = fam->sample_theta(rng);
    const MilpProblem m = fam->build_master(theta);
    CHECK(m.num_vars() == 6);
    CHECK(std::all_of(m.integrality.begin(), m.integrality.end(), [](auto v) { return v == 1; }));
    CHECK(m.num_rows() == 1 + 2 + 4);
}

TEST_CASE("facility master counts for two clients and two sites") {
    auto fam = generate_family(FamilyKind::kFacility, {2, 2, 5}, 3);
    Rng rng(1);
    const auto theta = fam->sample_theta(rng);
    const MilpProblem m = fam->build_master(theta);
    CHECK(m.num_vars() == 2 + 4 + 2);
    int binaries = 0;
    for (auto v : m.integrality) binaries += v;
    CHECK(binaries == 2);
    CHECK(m.num_rows() == FacilityFamily::kComplicatingRows + 2 * 2 + 2);
}

TEST_CASE("desk knapsack has 220 binaries") {
    auto fam = generate_family(FamilyKind::kKnapsack, FamilyDims::desk(FamilyKind::kKnapsack), 1);
    Rng rng(2);
    CHECK(fam->build_master(fam->sample_theta(rng)).num_vars() == 220);
}

TEST_CASE("sample_theta signs and determinism") {
    auto knap = generate_family(FamilyKind::kKnapsack, {3, 2, 50}, 42);
    auto fac = generate_family(FamilyKind::kFacility, {3, 3, 50}, 42);
    Rng r1(42), r2(42);
    const auto t1 = knap->sample_theta(r1);
    const auto t2 = knap->sample_theta(r2);
    CHECK(t1 == t2);
    CHECK(std::all_of(t1.begin(), t1.end(), [](double v) { return v >= 0.0; }));
    Rng r3(42);
    const auto tf = fac->sample_theta(r3);
    CHECK(std::any_of(tf.begin(), tf.end(), [](double v) { return v < 0.0; }));
}

TEST_CASE("families with equal seed and dims are identical") {
    for (auto kind : {FamilyKind::kKnapsack, FamilyKind::kFacility}) {
        auto a = generate_family(kind, {4, 3, 10}, 9);
        auto b = generate_family(kind, {4, 3, 10}, 9);
        CHECK(a->to_json() == b->to_json());
        auto c = generate_family(kind, {4, 3, 10}, 10);
        CHECK(a->to_json() != c->to_json());
    }
}

TEST_CASE("family json round trip") {
    for (auto kind : {FamilyKind::kKnapsack, FamilyKind::kFacility}) {
        auto fam = generate_family(kind, {3, 4, 7}, 5);
        auto back = HierarchicalFamily::from_json(nlohmann::json::parse(fam->to_json().dump()));
        CHECK(back->to_json() == fam->to_json());
        Rng rng(3);
        const auto theta = fam->sample_theta(rng);
        CHECK(back->lower_cost(theta) == fam->lower_cost(theta));
        CHECK(back->upper_cost(theta) == fam->upper_cost(theta));
    }
    nlohmann::json bad = {{"kind", "knapsack"}, {"seed", 1}};
    CHECK_THROWS_AS(HierarchicalFamily::from_json(bad), Error);
}

TEST_CASE("generate_family rejects non-positive dims") {
    CHECK_THROWS_AS(generate_family(FamilyKind::kKnapsack, {0, 10, 100}, 1), Error);
    CHECK_THROWS_AS(generate_family(FamilyKind::kFacility, {3, -1, 100}, 1), Error);
}

TEST_CASE("knapsack costs are nonpositive and facility data satisfies its invariants") {
    auto knap = generate_family(FamilyKind::kKnapsack, {5, 4, 20}, 2);
    auto fac_base = generate_family(FamilyKind::kFacility, {6, 5, 20}, 2);
    const auto& fac = dynamic_cast<const FacilityFamily&>(*fac_base);
    Rng rng(8);
    for (int t = 0; t < 20; ++t) {
        const auto theta = knap->sample_theta(rng);
        const auto d = knap->lower_cost(theta);
        CHECK(std::all_of(d.begin(), d.end(), [](double v) { return v <= 0.0; }));
        const auto tf = fac.sample_theta(rng);
        for (double v : fac.upper_cost(tf)) CHECK(v >= 0.0);
        for (double v : fac.demand(tf)) CHECK(v >= 0.0);
    }
    CHECK(fac.penalty() > 0.0);
    for (double s : fac.capacities()) CHECK(s > 0.0);
    const auto& A = fac.complicating_matrix();
    for (int r = 0; r < FacilityFamily::kComplicatingRows; ++r) {
        double sum = 0.0;
        for (int j = 0; j < fac.sites(); ++j) sum += A[r * fac.sites() + j];
        CHECK(fac.complicating_rhs()[r] == doctest::Approx(sum / 2.0));
    }
}

TEST_CASE("lower solves on trivial upper decisions") {
    auto knap = generate_family(FamilyKind::kKnapsack, {3, 4, 10}, 4);
    Rng rng(5);
    const auto theta = knap->sample_theta(rng);
    const auto low = knap->solve_lower(theta, std::vector<double>(3, 0.0));
    CHECK(low.cost == 0.0);
    CHECK(std::all_of(low.y.begin(), low.y.end(), [](double v) { return v == 0.0; }));
    CHECK(low.block_costs.size() == 3);
    CHECK(low.block_times.size() == 3);

    auto fac = generate_family(FamilyKind::kFacility, {4, 5, 10}, 4);
    const auto tf = fac->sample_theta(rng);
    const auto lf = fac->solve_lower(tf, std::vector<double>(4, 0.0));
    const auto& ff = dynamic_cast<const FacilityFamily&>(*fac);
    const auto e = ff.demand(tf);
    const int positive = static_cast<int>(std::count_if(e.begin(), e.end(), [](double v) { return v > 0.0; }));
    // Clients with zero demand may be assigned anywhere at no penalty.
    CHECK(lf.cost <= ff.penalty() * ff.clients() + 1e-9);
    CHECK(lf.cost >= ff.penalty() * positive - 1e-6);
    for (int i = 0; i < ff.clients(); ++i) {
        if (e[i] > 0.0) CHECK(lf.y[ff.eta_col(i) - ff.sites()] == doctest::Approx(1.0));
    }
}

TEST_CASE("solve_lower rejects infeasible upper points") {
    auto knap = hand_knapsack({1.0, 1.0}, 1.0, {1, 1, 1, 1}, {1, 1}, {1, 1, 1, 1});
    const std::vector<double> theta{1.0};
    CHECK_THROWS_AS(knap->solve_lower(theta, std::vector<double>{1.0, 1.0}), Error);
    CHECK_THROWS_AS(knap->solve_lower(theta, std::vector<double>{1.0}), Error);
    CHECK_THROWS_AS(knap->lower_cost(std::vector<double>{1.0, 2.0}), Error);
}

TEST_CASE("knapsack hand instance true cost matches brute force") {
    // J=2, k=2: upper a0 = (1, 1), b0 = 1 so at most one block opens.
    auto fam = hand_knapsack({1.0, 1.0}, 1.0, {2.0, 3.0, 1.0, 1.0}, {3.0, 1.0}, {1.0, 2.0, 4.0, 0.5});
    const std::vector<double> theta{1.0};
    const auto d = fam->lower_cost(theta);
    CHECK(d == std::vector<double>{-1.0, -2.0, -4.0, -0.5});
    const MilpProblem master = fam->build_master(theta);
    for (const auto& x : all_binary(2)) {
        if (x[0] + x[1] > 1.0) continue;
        double best = kInf;
        for (const auto& y : all_binary(4)) {
            std::vector<double> full = x;
            full.insert(full.end(), y.begin(), y.end());
            if (!master.is_feasible(full, 1e-9, 1e-9)) continue;
            best = std::min(best, master.evaluate_objective(full));
        }
        CHECK(fam->true_cost(theta, x) == doctest::Approx(best).epsilon(1e-12));
    }
    // Block 0 fits only one item (best value 2), block 1 only one item (best value 4).
    CHECK(fam->true_cost(theta, std::vector<double>{1.0, 0.0}) == doctest::Approx(-2.0));
    CHECK(fam->true_cost(theta, std::vector<double>{0.0, 1.0}) == doctest::Approx(-4.0));
    CHECK(solve_value(master) == doctest::Approx(-4.0));
}

TEST_CASE("knapsack upper policy with slack capacity takes everything") {
    auto fam = hand_knapsack({1.0, 2.0, 0.5}, 4.0, {1, 1, 1}, {1, 1, 1}, {1, 1, 1});
    const std::vector<double> theta{1.0};
    const std::vector<double> c_hat{1.0, 2.0, 0.5};
    const auto sol = solve_milp(fam->build_upper_policy(theta, c_hat), SolveConfig::exact());
    REQUIRE(sol.status == SolveStatus::kOptimal);
    CHECK(sol.values == std::vector<double>{1.0, 1.0, 1.0});
    CHECK_THROWS_AS(fam->build_upper_policy(theta, std::vector<double>{1.0}), Error);
}

TEST_CASE("zero policy cost gives a deterministic feasible point") {
    auto fam = generate_family(FamilyKind::kFacility, {5, 4, 10}, 6);
    Rng rng(1);
    const auto theta = fam->sample_theta(rng);
    const std::vector<double> zero(5, 0.0);
    const auto a = solve_milp(fam->build_upper_policy(theta, zero), SolveConfig::exact());
    const auto b = solve_milp(fam->build_upper_policy(theta, zero), SolveConfig::exact());
    REQUIRE(a.status == SolveStatus::kOptimal);
    CHECK(a.values == b.values);
    CHECK(fam->upper_feasible_set(theta).is_feasible(a.values, 1e-9, 1e-9));
}

TEST_CASE("facility policy with the true upper cost matches enumeration") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto fam = generate_family(FamilyKind::kFacility, {8, 4, 10}, seed);
        Rng rng(seed);
        const auto theta = fam->sample_theta(rng);
        const auto c = fam->upper_cost(theta);
        const MilpProblem upper = fam->upper_feasible_set(theta);
        double best = kInf;
        for (const auto& x : all_binary(8)) {
            if (!upper.is_feasible(x, 1e-9, 1e-9)) continue;
            double v = 0.0;
            for (int j = 0; j < 8; ++j) v += c[j] * x[j];
            best = std::min(best, v);
        }
        CHECK(solve_value(fam->build_upper_policy(theta, c)) == doctest::Approx(best).epsilon(1e-9));
    }
}

TEST_CASE("FY policy") {
    SUBCASE("penalty pushes a single binary to zero") {
        // Knapsack policies maximize, so c_hat = 0.5 is the minimize-form -0.5.
        auto fam = hand_knapsack({1.0}, 2.0, {1.0}, {1.0}, {1.0});
        const std::vector<double> theta{1.0};
        const auto sol = solve_milp(fam->build_upper_policy_fy(theta, std::vector<double>{0.5}, 1.0),
                                    SolveConfig::exact());
        REQUIRE(sol.status == SolveStatus::kOptimal);
        CHECK(sol.values[0] == 0.0);
        const auto off = solve_milp(fam->build_upper_policy_fy(theta, std::vector<double>{0.5}, 0.0),
                                    SolveConfig::exact());
        CHECK(off.values[0] == 1.0);
    }
    SUBCASE("zero weight matches the plain policy and the quadratic form by enumeration") {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            auto kf = generate_family(FamilyKind::kKnapsack, {8, 2, 5}, seed);
            Rng rng(seed);
            const auto t = kf->sample_theta(rng);
            std::normal_distribution<double> n(0.0, 1.0);
            std::vector<double> c(8);
            for (double& v : c) v = n(rng);
            const double plain = solve_value(kf->build_upper_policy(t, c));
            CHECK(solve_value(kf->build_upper_policy_fy(t, c, 0.0)) == doctest::Approx(plain).epsilon(1e-12));
            // Maximize c^T x - w ||x||^2 directly.
            const double w = 0.7;
            const MilpProblem upper = kf->upper_feasible_set(t);
            double best = -kInf;
            for (const auto& x : all_binary(8)) {
                if (!upper.is_feasible(x, 1e-9, 1e-9)) continue;
                double v = 0.0;
                for (int j = 0; j < 8; ++j) v += c[j] * x[j] - w * x[j] * x[j];
                best = std::max(best, v);
            }
            CHECK(solve_value(kf->build_upper_policy_fy(t, c, w)) == doctest::Approx(best).epsilon(1e-9));
        }
    }
}

TEST_CASE("sandwich, recursive feasibility and separability on random instances") {
    for (auto kind : {FamilyKind::kKnapsack, FamilyKind::kFacility}) {
        CAPTURE(to_string(kind));
        const FamilyDims dims = kind == FamilyKind::kKnapsack ? FamilyDims{4, 3, 10} : FamilyDims{4, 4, 10};
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            auto fam = generate_family(kind, dims, seed);
            Rng rng(100 + seed);
            const auto theta = fam->sample_theta(rng);
            const MilpProblem master = fam->build_master(theta);
            const auto sol = solve_milp(master, SolveConfig::exact());
            REQUIRE(sol.status == SolveStatus::kOptimal);
            const double z = sol.objective_value;
            const double l = fam->relaxation_bound(theta);
            CHECK(l <= z + 1e-6);
            const std::vector<double> x_star(sol.values.begin(), sol.values.begin() + fam->upper_dim());
            CHECK(fam->true_cost(theta, x_star) == doctest::Approx(z).epsilon(1e-6));

            const MilpProblem upper = fam->upper_feasible_set(theta);
            for (const auto& x : all_binary(fam->upper_dim())) {
                if (!upper.is_feasible(x, 1e-9, 1e-9)) continue;
                const LowerSolution low = fam->solve_lower(theta, x);
                CHECK(std::accumulate(low.block_costs.begin(), low.block_costs.end(), 0.0) ==
                      doctest::Approx(low.cost).epsilon(1e-12));
                const double f = fam->true_cost(theta, x);
                CHECK(z <= f + 1e-6);
                // Joint lower problem: master with x fixed.
                MilpProblem joint = master;
                for (int j = 0; j < fam->upper_dim(); ++j) joint.var_lower[j] = joint.var_upper[j] = x[j];
                const double c_x = [&] {
                    const auto c = fam->upper_cost(theta);
                    double v = 0.0;
                    for (int j = 0; j < fam->upper_dim(); ++j) v += c[j] * x[j];
                    return v;
                }();
                CHECK(solve_value(joint) == doctest::Approx(c_x + low.cost).epsilon(1e-6));
                std::vector<double> full = x;
                full.insert(full.end(), low.y.begin(), low.y.end());
                CHECK(master.max_violation(full) <= 1e-6);
            }
        }
    }
}

TEST_CASE("knapsack relaxation with one block matches a fractional knapsack oracle") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto fam_base = generate_family(FamilyKind::kKnapsack, {1, 6, 8}, seed);
        const auto& fam = dynamic_cast<const KnapsackFamily&>(*fam_base);
        Rng rng(seed);
        const auto theta = fam.sample_theta(rng);
        const auto d = fam.lower_cost(theta);
        std::vector<double> v(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) v[i] = -d[i];
        // With a^T y <= b x and y <= x, the LP scales a fractional knapsack by x <= min(1, b0/a0).
        const double t = std::min(1.0, fam.upper_capacity() / fam.upper_weights()[0]);
        const double oracle = -t * fractional_knapsack(v, fam.lower_weights(), fam.lower_capacities()[0]);
        CHECK(fam.relaxation_bound(theta) == doctest::Approx(oracle).epsilon(1e-9));
    }
}

TEST_CASE("recursive feasibility over many random upper points") {
    for (auto kind : {FamilyKind::kKnapsack, FamilyKind::kFacility}) {
        auto fam = generate_family(kind, {6, 4, 10}, 77);
        Rng rng(5);
        std::bernoulli_distribution coin(0.5);
        int checked = 0;
        for (int trial = 0; trial < 300; ++trial) {
            const auto theta = fam->sample_theta(rng);
            std::vector<double> x(6);
            for (double& v : x) v = coin(rng) ? 1.0 : 0.0;
            if (!fam->upper_feasible_set(theta).is_feasible(x, 1e-9, 1e-9)) continue;
            CHECK_NOTHROW(fam->solve_lower(theta, x));
            ++checked;
        }
        CHECK(checked > 20);
    }
}
