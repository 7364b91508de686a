#include <chrono>
#include <cmath>

#include "hmip/error.hpp"
#include "hmip/problems.hpp"

namespace hmip {

const char* to_string(FamilyKind kind) {
    return kind == FamilyKind::kKnapsack ? "knapsack" : "facility";
}

FamilyKind family_kind_from_string(const std::string& name) {
    if (name == "knapsack") return FamilyKind::kKnapsack;
    if (name == "facility") return FamilyKind::kFacility;
    throw Error(ErrorCode::kInvalidArgument, "unknown family '" + name + "' (expected knapsack|facility)");
}

FamilyDims FamilyDims::desk(FamilyKind kind) {
    if (kind == FamilyKind::kKnapsack) return {20, 10, 100};
    return {15, 15, 100};
}

void HierarchicalFamily::check_theta(std::span<const double> theta) const {
    if (static_cast<int>(theta.size()) != dims_.params) {
        throw Error(ErrorCode::kDimensionMismatch, "theta has dimension " + std::to_string(theta.size()) +
                                                       ", expected " + std::to_string(dims_.params));
    }
}

MilpProblem HierarchicalFamily::build_upper_policy(std::span<const double> theta,
                                                   std::span<const double> c_hat) const {
    if (static_cast<int>(c_hat.size()) != upper_dim()) {
        throw Error(ErrorCode::kDimensionMismatch, "c_hat length must equal the upper dimension");
    }
    MilpProblem p = upper_feasible_set(theta);
    p.objective.assign(c_hat.begin(), c_hat.end());
    p.sense = policy_sign() < 0 ? ObjectiveSense::kMaximize : ObjectiveSense::kMinimize;
    return p;
}

MilpProblem HierarchicalFamily::build_upper_policy_fy(std::span<const double> theta,
                                                      std::span<const double> c_hat,
                                                      double omega_weight) const {
    MilpProblem p = build_upper_policy(theta, c_hat);
    for (int j = 0; j < p.num_vars(); ++j) {
        if (!p.integrality[j] || p.var_lower[j] < 0.0 || p.var_upper[j] > 1.0) {
            throw Error(ErrorCode::kNonBinaryUpperVariables, "FY policy needs binary upper variables");
        }
        // ||x||^2 = 1^T x on binaries; the penalty always works against the policy objective.
        p.objective[j] += policy_sign() * omega_weight;
    }
    return p;
}

void HierarchicalFamily::check_upper_feasible(std::span<const double> theta, std::span<const double> x) const {
    if (static_cast<int>(x.size()) != upper_dim()) {
        throw Error(ErrorCode::kDimensionMismatch, "x length must equal the upper dimension");
    }
    if (!upper_feasible_set(theta).is_feasible(x, 1e-7, 1e-6)) {
        throw Error(ErrorCode::kUpperInfeasiblePoint, "x is not in the upper feasible set");
    }
}

double HierarchicalFamily::true_cost(std::span<const double> theta, std::span<const double> x) const {
    const std::vector<double> c = upper_cost(theta);
    double upper = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) upper += c[j] * x[j];
    return upper + solve_lower(theta, x).cost;
}

double HierarchicalFamily::relaxation_bound(std::span<const double> theta) const {
    const MilpSolution lp = solve_lp(build_master(theta));
    if (lp.status != SolveStatus::kOptimal) {
        throw Error(ErrorCode::kInternal, std::string("master relaxation is ") + to_string(lp.status));
    }
    return lp.objective_value;
}

std::unique_ptr<HierarchicalFamily> HierarchicalFamily::from_json(const nlohmann::json& doc) {
    try {
        const FamilyKind kind = family_kind_from_string(doc.at("kind").get<std::string>());
        if (kind == FamilyKind::kKnapsack) return std::make_unique<KnapsackFamily>(doc);
        return std::make_unique<FacilityFamily>(doc);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, std::string("family document: ") + e.what());
    }
}

std::unique_ptr<HierarchicalFamily> generate_family(FamilyKind kind, const FamilyDims& dims,
                                                    std::uint64_t seed) {
    if (dims.blocks <= 0 || dims.items <= 0 || dims.params <= 0) {
        throw Error(ErrorCode::kInvalidArgument, "family dimensions must be positive");
    }
    if (kind == FamilyKind::kKnapsack) return std::make_unique<KnapsackFamily>(dims, seed);
    return std::make_unique<FacilityFamily>(dims, seed);
}

}  // namespace hmip
