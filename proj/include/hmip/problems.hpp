#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmip/milp.hpp"

namespace hmip {

using Rng = std::mt19937_64;

enum class FamilyKind { kKnapsack, kFacility };

const char* to_string(FamilyKind kind);
FamilyKind family_kind_from_string(const std::string& name);

struct FamilyDims {
    // knapsack: blocks = J lower knapsacks, items = k per knapsack
    // facility: blocks = |J| sites, items = |I| clients
    int blocks = 0;
    int items = 0;
    int params = 100;

    static FamilyDims desk(FamilyKind kind);
};

struct LowerSolution {
    std::vector<double> y;            ///< length lower_dim()
    double cost = 0.0;                ///< d(theta)^T y
    std::vector<double> block_costs;  ///< one per independently solved block
    std::vector<double> block_times;  ///< seconds, same order
};

/// A parametric two-level MILP: min c(theta)^T x + d(theta)^T y over
/// x in X(theta), y in Y(x, theta). Immutable after construction.
class HierarchicalFamily {
public:
    virtual ~HierarchicalFamily() = default;

    virtual FamilyKind kind() const = 0;
    const char* name() const { return to_string(kind()); }
    const FamilyDims& dims() const { return dims_; }
    std::uint64_t seed() const { return seed_; }

    virtual int upper_dim() const = 0;
    virtual int lower_dim() const = 0;
    int param_dim() const { return dims_.params; }

    virtual std::vector<double> sample_theta(Rng& rng) const = 0;
    virtual std::vector<double> upper_cost(std::span<const double> theta) const = 0;
    virtual std::vector<double> lower_cost(std::span<const double> theta) const = 0;

    /// X(theta) as a minimize MILP over x with zero objective.
    virtual MilpProblem upper_feasible_set(std::span<const double> theta) const = 0;

    /// +1 when the upper policy minimizes c_hat^T x, -1 when it maximizes.
    virtual double policy_sign() const { return 1.0; }

    /// Full problem over (x, y); x occupies the first upper_dim() columns.
    virtual MilpProblem build_master(std::span<const double> theta) const = 0;

    MilpProblem build_upper_policy(std::span<const double> theta, std::span<const double> c_hat) const;
    /// Policy with the penalty omega * ||x||^2, linear because x is binary.
    MilpProblem build_upper_policy_fy(std::span<const double> theta, std::span<const double> c_hat,
                                      double omega_weight) const;

    /// Lower blocks solved one after another with x fixed.
    virtual LowerSolution solve_lower(std::span<const double> theta, std::span<const double> x) const = 0;

    double true_cost(std::span<const double> theta, std::span<const double> x) const;
    double relaxation_bound(std::span<const double> theta) const;

    /// Throws kUpperInfeasiblePoint when x is not in X(theta).
    void check_upper_feasible(std::span<const double> theta, std::span<const double> x) const;

    virtual nlohmann::json to_json() const = 0;
    static std::unique_ptr<HierarchicalFamily> from_json(const nlohmann::json& doc);

protected:
    HierarchicalFamily(FamilyDims dims, std::uint64_t seed) : dims_(dims), seed_(seed) {}
    void check_theta(std::span<const double> theta) const;

    FamilyDims dims_;
    std::uint64_t seed_;
};

class KnapsackFamily final : public HierarchicalFamily {
public:
    KnapsackFamily(FamilyDims dims, std::uint64_t seed);
    explicit KnapsackFamily(const nlohmann::json& doc);

    FamilyKind kind() const override { return FamilyKind::kKnapsack; }
    int upper_dim() const override { return dims_.blocks; }
    int lower_dim() const override { return dims_.blocks * dims_.items; }
    double policy_sign() const override { return -1.0; }

    std::vector<double> sample_theta(Rng& rng) const override;
    std::vector<double> upper_cost(std::span<const double> theta) const override;
    std::vector<double> lower_cost(std::span<const double> theta) const override;
    MilpProblem upper_feasible_set(std::span<const double> theta) const override;
    MilpProblem build_master(std::span<const double> theta) const override;
    LowerSolution solve_lower(std::span<const double> theta, std::span<const double> x) const override;
    nlohmann::json to_json() const override;

    const std::vector<double>& upper_weights() const { return a0_; }
    double upper_capacity() const { return b0_; }
    const std::vector<double>& lower_weights() const { return a_; }  ///< J x k, row-major
    const std::vector<double>& lower_capacities() const { return b_; }
    const std::vector<double>& cost_map() const { return cost_map_; }  ///< Jk x p, row-major

private:
    std::vector<double> a0_;
    double b0_ = 0.0;
    std::vector<double> a_;
    std::vector<double> b_;
    std::vector<double> cost_map_;
};

class FacilityFamily final : public HierarchicalFamily {
public:
    static constexpr int kComplicatingRows = 25;
    static constexpr double kPenalty = 100.0;

    FacilityFamily(FamilyDims dims, std::uint64_t seed);
    explicit FacilityFamily(const nlohmann::json& doc);

    FamilyKind kind() const override { return FamilyKind::kFacility; }
    int sites() const { return dims_.blocks; }
    int clients() const { return dims_.items; }
    int upper_dim() const override { return sites(); }
    int lower_dim() const override { return clients() * sites() + clients(); }

    std::vector<double> sample_theta(Rng& rng) const override;
    std::vector<double> upper_cost(std::span<const double> theta) const override;
    std::vector<double> lower_cost(std::span<const double> theta) const override;
    std::vector<double> demand(std::span<const double> theta) const;
    MilpProblem upper_feasible_set(std::span<const double> theta) const override;
    MilpProblem build_master(std::span<const double> theta) const override;
    LowerSolution solve_lower(std::span<const double> theta, std::span<const double> x) const override;
    nlohmann::json to_json() const override;

    const std::vector<double>& complicating_matrix() const { return a_; }  ///< 25 x |J|
    const std::vector<double>& complicating_rhs() const { return b_; }
    const std::vector<double>& capacities() const { return capacity_; }
    double penalty() const { return gamma_; }

    /// Column of y_ij in the master (i-major after the x block).
    int y_col(int client, int site) const { return sites() + client * sites() + site; }
    int eta_col(int client) const { return sites() + clients() * sites() + client; }

private:
    struct AffineMap {
        std::vector<double> base;  // one per output
        std::vector<double> slope;  // outputs x p, row-major
        std::vector<double> eval(std::span<const double> theta, int p) const;
    };

    std::vector<double> a_;
    std::vector<double> b_;
    std::vector<double> capacity_;
    double gamma_ = kPenalty;
    AffineMap service_;  // d_ij, i-major
    AffineMap opening_;  // c_j
    AffineMap demand_;   // e_i
};

std::unique_ptr<HierarchicalFamily> generate_family(FamilyKind kind, const FamilyDims& dims,
                                                    std::uint64_t seed);

}  // namespace hmip
