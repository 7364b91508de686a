#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmip/datasets.hpp"
#include "hmip/mlp.hpp"
#include "hmip/problems.hpp"

namespace hmip {

/// phi_{l,u}(x) = arctanh((x - l) / (u - l)); +inf at x >= u.
double bound_transform(double l, double u, double x);
/// l + (u - l) tanh(t)
double bound_transform_inverse(double l, double u, double t);

enum class ConformalConvention { kCorrected, kMultiplicative };

const char* to_string(ConformalConvention c);
ConformalConvention conformal_convention_from_string(const std::string& name);

/// Upper decision for theta (the frozen cost predictor's policy).
using Decider = std::function<std::vector<double>(std::span<const double> theta)>;

/// Everything the online procedure computes before the bound itself.
struct PolicyOutcome {
    std::vector<double> x_hat;
    LowerSolution lower;
    double u = 0.0;
    double l = 0.0;
    std::vector<double> features;  ///< unstandardized psi input
};

/// Policy, sequential lower solves, relaxation bound, and the psi input
/// (theta, x_hat, lower total, block mean/min/max, active blocks, l, u).
PolicyOutcome run_policy(const HierarchicalFamily& family, const Decider& decide, std::span<const double> theta);

/// Policy outcomes for a labeled set, in order.
std::vector<PolicyOutcome> run_policy_all(const HierarchicalFamily& family, const Decider& decide,
                                          const std::vector<LabeledSample>& set, int jobs = 1);

struct ConformalTrainConfig {
    std::vector<int> hidden{128, 128};
    double learning_rate = 0.05;
    double momentum = 0.9;
    int batch_size = 16;
    int epochs = 400;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Calibration {
    double alpha = 0.1;
    ConformalConvention convention = ConformalConvention::kCorrected;
    double q_alpha = 0.0;
    int m = 0;
    double coverage_target = 0.0;
    std::vector<double> scores;  ///< sorted ascending; +inf allowed
};

struct BoundCertificate {
    std::vector<double> x_hat;
    std::vector<double> y_hat;
    double u = 0.0;
    double l = 0.0;
    double h = 0.0;
    double omega = 0.0;
    double q_alpha = 0.0;
    double coverage_target = 0.0;
    bool exact = false;  ///< degenerate interval, omega = l = u
};

class ConformalModel {
public:
    ConformalModel() = default;
    ConformalModel(Mlp psi, std::vector<double> input_mean, std::vector<double> input_scale);

    const Mlp& psi() const { return psi_; }
    int input_dim() const { return psi_.input_dim(); }

    /// h in [l, u - 1e-9 (u - l)].
    double predict(std::span<const double> features, double l, double u) const;

    bool calibrated() const { return calibration_.has_value(); }
    const Calibration& calibration() const;
    void set_calibration(Calibration c) { calibration_ = std::move(c); }

    /// omega for a given h; throws kUncalibrated.
    double bound(double l, double u, double h) const;

    nlohmann::json to_json() const;
    static ConformalModel from_json(const nlohmann::json& doc);

    /// Standardized input as fed to psi.
    std::vector<double> standardize(std::span<const double> features) const;

private:
    Mlp psi_;
    std::vector<double> mean_;
    std::vector<double> scale_;
    std::optional<Calibration> calibration_;
};

/// Squared-error regression of z on the eval set through the scaled sigmoid.
/// Throws kMissingLabels when outcomes and samples disagree.
ConformalModel train_conformal(const std::vector<LabeledSample>& eval_set, const std::vector<PolicyOutcome>& outcomes,
                               const ConformalTrainConfig& config);

/// Mean squared error (scaled as in training) and its gradient for psi's parameters.
double conformal_loss(const ConformalModel& model, const std::vector<LabeledSample>& set,
                      const std::vector<PolicyOutcome>& outcomes, Mlp::Gradients* gradient);

/// Score phi(h) / phi(z); +inf when phi(z) = 0, 0 when phi(z) = +inf.
double nonconformity_score(double l, double u, double h, double z);

/// q_alpha from raw scores. Throws kEmptyCalibrationSet, kAlphaOutOfRange.
Calibration calibrate_scores(std::vector<double> scores, double alpha, ConformalConvention convention);

/// omega from (l, u, h, q) under a convention, clamped to [l, u].
double conformal_bound(double l, double u, double h, double q_alpha, ConformalConvention convention);

Calibration calibrate(ConformalModel& model, const std::vector<LabeledSample>& calib_set,
                      const std::vector<PolicyOutcome>& outcomes, double alpha, ConformalConvention convention);

BoundCertificate online_bound(const ConformalModel& model, const HierarchicalFamily& family, const Decider& decide,
                              std::span<const double> theta);

/// Certificate from a precomputed outcome.
BoundCertificate certify(const ConformalModel& model, const PolicyOutcome& outcome);

struct CoverageReport {
    double r_rel_plus = 0.0;        ///< (1/T) sum of (z - omega)/(z - l) over valid bounds
    double r_rel_minus = 0.0;       ///< (1/T) sum of (omega - z)/(z - l) over invalid bounds
    double r_percent = 0.0;         ///< invalid fraction
    double empirical_coverage = 0.0;
    double r_rel_plus_valid = 0.0;  ///< mean relative gap among valid bounds only
    int evaluated = 0;
    int skipped = 0;                ///< |z - l| < 1e-9
};

/// z >= omega counts as valid. Throws kMissingLabels.
CoverageReport coverage_eval(const std::vector<double>& z, const std::vector<double>& l,
                             const std::vector<double>& omega);

void save_calibration(const Calibration& c, const std::filesystem::path& path);
Calibration load_calibration(const std::filesystem::path& path);

void write_certificates_csv(const std::vector<int>& theta_ids, const std::vector<BoundCertificate>& certs,
                            const std::vector<double>& z, const std::filesystem::path& path);

}  // namespace hmip
