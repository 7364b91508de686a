#include "hmip/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "hmip/error.hpp"
#include "hmip/evaluation.hpp"
#include "hmip/parallel.hpp"

namespace hmip {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();
constexpr double kShrink = 1e-9;  // keeps h strictly below u

bool degenerate(double l, double u) { return u - l < 1e-9; }

nlohmann::json number_json(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double number_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return kInfinity;
        if (s == "-inf") return -kInfinity;
        throw Error(ErrorCode::kParse, "bad number '" + s + "'");
    }
    return j.get<double>();
}

}  // namespace

double bound_transform(double l, double u, double x) {
    const double r = (x - l) / (u - l);
    if (r >= 1.0) return kInfinity;
    return std::atanh(r);
}

double bound_transform_inverse(double l, double u, double t) { return l + (u - l) * std::tanh(t); }

const char* to_string(ConformalConvention c) {
    return c == ConformalConvention::kCorrected ? "corrected" : "multiplicative";
}

ConformalConvention conformal_convention_from_string(const std::string& name) {
    if (name == "corrected") return ConformalConvention::kCorrected;
    if (name == "multiplicative") return ConformalConvention::kMultiplicative;
    throw Error(ErrorCode::kInvalidArgument, "unknown convention '" + name + "' (expected corrected|multiplicative)");
}

PolicyOutcome run_policy(const HierarchicalFamily& family, const Decider& decide, std::span<const double> theta) {
    PolicyOutcome out;
    out.x_hat = decide(theta);
    out.lower = family.solve_lower(theta, out.x_hat);
    const auto c = family.upper_cost(theta);
    out.u = out.lower.cost;
    for (std::size_t j = 0; j < c.size(); ++j) out.u += c[j] * out.x_hat[j];
    out.l = family.relaxation_bound(theta);

    const auto& blocks = out.lower.block_costs;
    double mean = 0.0, lo = 0.0, hi = 0.0;
    int active = 0;
    if (!blocks.empty()) {
        mean = std::accumulate(blocks.begin(), blocks.end(), 0.0) / static_cast<double>(blocks.size());
        lo = *std::min_element(blocks.begin(), blocks.end());
        hi = *std::max_element(blocks.begin(), blocks.end());
        for (double b : blocks) active += std::abs(b) > 1e-12;
    }
    out.features.assign(theta.begin(), theta.end());
    out.features.insert(out.features.end(), out.x_hat.begin(), out.x_hat.end());
    for (double v : {out.lower.cost, mean, lo, hi, static_cast<double>(active), out.l, out.u}) out.features.push_back(v);
    return out;
}

std::vector<PolicyOutcome> run_policy_all(const HierarchicalFamily& family, const Decider& decide,
                                          const std::vector<LabeledSample>& set, int jobs) {
    std::vector<PolicyOutcome> out(set.size());
    parallel_for(static_cast<int>(set.size()), jobs, [&](int i) { out[i] = run_policy(family, decide, set[i].theta); });
    return out;
}

void ConformalTrainConfig::validate() const {
    if (!(learning_rate >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::kInvalidArgument, "momentum must lie in [0, 1)");
    if (batch_size < 1 || epochs < 1) throw Error(ErrorCode::kInvalidArgument, "batch size and epochs must be >= 1");
}

ConformalModel::ConformalModel(Mlp psi, std::vector<double> input_mean, std::vector<double> input_scale)
    : psi_(std::move(psi)), mean_(std::move(input_mean)), scale_(std::move(input_scale)) {
    if (psi_.output_dim() != 1 || psi_.output_activation() != OutputActivation::kSigmoid) {
        throw Error(ErrorCode::kInvalidArgument, "psi must have one sigmoid output");
    }
    if (static_cast<int>(mean_.size()) != psi_.input_dim() || mean_.size() != scale_.size()) {
        throw Error(ErrorCode::kDimensionMismatch, "standardization does not match psi's input");
    }
}

std::vector<double> ConformalModel::standardize(std::span<const double> features) const {
    if (features.size() != mean_.size()) throw Error(ErrorCode::kDimensionMismatch, "psi input has the wrong length");
    std::vector<double> x(features.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (features[i] - mean_[i]) / scale_[i];
    return x;
}

double ConformalModel::predict(std::span<const double> features, double l, double u) const {
    const double s = psi_.forward(standardize(features))[0];
    if (degenerate(l, u)) return l;
    return l + (u - l) * (1.0 - kShrink) * s;
}

const Calibration& ConformalModel::calibration() const {
    if (!calibration_) throw Error(ErrorCode::kUncalibrated, "conformal model has not been calibrated");
    return *calibration_;
}

double ConformalModel::bound(double l, double u, double h) const {
    const Calibration& c = calibration();
    return conformal_bound(l, u, h, c.q_alpha, c.convention);
}

nlohmann::json ConformalModel::to_json() const {
    nlohmann::json doc = {{"psi", psi_.to_json()}, {"input_mean", mean_}, {"input_scale", scale_}};
    return doc;
}

ConformalModel ConformalModel::from_json(const nlohmann::json& doc) {
    try {
        return ConformalModel(Mlp::from_json(doc.at("psi")), doc.at("input_mean").get<std::vector<double>>(),
                              doc.at("input_scale").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, std::string("conformal model document: ") + e.what());
    }
}

double conformal_loss(const ConformalModel& model, const std::vector<LabeledSample>& set,
                      const std::vector<PolicyOutcome>& outcomes, Mlp::Gradients* gradient) {
    if (set.size() != outcomes.size() || set.empty()) {
        throw Error(ErrorCode::kMissingLabels, "every sample needs a label and a policy outcome");
    }
    double width2 = 0.0;
    for (const auto& o : outcomes) width2 += (o.u - o.l) * (o.u - o.l);
    width2 /= static_cast<double>(outcomes.size());
    const double norm = width2 > 0.0 ? 1.0 / (width2 * static_cast<double>(set.size()))
                                     : 1.0 / static_cast<double>(set.size());
    if (gradient) *gradient = model.psi().zero_gradients();
    double loss = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& o = outcomes[i];
        Mlp::Cache cache;
        const double s = model.psi().forward(model.standardize(o.features), cache)[0];
        const double width = degenerate(o.l, o.u) ? 0.0 : (o.u - o.l) * (1.0 - kShrink);
        const double h = o.l + width * s;
        const double r = h - set[i].z;
        loss += norm * r * r;
        if (gradient) {
            const double upstream = 2.0 * norm * r * width;
            gradient->add(model.psi().backward(cache, std::span<const double>(&upstream, 1)));
        }
    }
    return loss;
}

ConformalModel train_conformal(const std::vector<LabeledSample>& eval_set, const std::vector<PolicyOutcome>& outcomes,
                               const ConformalTrainConfig& config) {
    config.validate();
    if (eval_set.size() != outcomes.size() || eval_set.empty()) {
        throw Error(ErrorCode::kMissingLabels, "every eval sample needs a label and a policy outcome");
    }
    const std::size_t d = outcomes.front().features.size();
    std::vector<double> mean(d, 0.0), scale(d, 0.0);
    for (const auto& o : outcomes) {
        for (std::size_t k = 0; k < d; ++k) mean[k] += o.features[k];
    }
    for (double& m : mean) m /= static_cast<double>(outcomes.size());
    for (const auto& o : outcomes) {
        for (std::size_t k = 0; k < d; ++k) scale[k] += (o.features[k] - mean[k]) * (o.features[k] - mean[k]);
    }
    for (double& s : scale) {
        s = std::sqrt(s / static_cast<double>(outcomes.size()));
        if (s < 1e-12) s = 1.0;
    }
    std::vector<int> dims{static_cast<int>(d)};
    dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
    dims.push_back(1);
    ConformalModel model(Mlp(dims, OutputActivation::kSigmoid, config.seed), mean, scale);

    const int n = static_cast<int>(eval_set.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(config.seed ^ 0xc0f0ULL);
    Mlp psi = model.psi();
    Mlp::Gradients velocity = psi.zero_gradients();
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (int i = n - 1; i > 0; --i) std::swap(order[i], order[static_cast<int>(rng() % (i + 1))]);
        for (int lo = 0; lo < n; lo += config.batch_size) {
            const int hi = std::min(n, lo + config.batch_size);
            std::vector<LabeledSample> batch;
            std::vector<PolicyOutcome> batch_out;
            for (int k = lo; k < hi; ++k) {
                batch.push_back(eval_set[order[k]]);
                batch_out.push_back(outcomes[order[k]]);
            }
            Mlp::Gradients g;
            conformal_loss(ConformalModel(psi, mean, scale), batch, batch_out, &g);
            velocity.scale(config.momentum);
            velocity.add(g);
            psi.apply(velocity, config.learning_rate);
        }
    }
    ConformalModel trained(psi, mean, scale);
    spdlog::info("conformal predictor trained, eval loss {}", conformal_loss(trained, eval_set, outcomes, nullptr));
    return trained;
}

double nonconformity_score(double l, double u, double h, double z) {
    if (degenerate(l, u)) return 0.0;
    const double r = (z - l) / (u - l);
    if (r <= 0.0) return kInfinity;
    if (r >= 1.0) return 0.0;
    return bound_transform(l, u, h) / std::atanh(r);
}

Calibration calibrate_scores(std::vector<double> scores, double alpha, ConformalConvention convention) {
    if (scores.empty()) throw Error(ErrorCode::kEmptyCalibrationSet, "no calibration samples");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kAlphaOutOfRange, "alpha must lie in (0, 1)");
    std::sort(scores.begin(), scores.end());
    Calibration c;
    c.alpha = alpha;
    c.convention = convention;
    c.m = static_cast<int>(scores.size());
    // The small offset keeps exact products such as 100 * 0.1 from rounding up.
    const int k = std::max(1, static_cast<int>(std::ceil(c.m * alpha - 1e-9)));
    c.q_alpha = convention == ConformalConvention::kCorrected ? scores[c.m - k] : scores[k - 1];
    c.coverage_target = 1.0 - static_cast<double>(k) / (c.m + 1);
    c.scores = std::move(scores);
    return c;
}

double conformal_bound(double l, double u, double h, double q_alpha, ConformalConvention convention) {
    if (degenerate(l, u)) return l;
    const double ph = bound_transform(l, u, h);
    double t = 0.0;
    if (convention == ConformalConvention::kCorrected) {
        if (std::isinf(q_alpha) || ph == 0.0) return l;
        // q = 0: only scores of 0 (z >= u) are covered, so the limit bound is u.
        if (!(q_alpha > 0.0)) return u;
        t = ph / q_alpha;
    } else {
        if (ph == 0.0) return l;
        t = q_alpha * ph;
    }
    return std::clamp(bound_transform_inverse(l, u, t), l, u);
}

Calibration calibrate(ConformalModel& model, const std::vector<LabeledSample>& calib_set,
                      const std::vector<PolicyOutcome>& outcomes, double alpha, ConformalConvention convention) {
    if (calib_set.empty()) throw Error(ErrorCode::kEmptyCalibrationSet, "no calibration samples");
    if (calib_set.size() != outcomes.size()) throw Error(ErrorCode::kMissingLabels, "outcomes do not match samples");
    std::vector<double> scores;
    for (std::size_t i = 0; i < calib_set.size(); ++i) {
        const auto& o = outcomes[i];
        scores.push_back(nonconformity_score(o.l, o.u, model.predict(o.features, o.l, o.u), calib_set[i].z));
    }
    Calibration c = calibrate_scores(std::move(scores), alpha, convention);
    model.set_calibration(c);
    return c;
}

BoundCertificate certify(const ConformalModel& model, const PolicyOutcome& o) {
    const Calibration& c = model.calibration();
    BoundCertificate cert;
    cert.x_hat = o.x_hat;
    cert.y_hat = o.lower.y;
    cert.u = o.u;
    cert.l = o.l;
    cert.q_alpha = c.q_alpha;
    cert.coverage_target = c.coverage_target;
    cert.exact = degenerate(o.l, o.u);
    cert.h = model.predict(o.features, o.l, o.u);
    cert.omega = cert.exact ? o.l : model.bound(o.l, o.u, cert.h);
    return cert;
}

BoundCertificate online_bound(const ConformalModel& model, const HierarchicalFamily& family, const Decider& decide,
                              std::span<const double> theta) {
    model.calibration();  // fail before any solve
    return certify(model, run_policy(family, decide, theta));
}

CoverageReport coverage_eval(const std::vector<double>& z, const std::vector<double>& l,
                             const std::vector<double>& omega) {
    if (z.size() != l.size() || z.size() != omega.size() || z.empty()) {
        throw Error(ErrorCode::kMissingLabels, "coverage needs z, l and omega for every test sample");
    }
    CoverageReport r;
    int invalid = 0, valid = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double denom = z[i] - l[i];
        if (std::abs(denom) < 1e-9) {
            ++r.skipped;
            spdlog::info("coverage: sample {} skipped, z - l = {}", i, denom);
            continue;
        }
        ++r.evaluated;
        if (z[i] - omega[i] >= 0.0) {
            r.r_rel_plus += (z[i] - omega[i]) / denom;
            ++valid;
        } else {
            r.r_rel_minus += (omega[i] - z[i]) / denom;
            ++invalid;
        }
    }
    if (r.evaluated == 0) throw Error(ErrorCode::kMissingLabels, "every test sample had z = l");
    const double t = r.evaluated;
    r.r_rel_plus_valid = valid > 0 ? r.r_rel_plus / valid : std::numeric_limits<double>::quiet_NaN();
    r.r_rel_plus /= t;
    r.r_rel_minus /= t;
    r.r_percent = invalid / t;
    r.empirical_coverage = 1.0 - r.r_percent;
    return r;
}

void save_calibration(const Calibration& c, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    nlohmann::json scores = nlohmann::json::array();
    for (double s : c.scores) scores.push_back(number_json(s));
    const nlohmann::json doc = {{"alpha", c.alpha},
                                {"convention", to_string(c.convention)},
                                {"q_alpha", number_json(c.q_alpha)},
                                {"M", c.m},
                                {"coverage_target", c.coverage_target},
                                {"scores", scores}};
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

Calibration load_calibration(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
    try {
        const auto doc = nlohmann::json::parse(in);
        Calibration c;
        c.alpha = doc.at("alpha").get<double>();
        c.convention = conformal_convention_from_string(doc.at("convention").get<std::string>());
        c.q_alpha = number_from_json(doc.at("q_alpha"));
        c.m = doc.at("M").get<int>();
        c.coverage_target = doc.at("coverage_target").get<double>();
        for (const auto& s : doc.at("scores")) c.scores.push_back(number_from_json(s));
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
    }
}

void write_certificates_csv(const std::vector<int>& theta_ids, const std::vector<BoundCertificate>& certs,
                            const std::vector<double>& z, const std::filesystem::path& path) {
    if (theta_ids.size() != certs.size()) throw Error(ErrorCode::kDimensionMismatch, "one id per certificate");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << "theta_id,l,u,h,omega,z,valid\n";
    for (std::size_t i = 0; i < certs.size(); ++i) {
        const auto& c = certs[i];
        out << theta_ids[i] << ',' << format_number(c.l) << ',' << format_number(c.u) << ',' << format_number(c.h)
            << ',' << format_number(c.omega) << ',';
        if (i < z.size()) {
            out << format_number(z[i]) << ',' << (z[i] >= c.omega ? 1 : 0);
        } else {
            out << ',';
        }
        out << '\n';
    }
}

}  // namespace hmip
