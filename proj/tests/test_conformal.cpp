#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "hmip/conformal.hpp"
#include "hmip/error.hpp"

using namespace hmip;

TEST_CASE("transform round trip") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01;
    for (int rep = 0; rep < 1000; ++rep) {
        const double l = 10.0 * n01(rng);
        const double u = l + 0.01 + 5.0 * u01(rng);
        const double x = l + (u - l) * (1.0 - 1e-6) * u01(rng);
        const double back = bound_transform_inverse(l, u, bound_transform(l, u, x));
        CHECK(std::abs(back - x) <= 1e-9 * std::max(1.0, std::abs(x)));
    }
    CHECK(bound_transform(0.0, 1.0, 1.0) == kInf);
    CHECK(bound_transform(0.0, 1.0, 0.0) == 0.0);
}

TEST_CASE("calibration quantiles") {
    std::vector<double> scores;
    for (int i = 1; i <= 100; ++i) scores.push_back(i);
    const Calibration c = calibrate_scores(scores, 0.1, ConformalConvention::kCorrected);
    CHECK(c.q_alpha == 91.0);
    CHECK(c.m == 100);
    CHECK(c.coverage_target == doctest::Approx(1.0 - 10.0 / 101.0));
    CHECK(c.coverage_target == doctest::Approx(0.9010).epsilon(1e-4));
    const Calibration p = calibrate_scores(scores, 0.1, ConformalConvention::kMultiplicative);
    CHECK(p.q_alpha == 10.0);

    const std::vector<double> same(37, 2.5);
    CHECK(calibrate_scores(same, 0.2, ConformalConvention::kCorrected).q_alpha == 2.5);
    CHECK(calibrate_scores(same, 0.2, ConformalConvention::kMultiplicative).q_alpha == 2.5);
}

TEST_CASE("calibration errors") {
    try {
        calibrate_scores({}, 0.1, ConformalConvention::kCorrected);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kEmptyCalibrationSet);
    }
    for (double alpha : {0.0, 1.0, -0.1}) {
        try {
            calibrate_scores({1.0}, alpha, ConformalConvention::kCorrected);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::kAlphaOutOfRange);
        }
    }
}

TEST_CASE("nonconformity score edge cases") {
    CHECK(nonconformity_score(0.0, 1.0, 0.5, 0.0) == kInf);
    CHECK(nonconformity_score(0.0, 1.0, 0.5, 1.0) == 0.0);
    CHECK(nonconformity_score(2.0, 2.0, 2.0, 2.0) == 0.0);
    CHECK(nonconformity_score(0.0, 1.0, 0.5, 0.5) == doctest::Approx(1.0));
}

TEST_CASE("bound examples") {
    CHECK(conformal_bound(0.0, 1.0, 0.5, kInf, ConformalConvention::kCorrected) == 0.0);
    CHECK(conformal_bound(0.0, 1.0, 0.5, 0.0, ConformalConvention::kCorrected) == 1.0);
    CHECK(conformal_bound(0.0, 1.0, 0.5, 1.0, ConformalConvention::kCorrected) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(conformal_bound(-3.0, 7.0, 1.25, 1.0, ConformalConvention::kCorrected) ==
          doctest::Approx(1.25).epsilon(1e-12));
    const double expected = std::tanh(std::atanh(0.5) / 2.0);
    CHECK(conformal_bound(0.0, 1.0, 0.5, 2.0, ConformalConvention::kCorrected) == doctest::Approx(expected));
    CHECK(expected == doctest::Approx(0.2679).epsilon(1e-4));
    CHECK(conformal_bound(0.0, 1.0, 0.5, 0.5, ConformalConvention::kMultiplicative) == doctest::Approx(expected));
    // Degenerate interval: omega = l = u.
    CHECK(conformal_bound(4.0, 4.0, 4.0, 3.0, ConformalConvention::kCorrected) == 4.0);
}

TEST_CASE("bound sandwich and monotonicity in h") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int rep = 0; rep < 500; ++rep) {
        const double l = -5.0 + 10.0 * u01(rng);
        const double u = l + 0.1 + u01(rng);
        const double q = 1.0 + 3.0 * u01(rng);
        double prev = -kInf;
        for (int s = 0; s <= 20; ++s) {
            const double h = l + (u - l) * (1.0 - 1e-9) * s / 20.0;
            for (auto conv : {ConformalConvention::kCorrected, ConformalConvention::kMultiplicative}) {
                const double w = conformal_bound(l, u, h, conv == ConformalConvention::kCorrected ? q : 1.0 / q, conv);
                CHECK(w >= l);
                CHECK(w <= u);
            }
            const double w = conformal_bound(l, u, h, q, ConformalConvention::kCorrected);
            CHECK(w >= prev - 1e-12);
            prev = w;
        }
    }
}

TEST_CASE("coverage with a fixed predictor matches the finite-sample target") {
    // Fresh calibration set per test draw, so each indicator has the marginal
    // coverage probability.
    const int m = 100;
    const int trials = 4000;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto draw_z = [&] { return std::pow(u01(rng), 2.0); };  // l = 0, u = 1
    const double h = 0.4;
    for (double alpha : {0.1, 0.2}) {
        int covered = 0;
        double target = 0.0;
        for (int t = 0; t < trials; ++t) {
            std::vector<double> scores(m);
            for (double& s : scores) s = nonconformity_score(0.0, 1.0, h, draw_z());
            const Calibration c = calibrate_scores(scores, alpha, ConformalConvention::kCorrected);
            target = c.coverage_target;
            const double z = draw_z();
            if (z >= conformal_bound(0.0, 1.0, h, c.q_alpha, ConformalConvention::kCorrected)) ++covered;
        }
        const double se = std::sqrt(target * (1.0 - target) / trials);
        CHECK(std::abs(static_cast<double>(covered) / trials - target) <= 3.0 * se);
    }
}

TEST_CASE("coverage report on trivial bounds") {
    const std::vector<double> z{1.0, 2.0, 3.0};
    const std::vector<double> l{0.0, 0.5, 1.0};
    const CoverageReport at_l = coverage_eval(z, l, l);
    CHECK(at_l.r_percent == 0.0);
    CHECK(at_l.r_rel_plus == doctest::Approx(1.0));
    CHECK(at_l.empirical_coverage == 1.0);

    const std::vector<double> above{1.5, 2.5, 3.5};
    const CoverageReport at_u = coverage_eval(z, l, above);
    CHECK(at_u.r_percent == 1.0);
    CHECK(at_u.r_rel_plus == 0.0);
    CHECK(at_u.r_rel_minus == doctest::Approx((0.5 / 1.0 + 0.5 / 1.5 + 0.5 / 2.0) / 3.0));

    const CoverageReport skip = coverage_eval({1.0, 2.0}, {1.0, 0.0}, {1.0, 1.0});
    CHECK(skip.skipped == 1);
    CHECK(skip.evaluated == 1);
    CHECK(skip.r_rel_plus == doctest::Approx(0.5));

    CHECK_THROWS_AS(coverage_eval({1.0}, {0.0, 0.0}, {0.0}), Error);
}

TEST_CASE("model prediction stays inside the interval and serializes") {
    Mlp psi({3, 4, 1}, OutputActivation::kSigmoid, 2);
    ConformalModel model(psi, {0.0, 1.0, 2.0}, {1.0, 2.0, 0.5});
    const std::vector<double> f{5.0, -3.0, 100.0};
    const double h = model.predict(f, -2.0, 3.0);
    CHECK(h >= -2.0);
    CHECK(h < 3.0);
    CHECK_FALSE(model.calibrated());
    CHECK_THROWS_AS(model.calibration(), Error);
    CHECK_THROWS_AS(model.bound(-2.0, 3.0, h), Error);

    std::vector<double> scores{0.5, 1.0, kInf, 2.0};
    model.set_calibration(calibrate_scores(scores, 0.25, ConformalConvention::kCorrected));
    CHECK(model.calibration().q_alpha == kInf);

    const ConformalModel back = ConformalModel::from_json(model.to_json());
    CHECK(back.predict(f, -2.0, 3.0) == h);
    // The calibration is a separate artifact.
    CHECK_FALSE(back.calibrated());

    const auto path = std::filesystem::temp_directory_path() / "hmip_test_calibration.json";
    save_calibration(model.calibration(), path);
    const Calibration c = load_calibration(path);
    CHECK(c.scores == model.calibration().scores);
    CHECK(c.convention == ConformalConvention::kCorrected);
    CHECK(c.q_alpha == kInf);
}

TEST_CASE("conformal loss gradient matches central differences") {
    const auto family = generate_family(FamilyKind::kKnapsack, {3, 2, 4}, 4);
    Rng rng(8);
    std::vector<LabeledSample> set;
    std::vector<PolicyOutcome> outcomes;
    std::normal_distribution<double> n01;
    for (int i = 0; i < 5; ++i) {
        LabeledSample s;
        s.theta = family->sample_theta(rng);
        PolicyOutcome o;
        o.l = -3.0 + 0.1 * i;
        o.u = o.l + 2.0;
        s.z = o.l + 0.3 * (i + 1);
        for (int k = 0; k < 6; ++k) o.features.push_back(n01(rng));
        set.push_back(s);
        outcomes.push_back(o);
    }
    ConformalModel model(Mlp({6, 5, 1}, OutputActivation::kSigmoid, 9), std::vector<double>(6, 0.0),
                         std::vector<double>(6, 1.0));
    Mlp::Gradients g;
    conformal_loss(model, set, outcomes, &g);
    const Eigen::VectorXd analytic = g.flatten();
    const Eigen::VectorXd p = model.psi().parameters();
    Eigen::VectorXd numeric(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        auto eval_at = [&](double delta) {
            Mlp psi = model.psi();
            Eigen::VectorXd q = p;
            q[i] += delta;
            psi.set_parameters(q);
            return conformal_loss(ConformalModel(psi, std::vector<double>(6, 0.0), std::vector<double>(6, 1.0)), set,
                                  outcomes, nullptr);
        };
        numeric[i] = (eval_at(1e-6) - eval_at(-1e-6)) / 2e-6;
    }
    CHECK((analytic - numeric).norm() / std::max(analytic.norm(), 1e-12) <= 1e-4);
}

TEST_CASE("convention names") {
    CHECK(conformal_convention_from_string("corrected") == ConformalConvention::kCorrected);
    CHECK(conformal_convention_from_string("multiplicative") == ConformalConvention::kMultiplicative);
    CHECK_THROWS_AS(conformal_convention_from_string("other"), Error);
}
