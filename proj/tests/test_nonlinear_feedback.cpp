#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sopabn/errors.hpp"
#include "sopabn/nonlinear_feedback.hpp"
#include "sopabn/pabn_core.hpp"

using namespace sopabn;

TEST_CASE("parameter validation rejects bad values") {
    FeedbackParams p;
    p.r_g = -0.1;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = FeedbackParams{};
    p.step = 0.3; // does not divide the period
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = FeedbackParams{};
    p.horizon = 1;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = FeedbackParams{};
    p.initial[2] = -1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);

    PhCorrelation corr;
    corr.sigma_idio2[1] = 0.0;
    CHECK_THROWS_AS(corr.validate(), ConfigError);
    corr = PhCorrelation{};
    corr.sigma_ph2 = -0.5;
    CHECK_THROWS_AS(corr.validate(), ConfigError);

    DilutionPolicy pol;
    pol.fraction = 1.0;
    CHECK_THROWS_AS(pol.validate(), ConfigError);
    pol = DilutionPolicy{};
    pol.c_dil = -1.0;
    CHECK_THROWS_AS(pol.validate(), ConfigError);
}

TEST_CASE("integrator reproduces closed-form kinetics") {
    // no growth: S decays exponentially regardless of P and I
    FeedbackParams p;
    p.r_g = 0.0;
    p.step = 0.01;
    const Eigen::Vector3d v = integrate_period(p, {1.0, 0.5, 0.2});
    CHECK(v[0] == doctest::Approx(std::exp(-p.r_c)).epsilon(1e-9));

    // flat sigmoid and no conversion: S grows at the constant rate r_g / 2
    FeedbackParams q;
    q.r_c = 0.0;
    q.a = 0.0;
    q.step = 0.05;
    const Eigen::Vector3d w = integrate_period(q, {1.0, 0.5, 0.2});
    CHECK(std::abs(w[0] - (1.0 + 0.5 * q.r_g * q.period)) < 1e-12);
}

TEST_CASE("integrator converges at fourth order") {
    FeedbackParams p;
    p.r_g = 3.0;
    p.r_c = 2.0;
    p.r_d = 1.5;
    p.r_p = 2.0;
    p.a = 5.0;
    p.b = 0.5;
    const Eigen::Vector3d x0(1.0, 0.5, 0.2);
    p.step = 1.0 / 2048;
    const Eigen::Vector3d ref = integrate_period(p, x0);
    double prev = -1.0;
    for (int k = 3; k <= 6; ++k) {
        p.step = 1.0 / (1 << k);
        const double err =
            (integrate_period(p, x0) - ref).cwiseAbs().maxCoeff();
        if (prev > 0) {
            const double slope = std::log2(prev / err);
            CHECK(slope > 3.7);
            CHECK(slope < 4.3);
        }
        prev = err;
    }
}

TEST_CASE("saturated inhibition switches growth off and on") {
    // inhibitor far above threshold: growth ~ 0, S decays
    FeedbackParams p;
    p.a = 1e8;
    p.r_p = 0.0; // hold I constant
    p.step = 0.01;
    const Eigen::Vector3d high = integrate_period(p, {1.0, 0.0, 3.0});
    CHECK(high.allFinite());
    CHECK(high[0] == doctest::Approx(std::exp(-p.r_c)).epsilon(1e-6));

    // inhibitor far below threshold: full growth r_g
    const Eigen::Vector3d low = integrate_period(p, {1.0, 0.0, 0.0});
    const double target =
        p.r_g / p.r_c + (1.0 - p.r_g / p.r_c) * std::exp(-p.r_c);
    CHECK(low.allFinite());
    CHECK(low[0] == doctest::Approx(target).epsilon(1e-6));
}

TEST_CASE("residual covariance combines shared and idiosyncratic noise") {
    PhCorrelation corr;
    corr.l = Eigen::Vector3d(-1.0, 1.0, 1.0);
    corr.sigma_ph2 = 1.0;
    corr.sigma_idio2 = Eigen::Vector3d(1.0, 1.0, 1.0);
    const Eigen::MatrixXd v = build_covariance(corr, 4);
    REQUIRE(v.rows() == 12);
    REQUIRE(v.cols() == 12);
    Eigen::Matrix3d expected;
    expected << 2, -1, -1, -1, 2, 1, -1, 1, 2;
    for (int t = 0; t < 4; ++t) {
        CHECK((v.block<3, 3>(3 * t, 3 * t) - expected).cwiseAbs().maxCoeff() <
              1e-12);
    }
    // distinct periods are independent
    for (int i = 0; i < 12; ++i) {
        for (int j = 0; j < 12; ++j) {
            if (i / 3 != j / 3) {
                CHECK(v(i, j) == 0.0);
            }
        }
    }
    CHECK((v - v.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("deterministic trajectory matches the frozen reference") {
    FeedbackModel model(FeedbackParams{}, PhCorrelation{}, DilutionPolicy{});
    const Eigen::VectorXd e = Eigen::VectorXd::Zero(15);
    const Trajectory traj = simulate_trajectory(model, e);
    REQUIRE(traj.states.size() == 5);
    // coarse sanity band for the default culture
    CHECK(traj.states[4][0] == doctest::Approx(2.47).epsilon(0.01));
    CHECK(traj.states[4][1] == doctest::Approx(1.92).epsilon(0.01));
    CHECK(traj.states[4][2] == doctest::Approx(0.475).epsilon(0.01));
    // frozen regression values
    CHECK(traj.states[4][0] ==
          doctest::Approx(2.47094792194836).epsilon(1e-12));
    CHECK(traj.states[4][1] ==
          doctest::Approx(1.9228928255419).epsilon(1e-12));
    CHECK(traj.states[4][2] ==
          doctest::Approx(0.474693745855683).epsilon(1e-12));
    CHECK(traj.cumulative_reward ==
          doctest::Approx(1.89974327324304).epsilon(1e-12));
}

TEST_CASE("step composes dilution, kinetics, noise, and clamping") {
    const FeedbackParams params;
    const DilutionPolicy policy;
    FeedbackModel model(params, PhCorrelation{}, policy);

    Eigen::VectorXd s(3);
    s << 2.0, 1.0, 0.8;
    Eigen::VectorXd a(1);
    a << policy.fraction;
    Eigen::VectorXd e_next(3);
    e_next << 0.05, -0.02, 0.01;
    Eigen::VectorXd s_next;
    model.step(1, s, a, e_next, s_next);

    Eigen::Vector3d manual(s[0], s[1], (1.0 - policy.fraction) * s[2]);
    manual = integrate_period(params, manual);
    manual += Eigen::Vector3d(e_next);
    CHECK((s_next - Eigen::VectorXd(manual)).cwiseAbs().maxCoeff() < 1e-14);

    // a large negative shock clamps to zero rather than going negative
    e_next << -100.0, -100.0, -100.0;
    model.step(1, s, a, e_next, s_next);
    CHECK(s_next.minCoeff() == 0.0);

    // the initial state is the seeded culture plus clamped noise
    Eigen::VectorXd s1;
    Eigen::VectorXd e1(3);
    e1 << -5.0, 0.3, -0.1;
    model.initial_state(e1, s1);
    CHECK(s1[0] == 0.0);
    CHECK(s1[1] == doctest::Approx(0.3));
    CHECK(s1[2] == 0.0);
}

TEST_CASE("rewards price dilution costs and final product") {
    FeedbackParams params;
    DilutionPolicy policy;
    policy.fraction = 0.25;
    policy.c_dil = 0.4;
    policy.c_p = 2.0;
    FeedbackModel model(params, PhCorrelation{}, policy);

    Eigen::VectorXd s(3);
    s << 1.0, 3.0, 2.0;
    Eigen::VectorXd a(1);
    a << policy.fraction;
    // pre-dilution inhibitor is billed: -c_dil * fraction * I
    CHECK(model.reward(1, s, a) ==
          doctest::Approx(-0.4 * 0.25 * 2.0).epsilon(1e-12));
    CHECK(model.reward(params.horizon - 1, s, a) ==
          doctest::Approx(-0.2).epsilon(1e-12));
    // the final period pays for product and removes nothing
    CHECK(model.reward(params.horizon, s, Eigen::VectorXd(0)) ==
          doctest::Approx(2.0 * 3.0).epsilon(1e-12));

    // cumulative reward is the sum of per-period rewards
    FeedbackModel def(FeedbackParams{}, PhCorrelation{}, DilutionPolicy{});
    RngStream rng(404);
    Eigen::VectorXd e(15);
    for (int i = 0; i < 15; ++i) {
        e[i] = 0.2 * rng.next_gaussian();
    }
    const Trajectory traj = simulate_trajectory(def, e);
    double total = 0.0;
    for (double r : traj.rewards) {
        total += r;
    }
    CHECK(traj.cumulative_reward == doctest::Approx(total).epsilon(1e-12));
    // per-period costs follow the pre-dilution inhibitor concentration
    for (int t = 0; t < 4; ++t) {
        CHECK(traj.rewards[static_cast<std::size_t>(t)] ==
              doctest::Approx(-0.1 * 0.5 *
                              traj.states[static_cast<std::size_t>(t)][2])
                  .epsilon(1e-12));
    }
    CHECK(traj.rewards[4] == doctest::Approx(traj.states[4][1]).epsilon(1e-12));
}

TEST_CASE("family exposes the flattened residual dimension") {
    FeedbackFamily family(FeedbackParams{}, PhCorrelation{}, DilutionPolicy{},
                          OutputSelector{});
    CHECK(family.input_count() == 15);
    CHECK(family.posterior_dim() == 0);
    RngStream rng(1);
    CHECK(family.draw_parameters(rng).size() == 0);
    const auto model = family.instantiate(Eigen::VectorXd(0));
    CHECK(model->horizon() == 5);
    CHECK(model->residual_law().dimension() == 15);
    // repeated instantiation shares one immutable model
    CHECK(family.instantiate(Eigen::VectorXd(0)).get() == model.get());
}
