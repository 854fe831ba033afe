#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "sopabn/config.hpp"
#include "sopabn/errors.hpp"
#include "sopabn/linear_gaussian.hpp"
#include "test_support.hpp"

using namespace sopabn;

namespace {

// H=2, d_s=d_a=1 instance with closed-form pathway coefficients.
LinearDynamics tiny_instance(double beta_s, double beta_a, double theta,
                             double b1, double c1, double c2,
                             const Eigen::MatrixXd& v) {
    LinearDynamics dyn;
    dyn.d_s = 1;
    dyn.d_a = 1;
    dyn.horizon = 2;
    dyn.mu_s = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
    dyn.mu_a = {Eigen::VectorXd::Zero(1)};
    dyn.beta_s = {Eigen::MatrixXd::Constant(1, 1, beta_s)};
    dyn.beta_a = {Eigen::MatrixXd::Constant(1, 1, beta_a)};
    dyn.theta = {Eigen::MatrixXd::Constant(1, 1, theta)};
    dyn.m = {0.0, 0.0};
    dyn.b = {Eigen::VectorXd::Constant(1, b1), Eigen::VectorXd::Zero(1)};
    dyn.c = {Eigen::VectorXd::Constant(1, c1),
             Eigen::VectorXd::Constant(1, c2)};
    dyn.V = v;
    dyn.validate();
    return dyn;
}

} // namespace

TEST_CASE("pathway decomposition matches the hand example") {
    const LinearDynamics dyn = tiny_instance(
        0.5, 1.0, 0.2, 1.0, 1.0, 1.0, Eigen::MatrixXd::Identity(2, 2));
    const PathwayDecomposition dec = decompose(dyn);
    REQUIRE(dec.alpha.size() == 2);
    CHECK(dec.alpha[0][0] == doctest::Approx(1.2).epsilon(1e-12));
    CHECK(dec.alpha[1][0] == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(dec.R.size() == 2);
    // closed-loop transition 0.5 + 1.0 * 0.2 = 0.7 propagates e_1 into r_2
    CHECK(dec.R[0] == doctest::Approx(1.2 + 1.0 * 0.7).epsilon(1e-12));
    CHECK(dec.R[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero dynamics leave only per-period sensitivities") {
    LinearDynamics dyn = testsup::random_dynamics(31, 2, 1, 3, 0.3);
    for (auto& m : dyn.beta_s) {
        m.setZero();
    }
    for (auto& m : dyn.beta_a) {
        m.setZero();
    }
    for (auto& m : dyn.theta) {
        m.setZero();
    }
    const PathwayDecomposition dec = decompose(dyn);
    double expected_gamma = 0.0;
    for (int t = 0; t < 3; ++t) {
        expected_gamma += dyn.m[static_cast<std::size_t>(t)] +
                          dyn.c[static_cast<std::size_t>(t)].dot(dyn.mu_s
                                [static_cast<std::size_t>(t)]);
        if (t < 2) {
            expected_gamma += dyn.b[static_cast<std::size_t>(t)].dot(
                dyn.mu_a[static_cast<std::size_t>(t)]);
        }
    }
    CHECK(dec.gamma == doctest::Approx(expected_gamma).epsilon(1e-10));
    // with no feedback, block t of R is alpha_t alone
    for (int t = 0; t < 3; ++t) {
        const Eigen::RowVectorXd block = dec.R.segment(t * 2, 2);
        CHECK((block - dec.alpha[static_cast<std::size_t>(t)]).norm() <
              1e-12);
    }
}

TEST_CASE("analytic variance closed forms") {
    PathwayDecomposition dec;
    dec.R = Eigen::RowVectorXd(2);
    dec.R << 1.0, 1.0;
    CHECK(analytic_variance(dec, Eigen::MatrixXd::Identity(2, 2)) ==
          doctest::Approx(2.0).epsilon(1e-12));

    PathwayDecomposition cancel;
    cancel.R = Eigen::RowVectorXd(2);
    cancel.R << 1.0, -1.0;
    Eigen::MatrixXd ones(2, 2);
    ones << 1, 1, 1, 1;
    CHECK(analytic_variance(cancel, ones) ==
          doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("simulated variance matches the analytic value") {
    const LinearDynamics dyn = testsup::random_dynamics(77, 2, 1, 3, 0.5);
    const PathwayDecomposition dec = decompose(dyn);
    const double var = analytic_variance(dec, dyn.V);
    LinearModel model(dyn);
    GaussianSampler noise(Eigen::VectorXd::Zero(dyn.input_count()), dyn.V);
    RngStream rng(123);
    SimWorkspace ws;
    OutputSelector sel;
    const int n = 1000000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double y = simulate_output(model, sel, noise.sample(rng), ws);
        s += y;
        s2 += y * y;
    }
    const double mean = s / n;
    const double sample_var = s2 / n - mean * mean;
    // SE of a sample variance ~ var * sqrt(2/n)
    CHECK(std::abs(sample_var - var) < 4.0 * var * std::sqrt(2.0 / n));
    CHECK(std::abs(mean - dec.gamma) <
          4.0 * std::sqrt(var / static_cast<double>(n)));
}

TEST_CASE("simulation agrees with the affine decomposition") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const LinearDynamics dyn =
            testsup::random_dynamics(seed, 3, 2, 3, 0.5);
        const PathwayDecomposition dec = decompose(dyn);
        LinearModel model(dyn);
        RngStream rng(seed + 100);
        Eigen::VectorXd e(dyn.input_count());
        for (int rep = 0; rep < 20; ++rep) {
            for (int i = 0; i < e.size(); ++i) {
                e[i] = rng.next_gaussian();
            }
            const Trajectory traj = simulate_trajectory(model, e);
            const double affine = dec.gamma + dec.R.dot(e);
            CHECK(std::abs(traj.cumulative_reward - affine) <= 1e-10);
        }
    }
}

TEST_CASE("value function endpoints and closed forms") {
    const double rho = 0.5;
    Eigen::MatrixXd v(2, 2);
    v << 1.0, rho, rho, 1.0;
    const LinearDynamics dyn = tiny_instance(0, 0, 0, 0, 1.0, 1.0, v);
    const PathwayDecomposition dec = decompose(dyn);
    REQUIRE(dec.R.size() == 2);
    CHECK(dec.R[0] == doctest::Approx(1.0));
    CHECK(dec.R[1] == doctest::Approx(1.0));

    CHECK(analytic_value_function(dec, v, 0) == 0.0);
    const double var = analytic_variance(dec, v);
    CHECK(analytic_value_function(dec, v, 0b11) ==
          doctest::Approx(var).epsilon(1e-12));
    // E[Y | e_1] = (1 + rho) e_1, so g({e1}) = (1+rho)^2
    CHECK(analytic_value_function(dec, v, 0b01) ==
          doctest::Approx((1 + rho) * (1 + rho)).epsilon(1e-12));
    CHECK(analytic_value_function(dec, v, 0b10) ==
          doctest::Approx((1 + rho) * (1 + rho)).epsilon(1e-12));
}

TEST_CASE("diagonal covariance makes the value function additive") {
    LinearDynamics dyn = testsup::random_dynamics(55, 2, 1, 2, 0.0);
    dyn.V = dyn.V.diagonal().asDiagonal();
    const PathwayDecomposition dec = decompose(dyn);
    const int n = dyn.input_count();
    std::vector<double> singles(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        singles[static_cast<std::size_t>(i)] =
            analytic_value_function(dec, dyn.V, 1ull << i);
        CHECK(singles[static_cast<std::size_t>(i)] ==
              doctest::Approx(dec.R[i] * dec.R[i] * dyn.V(i, i))
                  .epsilon(1e-10));
    }
    for (SubsetMask u = 0; u < (1ull << n); ++u) {
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            if (mask_contains(u, i)) {
                sum += singles[static_cast<std::size_t>(i)];
            }
        }
        CHECK(analytic_value_function(dec, dyn.V, u) ==
              doctest::Approx(sum).epsilon(1e-9));
    }
}

TEST_CASE("value function is monotone under subset growth") {
    for (int d_e = 3; d_e <= 6; ++d_e) {
        const LinearDynamics dyn = testsup::random_dynamics_for_inputs(
            static_cast<std::uint64_t>(900 + d_e), d_e, 0.6);
        const PathwayDecomposition dec = decompose(dyn);
        const double var = analytic_variance(dec, dyn.V);
        for (SubsetMask u = 0; u < (1ull << d_e); ++u) {
            const double g = analytic_value_function(dec, dyn.V, u);
            CHECK(g >= -1e-9 * var);
            CHECK(g <= var * (1.0 + 1e-9) + 1e-12);
        }
    }
}

TEST_CASE("frozen instances reproduce their exact reference values") {
    {
        const ExperimentConfig config =
            load_config(testsup::config_dir() + "/linear_default.json");
        const PathwayDecomposition dec = decompose(config.linear);
        CHECK(analytic_variance(dec, config.linear.V) ==
              doctest::Approx(1.5166295703).epsilon(1e-9));
        const double expected_r[6] = {1.079738, 0.619961, 0.583605,
                                      -0.101,   -0.881,   -0.425};
        REQUIRE(dec.R.size() == 6);
        for (int i = 0; i < 6; ++i) {
            CHECK(std::abs(dec.R[i] - expected_r[i]) < 1e-6);
        }
        // the posterior is centered on the embedded coefficients
        CHECK(config.has_posterior);
        const Eigen::VectorXd at_base =
            extract_parameters(config.linear, config.posterior_slots);
        CHECK((at_base - config.posterior_mean).cwiseAbs().maxCoeff() <
              1e-12);
    }
    {
        const ExperimentConfig config =
            load_config(testsup::config_dir() + "/linear_de4.json");
        const PathwayDecomposition dec = decompose(config.linear);
        CHECK(analytic_variance(dec, config.linear.V) ==
              doctest::Approx(2.3273443361).epsilon(1e-9));
        const double expected_r[4] = {-0.84136, 0.831906, 0.16, -0.518};
        for (int i = 0; i < 4; ++i) {
            CHECK(std::abs(dec.R[i] - expected_r[i]) < 1e-6);
        }
    }
}

TEST_CASE("parameter slots parse, embed, and extract consistently") {
    const ParameterSlot slot = parse_parameter_slot("beta_s[1][2][3]");
    CHECK(slot.field == ParameterSlot::Field::BetaS);
    CHECK(slot.t == 0);
    CHECK(slot.r == 1);
    CHECK(slot.c == 2);
    CHECK(parse_parameter_slot("m[2]").field == ParameterSlot::Field::M);
    CHECK(parse_parameter_slot("V[1][2]").field == ParameterSlot::Field::V);
    CHECK_THROWS_AS((void)parse_parameter_slot("beta_s[1]"), ConfigError);
    CHECK_THROWS_AS((void)parse_parameter_slot("nosuch[1]"), ConfigError);
    CHECK_THROWS_AS((void)parse_parameter_slot("m[1][2]"), ConfigError);

    const LinearDynamics base = testsup::random_dynamics(66, 3, 1, 2, 0.4);
    const std::vector<ParameterSlot> slots = {
        parse_parameter_slot("beta_s[1][1][1]"),
        parse_parameter_slot("mu_s[2][3]"),
        parse_parameter_slot("m[1]"),
        parse_parameter_slot("b[2][1]"),
        parse_parameter_slot("theta[1][2][1]"),
    };
    Eigen::VectorXd w(5);
    w << 0.11, -0.22, 0.33, -0.44, 0.55;
    const LinearDynamics embedded = embed_parameters(base, slots, w);
    const Eigen::VectorXd back = extract_parameters(embedded, slots);
    CHECK((back - w).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(embedded.beta_s[0](0, 0) == doctest::Approx(0.11));
    CHECK(embedded.mu_s[1][2] == doctest::Approx(-0.22));

    // V slots write both symmetric entries
    const std::vector<ParameterSlot> vslot = {parse_parameter_slot("V[1][2]")};
    Eigen::VectorXd vw(1);
    vw << 0.05;
    const LinearDynamics vedit = embed_parameters(base, vslot, vw);
    CHECK(vedit.V(0, 1) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(vedit.V(1, 0) == doctest::Approx(0.05).epsilon(1e-9));

    // out-of-range slots are rejected when a family is built
    const OutputSelector sel;
    const std::vector<ParameterSlot> bad = {parse_parameter_slot("m[9]")};
    CHECK_THROWS_AS(LinearFamily(base, sel, bad, Eigen::VectorXd::Zero(1),
                                 Eigen::MatrixXd::Identity(1, 1)),
                    ConfigError);
}

TEST_CASE("family posterior draws embed into the dynamics") {
    const LinearDynamics base = testsup::random_dynamics(88, 2, 1, 2, 0.5);
    const std::vector<ParameterSlot> slots = {
        parse_parameter_slot("beta_s[1][1][1]"),
        parse_parameter_slot("beta_s[1][2][2]"),
    };
    Eigen::VectorXd mean(2);
    mean << 0.1, -0.2;
    Eigen::MatrixXd cov(2, 2);
    cov << 0.04, 0.01, 0.01, 0.04;
    LinearFamily family(base, OutputSelector{}, slots, mean, cov);
    CHECK(family.posterior_dim() == 2);
    CHECK(family.input_count() == 4);

    RngStream rng(5);
    const Eigen::VectorXd w = family.draw_parameters(rng);
    REQUIRE(w.size() == 2);
    const LinearDynamics dyn = family.dynamics_for(w);
    CHECK(dyn.beta_s[0](0, 0) == doctest::Approx(w[0]));
    CHECK(dyn.beta_s[0](1, 1) == doctest::Approx(w[1]));

    // the quasi-random path maps zero normals to the posterior mean
    const Eigen::VectorXd at_mean =
        family.parameters_from_normals(Eigen::VectorXd::Zero(2));
    CHECK((at_mean - mean).cwiseAbs().maxCoeff() < 1e-12);

    LinearFamily fixed(base, OutputSelector{});
    CHECK(fixed.posterior_dim() == 0);
    CHECK(fixed.draw_parameters(rng).size() == 0);
}

TEST_CASE("dynamics validation rejects inconsistent shapes") {
    LinearDynamics dyn = testsup::random_dynamics(99, 2, 1, 2, 0.5);
    dyn.mu_s.pop_back();
    CHECK_THROWS_AS(dyn.validate(), ConfigError);

    LinearDynamics dyn2 = testsup::random_dynamics(99, 2, 1, 2, 0.5);
    dyn2.beta_a[0] = Eigen::MatrixXd::Zero(2, 2);
    CHECK_THROWS_AS(dyn2.validate(), ConfigError);

    LinearDynamics dyn3 = testsup::random_dynamics(99, 2, 1, 2, 0.5);
    dyn3.V = Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(dyn3.validate(), ConfigError);
}
