#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "sopabn/errors.hpp"
#include "sopabn/numerics.hpp"
#include "sopabn/pabn_core.hpp"
#include "test_support.hpp"

using namespace sopabn;

TEST_CASE("flat index ordering is period-major and bijective") {
    CHECK(flatten_input(1, 1, 3) == 0);
    CHECK(flatten_input(1, 3, 3) == 2);
    CHECK(flatten_input(2, 1, 3) == 3);
    CHECK(InputIndex{2, 3}.flat(3) == 5);
    for (int flat = 0; flat < 12; ++flat) {
        const InputIndex idx = unflatten_input(flat, 3);
        CHECK(idx.flat(3) == flat);
        CHECK(idx.t >= 1);
        CHECK(idx.n >= 1);
        CHECK(idx.n <= 3);
    }
}

TEST_CASE("mask helpers") {
    CHECK(full_mask(6) == 63ull);
    CHECK(full_mask(1) == 1ull);
    CHECK(mask_size(0b101101ull) == 4);
    CHECK(mask_contains(0b101ull, 0));
    CHECK(!mask_contains(0b101ull, 1));
    CHECK(mask_indices(0b100110ull) == std::vector<int>{1, 2, 5});
    CHECK(mask_indices(0ull).empty());
}

TEST_CASE("residual law validates its covariance") {
    Eigen::MatrixXd good(2, 2);
    good << 1.0, 0.5, 0.5, 1.0;
    CHECK_NOTHROW(ResidualLaw{good});

    Eigen::MatrixXd rect(2, 3);
    rect.setZero();
    CHECK_THROWS_AS(ResidualLaw{rect}, ConfigError);

    Eigen::MatrixXd asym(2, 2);
    asym << 1.0, 0.4, -0.4, 1.0;
    CHECK_THROWS_AS(ResidualLaw{asym}, ConfigError);

    Eigen::MatrixXd inf = good;
    inf(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(ResidualLaw{inf}, ConfigError);
}

TEST_CASE("conditioning reproduces hand-computed laws") {
    {
        Eigen::MatrixXd v(2, 2);
        v << 1.0, 0.5, 0.5, 1.0;
        ResidualLaw law(v);
        SubsetConditioner cond(law, 0b01);
        Eigen::VectorXd x_u(1), mean(1);
        x_u << 1.0;
        cond.conditional_mean(x_u, mean);
        CHECK(mean[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(cond.conditional_covariance()(0, 0) ==
              doctest::Approx(0.75).epsilon(1e-12));
    }
    {
        Eigen::MatrixXd v(3, 3);
        v << 2, 1, 1, 1, 2, 1, 1, 1, 2;
        ResidualLaw law(v);
        SubsetConditioner cond(law, 0b011);
        Eigen::VectorXd x_u(2), mean(1);
        x_u << 1.0, 1.0;
        cond.conditional_mean(x_u, mean);
        CHECK(mean[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(cond.conditional_covariance()(0, 0) ==
              doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    }
    {
        // Independence: conditioning changes nothing.
        Eigen::MatrixXd v = Eigen::Vector3d(1.5, 2.0, 0.5).asDiagonal();
        ResidualLaw law(v);
        SubsetConditioner cond(law, 0b101);
        Eigen::VectorXd x_u(2), mean(1);
        x_u << 3.0, -2.0;
        cond.conditional_mean(x_u, mean);
        CHECK(mean[0] == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(cond.conditional_covariance()(0, 0) ==
              doctest::Approx(2.0).epsilon(1e-12));
    }
}

TEST_CASE("assembly puts values at their flat indices") {
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(4, 4);
    ResidualLaw law(v);
    SubsetConditioner cond(law, 0b0101); // subset {0, 2}
    Eigen::VectorXd x_u(2), x_c(2), e;
    x_u << 10.0, 20.0;
    x_c << 1.0, 2.0;
    cond.assemble(x_u, x_c, e);
    Eigen::VectorXd expected(4);
    expected << 10.0, 1.0, 20.0, 2.0;
    CHECK((e - expected).norm() == 0.0);
}

TEST_CASE("full-subset conditioning consumes no randomness") {
    Eigen::MatrixXd v(2, 2);
    v << 1.0, 0.3, 0.3, 1.0;
    ResidualLaw law(v);
    SubsetConditioner cond(law, 0b11);
    CHECK(cond.complement_dim() == 0);
    Eigen::VectorXd x_u(2), x_c;
    x_u << 0.1, 0.2;
    RngStream used(77), fresh(77);
    cond.sample_complement(x_u, used, x_c);
    CHECK(x_c.size() == 0);
    CHECK(used.next_u64() == fresh.next_u64());
}

TEST_CASE("conditional sampling reconstructs the joint law") {
    const LinearDynamics dyn = testsup::random_dynamics(404, 2, 1, 2, 0.6);
    ResidualLaw law(dyn.V);
    const int d = law.dimension();
    for (SubsetMask mask : {SubsetMask{0b0011}, SubsetMask{0b1010},
                            SubsetMask{0}, full_mask(4)}) {
        SubsetConditioner cond(law, mask);
        RngStream rng(mask + 1);
        const int n = 200000;
        Eigen::VectorXd x_u, x_c, e;
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
        Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(d, d);
        for (int i = 0; i < n; ++i) {
            cond.sample_subset(rng, x_u);
            cond.sample_complement(x_u, rng, x_c);
            cond.assemble(x_u, x_c, e);
            sum += e;
            outer += e * e.transpose();
        }
        const Eigen::VectorXd mean = sum / n;
        const Eigen::MatrixXd cov =
            outer / n - mean * mean.transpose();
        const double scale = dyn.V.diagonal().maxCoeff();
        CHECK((cov - dyn.V).cwiseAbs().maxCoeff() < 0.025 * scale);
        CHECK(mean.cwiseAbs().maxCoeff() < 0.02 * std::sqrt(scale));
    }
}

TEST_CASE("jittered factorization accepts PSD and rejects indefinite") {
    Eigen::MatrixXd rank_one(2, 2);
    rank_one << 1.0, 1.0, 1.0, 1.0;
    CHECK_NOTHROW((void)cholesky_with_jitter(rank_one, "test"));
    // conditioning on a rank-deficient but PSD subset works via the jitter
    ResidualLaw law(rank_one);
    CHECK_NOTHROW(SubsetConditioner(law, 0b11));

    Eigen::MatrixXd indefinite(2, 2);
    indefinite << 1.0, 2.0, 2.0, 1.0; // eigenvalues 3 and -1
    CHECK_THROWS_AS((void)cholesky_with_jitter(indefinite, "test"),
                    SingularSubmatrix);

    const Eigen::MatrixXd projected = psd_project(indefinite);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(projected);
    CHECK(es.eigenvalues().minCoeff() >= 0.0);
    CHECK(projected(0, 1) == doctest::Approx(projected(1, 0)));
}

TEST_CASE("trajectory rollout and output selection agree") {
    const LinearDynamics dyn = testsup::random_dynamics(505, 2, 1, 3, 0.4);
    LinearModel model(dyn);
    RngStream rng(9);
    Eigen::VectorXd e(model.input_count());
    for (int i = 0; i < e.size(); ++i) {
        e[i] = rng.next_gaussian();
    }
    const Trajectory traj = simulate_trajectory(model, e);
    CHECK(traj.states.size() == 3);
    CHECK(traj.actions.size() == 2);
    CHECK(traj.rewards.size() == 3);
    double total = 0.0;
    for (double r : traj.rewards) {
        total += r;
    }
    CHECK(traj.cumulative_reward == doctest::Approx(total).epsilon(1e-12));

    SimWorkspace ws;
    OutputSelector cum;
    CHECK(simulate_output(model, cum, e, ws) ==
          doctest::Approx(traj.cumulative_reward).epsilon(1e-12));
    CHECK(select_output(traj, cum, dyn.d_s) == traj.cumulative_reward);

    OutputSelector sc;
    sc.kind = OutputSelector::Kind::StateComponent;
    sc.period = 2;
    sc.component = 1;
    CHECK(simulate_output(model, sc, e, ws) ==
          doctest::Approx(traj.states[1][0]).epsilon(1e-12));
    CHECK(select_output(traj, sc, dyn.d_s) == traj.states[1][0]);

    // identical residuals give bit-identical rollouts
    const Trajectory again = simulate_trajectory(model, e);
    for (int t = 0; t < 3; ++t) {
        CHECK((traj.states[t] - again.states[t]).norm() == 0.0);
    }
}

TEST_CASE("state-component output at the first period is the residual shift") {
    const LinearDynamics dyn = testsup::random_dynamics(606, 3, 1, 2, 0.5);
    LinearModel model(dyn);
    SimWorkspace ws;
    OutputSelector sc;
    sc.kind = OutputSelector::Kind::StateComponent;
    sc.period = 1;
    sc.component = 2;
    Eigen::VectorXd e = Eigen::VectorXd::Zero(model.input_count());
    e[1] = 0.7;
    CHECK(simulate_output(model, sc, e, ws) ==
          doctest::Approx(dyn.mu_s[0][1] + 0.7).epsilon(1e-12));
}

TEST_CASE("conditional output draw matches a manual assembly") {
    const LinearDynamics dyn = testsup::random_dynamics(707, 2, 1, 2, 0.5);
    LinearModel model(dyn);
    ResidualLaw law(dyn.V);
    SubsetConditioner cond(law, 0b0110);
    OutputSelector sel;
    SimWorkspace ws;
    Eigen::VectorXd x_u(2);
    x_u << 0.4, -0.2;

    RngStream a(15), b(15);
    const double y = sample_output_given_subset(model, sel, cond, x_u, a, ws);
    Eigen::VectorXd x_c, e;
    cond.sample_complement(x_u, b, x_c);
    cond.assemble(x_u, x_c, e);
    SimWorkspace ws2;
    CHECK(y == simulate_output(model, sel, e, ws2));
}
