#include "sopabn/pabn_core.hpp"

#include <string>

#include "sopabn/errors.hpp"
#include "sopabn/numerics.hpp"

namespace sopabn {

std::vector<int> mask_indices(SubsetMask m) {
    std::vector<int> out;
    out.reserve(mask_size(m));
    while (m) {
        const int i = __builtin_ctzll(m);
        out.push_back(i);
        m &= m - 1;
    }
    return out;
}

ResidualLaw::ResidualLaw(Eigen::MatrixXd covariance)
    : covariance_(std::move(covariance)) {
    if (covariance_.rows() != covariance_.cols()) {
        throw ConfigError("residual covariance must be square, got " +
                          std::to_string(covariance_.rows()) + "x" +
                          std::to_string(covariance_.cols()));
    }
    const double scale = covariance_.cwiseAbs().maxCoeff();
    const double asym =
        (covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-9 * (scale > 0.0 ? scale : 1.0)) {
        throw ConfigError("residual covariance is not symmetric (max "
                          "asymmetry " + std::to_string(asym) + ")");
    }
    covariance_ = 0.5 * (covariance_ + covariance_.transpose().eval());
    // Verifies positive semi-definiteness; throws only if even the
    // eigenvalue-clamping fallback would be meaningless (NaN entries).
    if (!covariance_.allFinite()) {
        throw ConfigError("residual covariance has non-finite entries");
    }
    (void)psd_sqrt_factor(covariance_);
}

SubsetConditioner::SubsetConditioner(const ResidualLaw& law, SubsetMask subset)
    : mask_(subset) {
    const int d = law.dimension();
    for (int i = 0; i < d; ++i) {
        (mask_contains(subset, i) ? subset_ : complement_).push_back(i);
    }
    const Eigen::MatrixXd& v = law.covariance();
    const int du = subset_dim();
    const int dc = complement_dim();

    if (du > 0) {
        Eigen::MatrixXd sigma_u(du, du);
        for (int r = 0; r < du; ++r)
            for (int c = 0; c < du; ++c)
                sigma_u(r, c) = v(subset_[r], subset_[c]);
        subset_factor_ = cholesky_with_jitter(sigma_u, "subset marginal");

        if (dc > 0) {
            Eigen::MatrixXd cross_uc(du, dc); // Sigma_{U,-U}
            for (int r = 0; r < du; ++r)
                for (int c = 0; c < dc; ++c)
                    cross_uc(r, c) = v(subset_[r], complement_[c]);
            // Solve Sigma_U X = Sigma_{U,-U} through the Cholesky factor,
            // then cross_gain = X^T = Sigma_{-U,U} Sigma_U^{-1}.
            Eigen::MatrixXd x = subset_factor_
                                    .triangularView<Eigen::Lower>()
                                    .solve(cross_uc);
            subset_factor_.triangularView<Eigen::Lower>()
                .transpose()
                .solveInPlace(x);
            cross_gain_ = x.transpose();

            Eigen::MatrixXd sigma_c(dc, dc);
            for (int r = 0; r < dc; ++r)
                for (int c = 0; c < dc; ++c)
                    sigma_c(r, c) = v(complement_[r], complement_[c]);
            cond_cov_ = sigma_c - cross_gain_ * cross_uc;
            cond_cov_ = 0.5 * (cond_cov_ + cond_cov_.transpose().eval());
        } else {
            cross_gain_.resize(0, du);
            cond_cov_.resize(0, 0);
        }
    } else {
        subset_factor_.resize(0, 0);
        cross_gain_.resize(dc, 0);
        cond_cov_ = v;
    }
    cond_factor_ = (cond_cov_.rows() > 0) ? psd_sqrt_factor(cond_cov_)
                                          : Eigen::MatrixXd(0, 0);
}

void SubsetConditioner::sample_subset(RngStream& rng,
                                      Eigen::VectorXd& x_u) const {
    const int du = subset_dim();
    x_u.resize(du);
    if (du == 0) return;
    Eigen::VectorXd z(du);
    for (int i = 0; i < du; ++i) z[i] = rng.next_gaussian();
    x_u.noalias() = subset_factor_.triangularView<Eigen::Lower>() * z;
}

void SubsetConditioner::conditional_mean(const Eigen::VectorXd& x_u,
                                         Eigen::VectorXd& mean_c) const {
    mean_c.resize(complement_dim());
    if (complement_dim() == 0) return;
    if (subset_dim() == 0) {
        mean_c.setZero();
    } else {
        mean_c.noalias() = cross_gain_ * x_u;
    }
}

void SubsetConditioner::sample_complement(const Eigen::VectorXd& x_u,
                                          RngStream& rng,
                                          Eigen::VectorXd& x_c) const {
    const int dc = complement_dim();
    x_c.resize(dc);
    if (dc == 0) return; // U = I: empty draw, no RNG consumption
    Eigen::VectorXd z(dc);
    for (int i = 0; i < dc; ++i) z[i] = rng.next_gaussian();
    if (subset_dim() == 0) {
        x_c.noalias() = cond_factor_ * z;
    } else {
        x_c.noalias() = cross_gain_ * x_u;
        x_c.noalias() += cond_factor_ * z;
    }
}

void SubsetConditioner::assemble(const Eigen::VectorXd& x_u,
                                 const Eigen::VectorXd& x_c,
                                 Eigen::VectorXd& e) const {
    e.resize(full_dim());
    for (int i = 0; i < subset_dim(); ++i) e[subset_[i]] = x_u[i];
    for (int i = 0; i < complement_dim(); ++i) e[complement_[i]] = x_c[i];
}

namespace {

void check_finite(const Eigen::VectorXd& s, int t) {
    if (!s.allFinite()) {
        throw NonFiniteState("state became non-finite at period " +
                             std::to_string(t));
    }
}

} // namespace

Trajectory simulate_trajectory(const PabnModel& model,
                               const Eigen::VectorXd& residuals) {
    const int h = model.horizon();
    const int d_s = model.state_dim();
    if (residuals.size() != static_cast<Eigen::Index>(d_s) * h) {
        throw ConfigError("residual vector has size " +
                          std::to_string(residuals.size()) + ", expected " +
                          std::to_string(d_s * h));
    }
    Trajectory traj;
    traj.states.reserve(h);
    traj.actions.reserve(h - 1);
    traj.rewards.reserve(h);

    Eigen::VectorXd s, a, s_next;
    model.initial_state(residuals.head(d_s), s);
    check_finite(s, 1);
    for (int t = 1; t <= h; ++t) {
        traj.states.push_back(s);
        if (t < h) {
            model.policy_action(t, s, a);
            traj.actions.push_back(a);
        } else {
            a.resize(0);
        }
        const double r = model.reward(t, s, a);
        traj.rewards.push_back(r);
        traj.cumulative_reward += r;
        if (t < h) {
            model.step(t, s, a, residuals.segment(static_cast<Eigen::Index>(t) * d_s, d_s),
                       s_next);
            s.swap(s_next);
            check_finite(s, t + 1);
        }
    }
    return traj;
}

double select_output(const Trajectory& traj, const OutputSelector& sel,
                     int d_s) {
    if (sel.kind == OutputSelector::Kind::CumulativeReward) {
        return traj.cumulative_reward;
    }
    if (sel.period < 1 || sel.period > static_cast<int>(traj.states.size()) ||
        sel.component < 1 || sel.component > d_s) {
        throw ConfigError("state-component selector (" +
                          std::to_string(sel.period) + "," +
                          std::to_string(sel.component) + ") out of range");
    }
    return traj.states[sel.period - 1][sel.component - 1];
}

double simulate_output(const PabnModel& model, const OutputSelector& sel,
                       const Eigen::VectorXd& residuals, SimWorkspace& ws) {
    const int h = model.horizon();
    const int d_s = model.state_dim();
    const bool want_reward = sel.kind == OutputSelector::Kind::CumulativeReward;

    model.initial_state(residuals.head(d_s), ws.s);
    check_finite(ws.s, 1);
    double y = 0.0;
    for (int t = 1; t <= h; ++t) {
        if (!want_reward && t == sel.period) {
            if (sel.component < 1 || sel.component > d_s) {
                throw ConfigError("state-component selector out of range");
            }
            return ws.s[sel.component - 1];
        }
        if (t < h) {
            model.policy_action(t, ws.s, ws.a);
        } else {
            ws.a.resize(0);
        }
        if (want_reward) y += model.reward(t, ws.s, ws.a);
        if (t < h) {
            model.step(t, ws.s, ws.a,
                       residuals.segment(static_cast<Eigen::Index>(t) * d_s, d_s), ws.s_next);
            ws.s.swap(ws.s_next);
            check_finite(ws.s, t + 1);
        }
    }
    if (!want_reward) {
        throw ConfigError("state-component selector period " +
                          std::to_string(sel.period) + " beyond horizon");
    }
    return y;
}

double sample_output_given_subset(const PabnModel& model,
                                  const OutputSelector& sel,
                                  const SubsetConditioner& cond,
                                  const Eigen::VectorXd& x_u, RngStream& rng,
                                  SimWorkspace& ws) {
    cond.sample_complement(x_u, rng, ws.x_c);
    cond.assemble(x_u, ws.x_c, ws.e);
    return simulate_output(model, sel, ws.e, ws);
}

} // namespace sopabn
