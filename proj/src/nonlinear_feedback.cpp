#include "sopabn/nonlinear_feedback.hpp"

#include <cmath>
#include <string>

#include "sopabn/errors.hpp"

namespace sopabn {

void FeedbackParams::validate() const {
    auto bad = [](const std::string& what) {
        throw ConfigError("feedback model: " + what);
    };
    if (r_g < 0 || r_c < 0 || r_d < 0 || r_p < 0) bad("rates must be >= 0");
    if (step <= 0) bad("integrator step must be > 0");
    if (period <= 0) bad("period length must be > 0");
    const double ratio = period / step;
    if (std::abs(ratio - std::round(ratio)) > 1e-9) {
        bad("period must be an integer multiple of the integrator step");
    }
    if (horizon < 2) bad("horizon must be >= 2");
    if ((initial.array() < 0).any()) bad("initial state must be nonnegative");
}

void PhCorrelation::validate() const {
    if (sigma_ph2 < 0) {
        throw ConfigError("feedback model: sigma_ph2 must be >= 0");
    }
    if ((sigma_idio2.array() <= 0).any()) {
        throw ConfigError(
            "feedback model: idiosyncratic variances must be > 0");
    }
}

void DilutionPolicy::validate() const {
    if (fraction < 0 || fraction >= 1) {
        throw ConfigError("dilution fraction must lie in [0,1)");
    }
    if (c_dil < 0 || c_p < 0) {
        throw ConfigError("dilution cost coefficients must be >= 0");
    }
}

Eigen::MatrixXd build_covariance(const PhCorrelation& corr, int horizon) {
    corr.validate();
    Eigen::Matrix3d block = corr.sigma_ph2 * (corr.l * corr.l.transpose());
    block += corr.sigma_idio2.asDiagonal();
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(3 * horizon, 3 * horizon);
    for (int t = 0; t < horizon; ++t) {
        v.block<3, 3>(3 * t, 3 * t) = block;
    }
    return v;
}

namespace {

// Logistic term of the growth equation, stable for any argument sign.
inline double sigmoid_neg(double x) {
    // returns 1 / (1 + exp(x)) without overflow
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(x));
}

inline Eigen::Vector3d kinetics(const FeedbackParams& p,
                                const Eigen::Vector3d& v) {
    const double s = v[0], prod = v[1], inhib = v[2];
    const double growth = p.r_g * sigmoid_neg(p.a * (inhib - p.b));
    return {growth - p.r_c * s, p.r_c * s - p.r_d * prod, p.r_p * prod};
}

} // namespace

Eigen::Vector3d integrate_period(const FeedbackParams& p,
                                 Eigen::Vector3d v) {
    const int steps = static_cast<int>(std::llround(p.period / p.step));
    const double h = p.step;
    for (int i = 0; i < steps; ++i) {
        const Eigen::Vector3d k1 = kinetics(p, v);
        const Eigen::Vector3d k2 = kinetics(p, v + (h / 2) * k1);
        const Eigen::Vector3d k3 = kinetics(p, v + (h / 2) * k2);
        const Eigen::Vector3d k4 = kinetics(p, v + h * k3);
        v += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    if (!v.allFinite()) {
        throw NonFiniteState("feedback kinetics diverged within a period");
    }
    return v;
}

FeedbackModel::FeedbackModel(FeedbackParams params, PhCorrelation corr,
                             DilutionPolicy policy)
    : params_(params), corr_(corr), policy_(policy) {
    params_.validate();
    corr_.validate();
    policy_.validate();
    law_ = ResidualLaw(build_covariance(corr_, params_.horizon));
}

void FeedbackModel::initial_state(Eigen::Ref<const Eigen::VectorXd> e1,
                                  Eigen::VectorXd& s) const {
    s = params_.initial + e1;
    s = s.cwiseMax(0.0);
}

void FeedbackModel::policy_action(int, const Eigen::VectorXd&,
                                  Eigen::VectorXd& a) const {
    a.resize(1);
    a[0] = policy_.fraction;
}

void FeedbackModel::step(int, const Eigen::VectorXd& s,
                         const Eigen::VectorXd& a,
                         Eigen::Ref<const Eigen::VectorXd> e_next,
                         Eigen::VectorXd& s_next) const {
    Eigen::Vector3d v(s[0], s[1], (1.0 - a[0]) * s[2]);
    v = integrate_period(params_, v);
    s_next.resize(3);
    s_next = v + e_next;
    s_next = s_next.cwiseMax(0.0);
}

double FeedbackModel::reward(int t, const Eigen::VectorXd& s,
                             const Eigen::VectorXd& a) const {
    if (t < params_.horizon) {
        // cost of the inhibitor concentration about to be removed
        return -policy_.c_dil * a[0] * s[2];
    }
    return policy_.c_p * s[1]; // final product density
}

FeedbackFamily::FeedbackFamily(FeedbackParams params, PhCorrelation corr,
                               DilutionPolicy policy, OutputSelector output)
    : model_(std::make_shared<FeedbackModel>(params, corr, policy)),
      output_(output) {}

} // namespace sopabn
