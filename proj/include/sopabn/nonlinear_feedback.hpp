#pragma once

#include <memory>

#include <Eigen/Dense>

#include "sopabn/pabn_core.hpp"

namespace sopabn {

// ---------------------------------------------------------------------------
// Mature cell / progenitor negative-feedback culture
// ---------------------------------------------------------------------------
//
// Three states: progenitor density S, product (mature cell) density P, and
// inhibitor concentration I.  Within each period the deterministic kinetics
//
//   dS/dt = r_g / (1 + exp(a (I - b))) - r_c S
//   dP/dt = r_c S - r_d P
//   dI/dt = r_p P
//
// run for `period` time units (classical 4th-order Runge-Kutta with step
// `step`); Gaussian residuals are added at period boundaries and states are
// clamped to stay nonnegative.  The control action dilutes the inhibitor by
// a fixed fraction at the start of each period.

struct FeedbackParams {
    double r_g = 1.0; // growth rate
    double r_c = 0.3; // progenitor-to-product conversion rate
    double r_d = 0.1; // product death rate
    double r_p = 0.2; // inhibitor production rate
    double a = 2.0;   // inhibitor sensitivity
    double b = 1.5;   // inhibitor threshold
    double period = 1.0;
    double step = 0.01;
    int horizon = 5;
    Eigen::Vector3d initial{1.0, 0.0, 0.0}; // (S, P, I)

    void validate() const; // throws ConfigError
};

// Residual dependence through a shared culture-pH shock: the period-t
// residual for state component i is l_i * e_t_ph + idiosyncratic noise, so
// each 3x3 period block of the covariance is l l^T sigma_ph2 + diag(sigma_idio2)
// and distinct periods are independent.
struct PhCorrelation {
    Eigen::Vector3d l{0.0, 0.0, 0.0};
    double sigma_ph2 = 0.04;
    Eigen::Vector3d sigma_idio2{0.04, 0.04, 0.04};

    void validate() const;
};

// Constant-fraction inhibitor dilution with a linear removal cost; the
// output is the final product density minus the summed dilution costs.
struct DilutionPolicy {
    double fraction = 0.5; // inhibitor fraction removed each period, in [0,1)
    double c_dil = 0.1;    // cost per unit of removed-from concentration
    double c_p = 1.0;      // value per unit of final product density

    void validate() const;
};

// Block-diagonal residual covariance over the flattened 3*horizon vector.
Eigen::MatrixXd build_covariance(const PhCorrelation& corr, int horizon);

// Deterministic kinetics over one period (no dilution, no noise).
Eigen::Vector3d integrate_period(const FeedbackParams& params,
                                 Eigen::Vector3d state);

class FeedbackModel final : public PabnModel {
public:
    FeedbackModel(FeedbackParams params, PhCorrelation corr,
                  DilutionPolicy policy);

    int state_dim() const override { return 3; }
    int action_dim() const override { return 1; }
    int horizon() const override { return params_.horizon; }
    const ResidualLaw& residual_law() const override { return law_; }

    const FeedbackParams& params() const { return params_; }
    const DilutionPolicy& policy() const { return policy_; }

    void initial_state(Eigen::Ref<const Eigen::VectorXd> e1,
                       Eigen::VectorXd& s) const override;
    void policy_action(int t, const Eigen::VectorXd& s,
                       Eigen::VectorXd& a) const override;
    void step(int t, const Eigen::VectorXd& s, const Eigen::VectorXd& a,
              Eigen::Ref<const Eigen::VectorXd> e_next,
              Eigen::VectorXd& s_next) const override;
    double reward(int t, const Eigen::VectorXd& s,
                  const Eigen::VectorXd& a) const override;

private:
    FeedbackParams params_;
    PhCorrelation corr_;
    DilutionPolicy policy_;
    ResidualLaw law_;
};

// Fixed-parameter family (no posterior): every draw instantiates the same
// shared model.
class FeedbackFamily final : public ModelFamily {
public:
    FeedbackFamily(FeedbackParams params, PhCorrelation corr,
                   DilutionPolicy policy, OutputSelector output);

    int input_count() const override { return 3 * model_->horizon(); }
    int posterior_dim() const override { return 0; }
    const OutputSelector& output() const override { return output_; }

    Eigen::VectorXd draw_parameters(RngStream&) const override {
        return Eigen::VectorXd(0);
    }
    Eigen::VectorXd parameters_from_normals(
        const Eigen::VectorXd&) const override {
        return Eigen::VectorXd(0);
    }
    std::shared_ptr<const PabnModel> instantiate(
        const Eigen::VectorXd&) const override {
        return model_;
    }

private:
    std::shared_ptr<const FeedbackModel> model_;
    OutputSelector output_;
};

} // namespace sopabn
