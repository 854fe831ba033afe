#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sopabn/pabn_core.hpp"
#include "sopabn/sampling.hpp"

namespace sopabn {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

// Linear Gaussian process with a linear feedback policy and linear rewards:
//
//   s_1     = mu_s[1] + e_1
//   a_t     = mu_a[t] + theta_t^T (s_t - mu_s[t]),            t = 1..H-1
//   s_{t+1} = mu_s[t+1] + beta_s_t^T (s_t - mu_s[t])
//                       + beta_a_t^T (a_t - mu_a[t]) + e_{t+1}
//   r_t     = m_t + b_t . a_t + c_t . s_t   (a_H = 0, so r_H = m_H + c_H . s_H)
//   e ~ N(0, V) over the flattened d_s * H residual vector.
//
// Shapes: beta_s_t is d_s x d_s, beta_a_t is d_a x d_s, theta_t is d_s x d_a;
// all are applied transposed as written above.
struct LinearDynamics {
    int d_s = 0, d_a = 0, horizon = 0;
    std::vector<Eigen::VectorXd> mu_s;   // H entries of size d_s
    std::vector<Eigen::VectorXd> mu_a;   // H-1 entries of size d_a
    std::vector<Eigen::MatrixXd> beta_s; // H-1 entries, d_s x d_s
    std::vector<Eigen::MatrixXd> beta_a; // H-1 entries, d_a x d_s
    std::vector<Eigen::MatrixXd> theta;  // H-1 entries, d_s x d_a
    std::vector<double> m;               // H entries
    std::vector<Eigen::VectorXd> b;      // H entries of size d_a (last unused)
    std::vector<Eigen::VectorXd> c;      // H entries of size d_s
    Eigen::MatrixXd V;                   // d_e x d_e, d_e = d_s * horizon

    int input_count() const { return d_s * horizon; }
    void validate() const; // throws ConfigError on any shape inconsistency
};

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

// Affine representation of the cumulative reward: Y = gamma + R . e, where
// block t' of R collects how residual e_{t'} propagates through the
// closed-loop transition matrices A_t = beta_s_t^T + beta_a_t^T theta_t^T
// into every later reward.
struct PathwayDecomposition {
    double gamma = 0.0;
    Eigen::RowVectorXd R; // d_e coefficients, period-major blocks
    std::vector<Eigen::RowVectorXd> alpha; // H per-period reward sensitivities
};

PathwayDecomposition decompose(const LinearDynamics& dyn);

// Var(Y) = R V R^T.
double analytic_variance(const PathwayDecomposition& dec,
                         const Eigen::MatrixXd& V);

// Explained variance g(U) = Var(E[Y | e_U]).  Exact endpoints g(empty) = 0
// and g(I) = Var(Y); in between, g(U) = u Sigma_U u^T with
// u = R_{-U} Sigma_{-U,U} Sigma_U^{-1} + R_U computed via one factorization
// and solve.  Values are not clamped; a result below -1e-12 * Var(Y) raises
// an error since it indicates a broken covariance rather than roundoff.
double analytic_value_function(const PathwayDecomposition& dec,
                               const Eigen::MatrixXd& V, SubsetMask subset);

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

class LinearModel final : public PabnModel {
public:
    explicit LinearModel(LinearDynamics dyn);

    int state_dim() const override { return dyn_.d_s; }
    int action_dim() const override { return dyn_.d_a; }
    int horizon() const override { return dyn_.horizon; }
    const ResidualLaw& residual_law() const override { return law_; }
    const LinearDynamics& dynamics() const { return dyn_; }

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
    LinearDynamics dyn_;
    ResidualLaw law_;
};

// ---------------------------------------------------------------------------
// Family: uncertain parameters drawn from a Gaussian posterior
// ---------------------------------------------------------------------------

// Addresses one scalar entry of LinearDynamics by name, e.g.
// "beta_s[1][2][3]" (period, row, column; all 1-based), "mu_s[2][1]",
// "m[1]", "V[1][2]".  V slots write both symmetric entries and trigger a
// positive-semidefinite projection after embedding.
struct ParameterSlot {
    enum class Field { MuS, MuA, BetaS, BetaA, Theta, M, B, C, V };
    Field field = Field::M;
    int t = 0, r = 0, c = 0; // 0-based after parsing
    std::string text;        // original spelling
};

ParameterSlot parse_parameter_slot(const std::string& name);

// Write w into the named slots of a dynamics copy; projects V if touched.
LinearDynamics embed_parameters(const LinearDynamics& base,
                                const std::vector<ParameterSlot>& slots,
                                const Eigen::VectorXd& w);

// Read the current slot values out of a dynamics instance.
Eigen::VectorXd extract_parameters(const LinearDynamics& dyn,
                                   const std::vector<ParameterSlot>& slots);

class LinearFamily final : public ModelFamily {
public:
    // No uncertain parameters: the posterior is empty and draw_parameters
    // returns a zero-length vector.
    LinearFamily(LinearDynamics base, OutputSelector output);
    // Gaussian posterior over the named slots.
    LinearFamily(LinearDynamics base, OutputSelector output,
                 std::vector<ParameterSlot> slots, Eigen::VectorXd mean,
                 const Eigen::MatrixXd& covariance);

    int input_count() const override { return base_.input_count(); }
    int posterior_dim() const override { return posterior_.dimension(); }
    const OutputSelector& output() const override { return output_; }

    Eigen::VectorXd draw_parameters(RngStream& rng) const override;
    Eigen::VectorXd parameters_from_normals(
        const Eigen::VectorXd& z) const override;
    std::shared_ptr<const PabnModel> instantiate(
        const Eigen::VectorXd& w) const override;

    const LinearDynamics& base_dynamics() const { return base_; }
    const std::vector<ParameterSlot>& slots() const { return slots_; }
    const GaussianSampler& posterior() const { return posterior_; }

    // Concrete dynamics for a parameter draw (used by the exact oracle).
    LinearDynamics dynamics_for(const Eigen::VectorXd& w) const;

private:
    LinearDynamics base_;
    OutputSelector output_;
    std::vector<ParameterSlot> slots_;
    GaussianSampler posterior_;
    std::shared_ptr<const PabnModel> fixed_model_; // cached when no posterior
};

} // namespace sopabn
