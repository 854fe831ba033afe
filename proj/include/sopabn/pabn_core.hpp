#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "sopabn/rng.hpp"

namespace sopabn {

// ---------------------------------------------------------------------------
// Input indexing
// ---------------------------------------------------------------------------

// One random factor: the residual hitting state component n at period t.
// Periods and components are 1-based (t in [1,H], n in [1,d_s]); the flat
// index is 0-based and orders factors period-major.
struct InputIndex {
    int t = 1;
    int n = 1;
    int flat(int d_s) const { return (t - 1) * d_s + (n - 1); }
};

inline int flatten_input(int t, int n, int d_s) {
    return (t - 1) * d_s + (n - 1);
}
inline InputIndex unflatten_input(int flat, int d_s) {
    return InputIndex{flat / d_s + 1, flat % d_s + 1};
}

// A subset of the (at most 63) random factors as a bitmask over flat indices.
using SubsetMask = std::uint64_t;

inline SubsetMask full_mask(int n) {
    return (n >= 64) ? ~0ull : ((1ull << n) - 1ull);
}
inline bool mask_contains(SubsetMask m, int i) { return (m >> i) & 1ull; }
inline int mask_size(SubsetMask m) { return __builtin_popcountll(m); }
std::vector<int> mask_indices(SubsetMask m);

// ---------------------------------------------------------------------------
// Residual law and Gaussian conditioning
// ---------------------------------------------------------------------------

// Joint law of the flattened residual vector: e ~ N(0, V).  Construction
// validates symmetry and positive semi-definiteness (via factorization).
class ResidualLaw {
public:
    ResidualLaw() = default;
    explicit ResidualLaw(Eigen::MatrixXd covariance);

    int dimension() const { return static_cast<int>(covariance_.rows()); }
    const Eigen::MatrixXd& covariance() const { return covariance_; }

private:
    Eigen::MatrixXd covariance_;
};

// Conditioning machinery for one subset U of the residual coordinates:
// marginal sampling of x_U ~ N(0, Sigma_U) and conditional sampling of the
// complement given x_U.  Handles the degenerate ends: U empty (complement
// draw is unconditional) and U full (complement draw is the empty vector and
// consumes no randomness, keeping RNG streams aligned across subset sizes).
class SubsetConditioner {
public:
    SubsetConditioner(const ResidualLaw& law, SubsetMask subset);

    int subset_dim() const { return static_cast<int>(subset_.size()); }
    int complement_dim() const { return static_cast<int>(complement_.size()); }
    int full_dim() const { return subset_dim() + complement_dim(); }
    SubsetMask subset_mask() const { return mask_; }

    // x_U ~ N(0, Sigma_U) via the subset factor.
    void sample_subset(RngStream& rng, Eigen::VectorXd& x_u) const;

    // E[e_{-U} | x_U] = Sigma_{-U,U} Sigma_U^{-1} x_U.
    void conditional_mean(const Eigen::VectorXd& x_u,
                          Eigen::VectorXd& mean_c) const;

    // Conditional covariance Sigma_{-U} - Sigma_{-U,U} Sigma_U^{-1} Sigma_{U,-U}.
    const Eigen::MatrixXd& conditional_covariance() const { return cond_cov_; }

    // Draw e_{-U} | x_U; consumes complement_dim() normals (none when U = I).
    void sample_complement(const Eigen::VectorXd& x_u, RngStream& rng,
                           Eigen::VectorXd& x_c) const;

    // Full residual vector: subset values at their flat indices, complement
    // values filling the remaining indices in flat order.
    void assemble(const Eigen::VectorXd& x_u, const Eigen::VectorXd& x_c,
                  Eigen::VectorXd& e) const;

private:
    SubsetMask mask_ = 0;
    std::vector<int> subset_;     // sorted flat indices in U
    std::vector<int> complement_; // sorted flat indices not in U
    Eigen::MatrixXd subset_factor_;   // lower factor of Sigma_U
    Eigen::MatrixXd cross_gain_;      // Sigma_{-U,U} Sigma_U^{-1}
    Eigen::MatrixXd cond_cov_;
    Eigen::MatrixXd cond_factor_;     // F with F F^T = cond_cov_
};

// ---------------------------------------------------------------------------
// Model interface
// ---------------------------------------------------------------------------

// Which scalar output the sensitivity analysis targets.
struct OutputSelector {
    enum class Kind { CumulativeReward, StateComponent };
    Kind kind = Kind::CumulativeReward;
    int period = 1;    // 1-based, StateComponent only
    int component = 1; // 1-based, StateComponent only
};

// A fully parameterized stochastic decision process: deterministic
// transition/policy/reward maps plus a joint Gaussian residual law.  All
// randomness enters through the residual vector; instances are immutable and
// safe to share across threads.
//
// Period convention: states s_1..s_H; actions a_1..a_{H-1}; rewards
// r_1..r_H with the final reward evaluated at a zero-size action.
class PabnModel {
public:
    virtual ~PabnModel() = default;

    virtual int state_dim() const = 0;
    virtual int action_dim() const = 0;
    virtual int horizon() const = 0;
    virtual const ResidualLaw& residual_law() const = 0;
    int input_count() const { return residual_law().dimension(); }

    // s_1 from the first residual block.
    virtual void initial_state(Eigen::Ref<const Eigen::VectorXd> e1,
                               Eigen::VectorXd& s) const = 0;
    // a_t from s_t, t in [1, H-1].
    virtual void policy_action(int t, const Eigen::VectorXd& s,
                               Eigen::VectorXd& a) const = 0;
    // s_{t+1} from (s_t, a_t, e_{t+1}), t in [1, H-1].
    virtual void step(int t, const Eigen::VectorXd& s,
                      const Eigen::VectorXd& a,
                      Eigen::Ref<const Eigen::VectorXd> e_next,
                      Eigen::VectorXd& s_next) const = 0;
    // r_t(s_t, a_t); at t = H the action has size zero.
    virtual double reward(int t, const Eigen::VectorXd& s,
                          const Eigen::VectorXd& a) const = 0;
};

// Complete rollout record (for inspection and tests; the estimators use the
// allocation-free output path below).
struct Trajectory {
    std::vector<Eigen::VectorXd> states;  // H entries
    std::vector<Eigen::VectorXd> actions; // H-1 entries
    std::vector<double> rewards;          // H entries
    double cumulative_reward = 0.0;
};

// Reusable scratch vectors so repeated simulations perform no heap
// allocation after warm-up.  One workspace per thread/task.
struct SimWorkspace {
    Eigen::VectorXd s, a, s_next;
    Eigen::VectorXd x_u, x_u2, x_c, e;
    std::vector<double> draws; // estimator staging buffer
};

// Deterministic rollout from a fully specified residual vector.
Trajectory simulate_trajectory(const PabnModel& model,
                               const Eigen::VectorXd& residuals);

double select_output(const Trajectory& traj, const OutputSelector& sel,
                     int d_s);

// Same rollout, returning only the selected scalar output.
double simulate_output(const PabnModel& model, const OutputSelector& sel,
                       const Eigen::VectorXd& residuals, SimWorkspace& ws);

// One conditional draw of the output: sample the complement residuals given
// x_U, assemble the full vector, and roll out.
double sample_output_given_subset(const PabnModel& model,
                                  const OutputSelector& sel,
                                  const SubsetConditioner& cond,
                                  const Eigen::VectorXd& x_u, RngStream& rng,
                                  SimWorkspace& ws);

// ---------------------------------------------------------------------------
// Model family (posterior over parameters)
// ---------------------------------------------------------------------------

// A model plus the distribution over its uncertain parameters w.  The
// estimators draw w, instantiate a concrete model, and analyze the output's
// residual sensitivities; families with no uncertain parameters report
// posterior_dim() == 0 and ignore w.
class ModelFamily {
public:
    virtual ~ModelFamily() = default;

    virtual int input_count() const = 0;
    virtual int posterior_dim() const = 0;
    virtual const OutputSelector& output() const = 0;

    virtual Eigen::VectorXd draw_parameters(RngStream& rng) const = 0;
    // Deterministic map from standard normals (quasi-Monte Carlo path).
    virtual Eigen::VectorXd parameters_from_normals(
        const Eigen::VectorXd& z) const = 0;
    virtual std::shared_ptr<const PabnModel> instantiate(
        const Eigen::VectorXd& w) const = 0;
};

} // namespace sopabn
