#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sopabn/allocation.hpp"
#include "sopabn/estimators.hpp"
#include "sopabn/linear_gaussian.hpp"
#include "sopabn/nonlinear_feedback.hpp"
#include "sopabn/pabn_core.hpp"

namespace sopabn {

// Declarative description of one run: which model, which output, which
// estimation algorithm, and the optional experiment blocks the study
// subcommands consume.  Parsing is strict - unknown keys and malformed
// shapes are rejected with the offending path - and serialization is
// canonical (sorted keys, shortest-round-trip numbers), so parse ->
// serialize -> parse is the identity and the serialized form hashes stably.
struct ExperimentConfig {
    enum class ModelKind { Linear, Feedback };
    enum class AlgorithmKind { Nested, Sequential };

    // ---- model
    ModelKind model_kind = ModelKind::Linear;
    LinearDynamics linear;
    bool has_posterior = false;
    std::vector<ParameterSlot> posterior_slots;
    Eigen::VectorXd posterior_mean;
    Eigen::MatrixXd posterior_covariance;
    FeedbackParams feedback;
    PhCorrelation correlation;
    DilutionPolicy dilution;

    OutputSelector output;

    // ---- algorithm
    AlgorithmKind algorithm_kind = AlgorithmKind::Nested;
    NestedBudget nested;
    AllocationOptions sequential;

    std::uint64_t seed = 0;
    int macro_replications = 1;

    bool has_truth = false;
    long long k_truth = 10000;

    // ---- experiment blocks (present only when configured)
    struct AblationSpec {
        bool present = false;
        std::vector<std::array<double, 4>> ratios;
        long long budget = 0;
        int macro_replications = 10;
    };
    struct CompareSpec {
        bool present = false;
        std::vector<long long> budgets;
        std::array<double, 4> ratio{6, 3, 6, 1};
        std::vector<std::string> samplers{"mc"};
        int macro_replications = 10;
    };
    struct DependenceSpec {
        bool present = false;
        std::vector<std::string> names;
        std::vector<Eigen::Vector3d> levels;
        long long simulation_budget = 1000000;
        int macro_replications = 10;
    };
    AblationSpec ablation;
    CompareSpec compare;
    DependenceSpec dependence;

    // Model family for this configuration.
    std::shared_ptr<ModelFamily> make_family() const;
    // Feedback family with the pH loading vector replaced (dependence study).
    std::shared_ptr<ModelFamily> make_family_with_loading(
        const Eigen::Vector3d& l) const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// Canonical JSON text of the fully resolved configuration.
std::string serialize_config(const ExperimentConfig& config);

// FNV-1a hash of the canonical text, as 16 lowercase hex digits.
std::string config_fingerprint(const ExperimentConfig& config);

} // namespace sopabn
