#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sopabn/estimators.hpp"
#include "sopabn/pabn_core.hpp"

namespace sopabn {

// ---------------------------------------------------------------------------
// Running per-pair statistics
// ---------------------------------------------------------------------------

class InteractionTracker {
public:
    explicit InteractionTracker(int n_inputs);

    int n_inputs() const { return n_; }
    const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }
    int pair_index(int i, int j) const; // unordered lookup

    void add(int pair_idx, double delta) { acc_[pair_idx].add(delta); }

    long long count(int pair_idx) const { return acc_[pair_idx].count; }
    double mean(int pair_idx) const { return acc_[pair_idx].mean(); }
    double variance(int pair_idx) const { return acc_[pair_idx].variance(); }
    double sigma(int pair_idx) const; // sqrt of sample variance

private:
    int n_;
    std::vector<std::pair<int, int>> pairs_;
    std::vector<PairAccumulator> acc_;
};

// Two-sided normal interval mean +- z_{alpha/2} sigma / sqrt(N); requires at
// least two observations.
std::pair<double, double> confidence_interval(const InteractionTracker& t,
                                              int pair_idx, double alpha);

// Allocation score: the magnitude of d/dN of the CI half-length,
// z * sigma / (2 N^{3/2}) - the CI shrinkage bought by one more sample.
double ghl_criterion(double sigma, long long count, double z);

// ---------------------------------------------------------------------------
// Group selection
// ---------------------------------------------------------------------------

// One stage-2 allocation decision.  The winning pair is the gHL argmax (ties:
// smaller count, then lexicographic pair); its anchor is whichever element
// appears earlier in the permutation.  The candidate group holds every pair
// {anchor, j} with j after the anchor - exactly the pairs whose precedence
// set equals the anchor's prefix, so two of each contrast's four terms are
// shared across the whole group.  The group keeps the `group_size` highest
// scores (same tie rules); the winning pair always qualifies.
struct GroupSelection {
    int anchor = -1;
    int argmax_pair = -1;
    std::vector<int> members; // pair indices in selection-priority order
};

GroupSelection select_group(const InteractionTracker& tracker,
                            const std::vector<double>& sigma,
                            const std::vector<int>& perm, int group_size,
                            double z);

// ---------------------------------------------------------------------------
// Sequential allocation driver
// ---------------------------------------------------------------------------

struct AllocationOptions {
    // Fixed-length mode: total iterations including the pilot.  Ignored when
    // simulation_budget > 0.
    long long iterations = 0;
    // Pilot length; 0 derives it as max(2, round(pilot_fraction * iterations)).
    long long pilot_iterations = 0;
    int group_size = 2;
    double alpha = 0.1;
    // Sampling of (w, pi): pseudo-random streams, or a (scrambled) Halton
    // sequence mapped through the inverse normal CDF and the Lehmer code.
    bool qmc = false;
    bool scramble = true;
    // Score groups with the pilot's dispersion estimates instead of the
    // continuously updated ones.
    bool freeze_sigma = false;
    // Budget-capped mode: run the pilot until pilot_fraction of this many
    // simulations are spent (at least 2 iterations), then allocate until the
    // budget is exhausted.
    long long simulation_budget = 0;
    double pilot_fraction = 0.02;

    void validate() const;
};

struct Algorithm2Result {
    int n_inputs = 0;
    std::vector<std::pair<int, int>> pairs;
    std::vector<double> estimate;
    std::vector<double> sigma;
    std::vector<double> ci_lo, ci_hi;
    std::vector<long long> counts;
    double alpha = 0.1;
    long long iterations = 0;       // total, including pilot
    long long pilot_iterations = 0; // actual pilot length
    long long stage2_pair_updates = 0;
    long long simulations = 0;
    long long evaluations = 0;
};

// Pilot stage: every pair's contrast each iteration (anchor = smaller
// index), non-nested valuer, per-iteration subset reuse.  Allocation stage:
// per iteration, draw (w, pi), select the group, and update only its pairs;
// the two anchor-side terms are evaluated once and shared through the
// subset memo.  Inherently sequential (each decision depends on all prior
// updates).
Algorithm2Result run_algorithm2(const ModelFamily& family,
                                const AllocationOptions& options,
                                std::uint64_t seed);

// Testing seam: injected valuer and cost, no model.
Algorithm2Result run_algorithm2_with_valuer(int n_inputs,
                                            const IterationValuer& valuer,
                                            const SimulationCost& cost,
                                            const AllocationOptions& options,
                                            std::uint64_t seed);

} // namespace sopabn
