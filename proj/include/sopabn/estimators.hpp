#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "sopabn/pabn_core.hpp"
#include "sopabn/rng.hpp"

namespace sopabn {

// ---------------------------------------------------------------------------
// Random-stream labels
// ---------------------------------------------------------------------------
// Every logical random object derives its stream from (master seed, fixed
// label path), never from execution order.  This is what makes results
// independent of caching, thread count, and evaluation order.
inline constexpr std::uint64_t kAlgorithm1Label = 1;
inline constexpr std::uint64_t kAlgorithm2Label = 2;
inline constexpr std::uint64_t kTruthLabel = 3;
inline constexpr std::uint64_t kScrambleLabel = 9;
inline constexpr std::uint64_t kMacroReplicationLabel = 17;
// Within an algorithm's root stream:
inline constexpr std::uint64_t kParameterStreams = 1;  // .derive(k) per draw
inline constexpr std::uint64_t kPermutationStreams = 2; // .derive(iteration)
inline constexpr std::uint64_t kEvaluationStreams = 3;  // .derive(iteration).derive(mask)

// ---------------------------------------------------------------------------
// Pairs and precedence
// ---------------------------------------------------------------------------

// Unordered pairs {i,j}, i < j, in lexicographic order.
std::vector<std::pair<int, int>> all_pairs(int n);

// Inputs strictly preceding `anchor` in the permutation, excluding `other`.
SubsetMask precedence_mask(const std::vector<int>& perm, int anchor,
                           int other);

// ---------------------------------------------------------------------------
// Value-function estimators
// ---------------------------------------------------------------------------

// Nested two-level estimate of g(U) = Var(E[Y|e_U]) from raw draws
// y[n1][n2] (row-major): between-group sample variance of the inner means
// minus the within-group correction (1/(N_O N_I (N_I-1))) sum (y - mean_n1)^2.
// With a single inner draw the correction is undefined and is taken as 0,
// which biases every subset's estimate upward by the same E[Var(Y|e_U)]
// mixture; the bias cancels inside 4-term interaction contrasts as long as
// every subset - including the empty one - is estimated the same way.
double nested_estimate_from_draws(const std::vector<double>& y, int n_outer,
                                  int n_inner);

// Nested estimator: N_O conditioning draws x_U, N_I conditional outputs
// each.  The empty subset is estimated like any other (see above); the full
// subset degenerates to the plain variance estimator.  Cost: N_O * N_I
// simulations.
double nested_value(const PabnModel& model, const OutputSelector& sel,
                    const SubsetConditioner& cond, int n_outer, int n_inner,
                    RngStream& rng, SimWorkspace& ws);
double nested_value(const PabnModel& model, const OutputSelector& sel,
                    SubsetMask subset, int n_outer, int n_inner,
                    RngStream& rng, SimWorkspace& ws);

// Single-shot estimator y1 (y2 - y3) with y1, y2 | x_U^(1) and y3 | x_U^(2);
// unbiased for g(U) at 3 simulations.  The empty subset returns exactly 0
// (the known value, at zero cost and zero variance) and consumes no
// randomness.  Draw order: x_U^(1), x_U^(2), y1, y2, y3.
double nonnested_value(const PabnModel& model, const OutputSelector& sel,
                       const SubsetConditioner& cond, RngStream& rng,
                       SimWorkspace& ws);
double nonnested_value(const PabnModel& model, const OutputSelector& sel,
                       SubsetMask subset, RngStream& rng, SimWorkspace& ws);

// ---------------------------------------------------------------------------
// Per-iteration memoization
// ---------------------------------------------------------------------------

// Evaluates subsets through a raw valuer, recording each distinct subset's
// estimate for reuse within one (w, pi) iteration.  Each subset evaluation
// draws from a stream derived from (iteration stream, subset mask), so a
// repeated evaluation of the same subset would reproduce the same value
// bit-exactly - the cache changes cost, never results.
using RawSubsetValuer = std::function<double(SubsetMask, RngStream&)>;
using SimulationCost = std::function<long long(SubsetMask)>;

class CachedSubsetEvaluator {
public:
    explicit CachedSubsetEvaluator(SimulationCost cost, bool use_cache = true);

    // Install the valuer and evaluation-stream root for the next iteration
    // and clear the per-iteration memo.
    void begin_iteration(RawSubsetValuer raw, RngStream eval_root);

    double value(SubsetMask subset);

    long long evaluations() const { return evaluations_; } // raw calls, cumulative
    long long simulations() const { return simulations_; }
    long long iteration_evaluations() const { return iteration_evaluations_; }

private:
    SimulationCost cost_;
    bool use_cache_;
    RawSubsetValuer raw_;
    RngStream root_;
    std::vector<std::pair<SubsetMask, double>> memo_;
    long long evaluations_ = 0;
    long long simulations_ = 0;
    long long iteration_evaluations_ = 0;
};

// Four-term interaction contrast for the pair {anchor, other} under `perm`:
// with P the inputs before `anchor` excluding `other`,
//   delta = g(P + anchor + other) - g(P + anchor) - g(P + other) + g(P).
double delta_pair(CachedSubsetEvaluator& ev, const std::vector<int>& perm,
                  int anchor, int other);

// ---------------------------------------------------------------------------
// Algorithm drivers
// ---------------------------------------------------------------------------

struct PairAccumulator {
    double sum = 0.0;
    double sum_sq = 0.0;
    long long count = 0;

    void add(double x) {
        sum += x;
        sum_sq += x * x;
        ++count;
    }
    void merge(const PairAccumulator& o) {
        sum += o.sum;
        sum_sq += o.sum_sq;
        count += o.count;
    }
    double mean() const;
    double variance() const; // sample variance, needs count >= 2
};

struct NestedBudget {
    long long k_outer = 1;  // posterior draws
    long long m_inner = 1;  // permutations per draw
    int n_outer = 2;        // conditioning draws per value estimate
    int n_inner = 1;        // outputs per conditioning draw

    long long iterations() const { return k_outer * m_inner; }
    void validate() const;
};

struct PairEstimates {
    int n_inputs = 0;
    std::vector<std::pair<int, int>> pairs;
    std::vector<double> estimate;       // mean interaction contribution
    std::vector<double> delta_variance; // sample variance of the contributions
    std::vector<long long> counts;
    long long iterations = 0;
    long long simulations = 0;
    long long evaluations = 0;
};

// Equal-allocation estimator: K posterior draws x M permutations each; every
// pair's contrast is accumulated each iteration with the nested valuer, all
// subset estimates shared across pairs within the iteration.  The anchor of
// each pair is its smaller index (an unbiased choice: anchoring either fixed
// element yields the subset-form weights exactly).
//
// Iterations are processed in fixed-size blocks; each block accumulates its
// partial sums independently and blocks merge in index order, so results are
// bit-identical whether blocks run on one thread or many.
PairEstimates run_algorithm1(const ModelFamily& family,
                             const NestedBudget& budget, std::uint64_t seed,
                             bool parallel = true, bool use_cache = true);

// Same driver with an injected valuer (testing seam).  The valuer sees the
// subset, the global iteration index, and the subset's derived stream.
using IterationValuer =
    std::function<double(SubsetMask, long long iteration, RngStream&)>;

PairEstimates run_algorithm1_with_valuer(int n_inputs,
                                         const IterationValuer& valuer,
                                         const SimulationCost& cost,
                                         long long k_outer, long long m_inner,
                                         std::uint64_t seed,
                                         bool parallel = true,
                                         bool use_cache = true);

} // namespace sopabn
