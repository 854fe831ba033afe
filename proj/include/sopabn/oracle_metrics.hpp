#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "sopabn/linear_gaussian.hpp"
#include "sopabn/pabn_core.hpp"

namespace sopabn {

// Exact value function handle: subset -> g(U).  Callers supply the linear
// model's closed form or any other exactly computable g.
using SubsetValueFn = std::function<double(SubsetMask)>;

// All 2^n subset values, indexed by mask.  The single table feeds every
// exact index computation below (the dominant cost is shared once).
std::vector<double> exact_value_table(const SubsetValueFn& g, int n);

struct PairTable {
    std::vector<std::pair<int, int>> pairs;
    std::vector<double> value;
};

// Subset-form pair index: for the pair {i,j},
//   sum over U not containing i,j of
//     (n-|U|-2)! |U|! / (n-1)! * [g(U+i+j) - g(U+i) - g(U+j) + g(U)].
// Weights go through log-gamma and terms through compensated summation, so
// the enumeration stays accurate up to the n <= 20 size limit.
PairTable exact_shapley_owen(const SubsetValueFn& g, int n);
PairTable exact_shapley_owen_from_table(const std::vector<double>& table,
                                        int n);

// First-order effect: sum over U not containing i of
//   (n-|U|-1)! |U|! / n! * [g(U+i) - g(U)].
std::vector<double> exact_shapley_effects(const SubsetValueFn& g, int n);
std::vector<double> exact_shapley_effects_from_table(
    const std::vector<double>& table, int n);

// Average of the four-term contrast over all n! permutations (anchor =
// smaller index).  Agrees with the subset form to roundoff; n <= 8.
PairTable exact_shapley_owen_via_permutations(const SubsetValueFn& g, int n);

// ---------------------------------------------------------------------------
// Posterior-averaged ground truth (linear families)
// ---------------------------------------------------------------------------

struct GroundTruth {
    std::vector<std::pair<int, int>> pairs;
    std::vector<double> pair_value;     // mean exact index over draws
    std::vector<double> pair_se;        // Monte Carlo SE of that mean
    std::vector<double> single_value;   // first-order effects, averaged
    double variance = 0.0;              // mean Var(Y | w)
    long long k_truth = 0;
};

// Draw K parameter vectors, compute each draw's exact index table from the
// closed-form value function, and average.  Requires the cumulative-reward
// output (the closed form exists only there).  A family without a posterior
// collapses to a single draw with zero standard error.
GroundTruth posterior_truth(const LinearFamily& family, long long k_truth,
                            std::uint64_t seed, bool parallel = true);

// Mean squared error between two pair tables covering the same pairs.
double mean_squared_error(const std::vector<std::pair<int, int>>& pairs_a,
                          const std::vector<double>& a,
                          const std::vector<std::pair<int, int>>& pairs_b,
                          const std::vector<double>& b);

} // namespace sopabn
