#include "sopabn/oracle_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sopabn/errors.hpp"
#include "sopabn/estimators.hpp"

namespace sopabn {

namespace {

void check_size(int n, int limit, const char* what) {
    if (n < 1 || n > limit) {
        throw SizeLimit(std::string(what) + " supports 1 <= n <= " +
                        std::to_string(limit) + ", got " + std::to_string(n));
    }
}

// Compensated (Kahan) accumulator: the subset sums mix O(2^n) terms whose
// weights span many orders of magnitude.
struct Kahan {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

double log_factorial(int k) { return std::lgamma(static_cast<double>(k) + 1.0); }

} // namespace

std::vector<double> exact_value_table(const SubsetValueFn& g, int n) {
    check_size(n, 20, "exact value table");
    const std::size_t size = 1ull << n;
    std::vector<double> table(size);
    for (std::size_t mask = 0; mask < size; ++mask) {
        table[mask] = g(static_cast<SubsetMask>(mask));
    }
    return table;
}

PairTable exact_shapley_owen_from_table(const std::vector<double>& table,
                                        int n) {
    check_size(n, 20, "subset-form pair index");
    if (table.size() != (1ull << n)) {
        throw ConfigError("value table size does not match input count");
    }
    // weight[u] = (n-u-2)! u! / (n-1)!
    std::vector<double> weight(static_cast<std::size_t>(n > 1 ? n - 1 : 0));
    for (int u = 0; u <= n - 2; ++u) {
        weight[static_cast<std::size_t>(u)] =
            std::exp(log_factorial(n - u - 2) + log_factorial(u) -
                     log_factorial(n - 1));
    }

    PairTable out;
    out.pairs = all_pairs(n);
    out.value.resize(out.pairs.size());
    const SubsetMask everything = full_mask(n);
    for (std::size_t p = 0; p < out.pairs.size(); ++p) {
        const auto [i, j] = out.pairs[p];
        const SubsetMask bi = 1ull << i, bj = 1ull << j;
        const SubsetMask rest = everything & ~(bi | bj);
        Kahan acc;
        // enumerate subsets of `rest` (including the empty set)
        SubsetMask u = 0;
        while (true) {
            const double contrast = table[u | bi | bj] - table[u | bi] -
                                    table[u | bj] + table[u];
            acc.add(weight[static_cast<std::size_t>(mask_size(u))] * contrast);
            if (u == rest) break;
            u = (u - rest) & rest; // next subset of rest
        }
        out.value[p] = acc.sum;
    }
    return out;
}

PairTable exact_shapley_owen(const SubsetValueFn& g, int n) {
    return exact_shapley_owen_from_table(exact_value_table(g, n), n);
}

std::vector<double> exact_shapley_effects_from_table(
    const std::vector<double>& table, int n) {
    check_size(n, 20, "first-order effects");
    if (table.size() != (1ull << n)) {
        throw ConfigError("value table size does not match input count");
    }
    std::vector<double> weight(static_cast<std::size_t>(n));
    for (int u = 0; u <= n - 1; ++u) {
        weight[static_cast<std::size_t>(u)] = std::exp(
            log_factorial(n - u - 1) + log_factorial(u) - log_factorial(n));
    }
    std::vector<double> out(static_cast<std::size_t>(n));
    const SubsetMask everything = full_mask(n);
    for (int i = 0; i < n; ++i) {
        const SubsetMask bi = 1ull << i;
        const SubsetMask rest = everything & ~bi;
        Kahan acc;
        SubsetMask u = 0;
        while (true) {
            acc.add(weight[static_cast<std::size_t>(mask_size(u))] *
                    (table[u | bi] - table[u]));
            if (u == rest) break;
            u = (u - rest) & rest;
        }
        out[static_cast<std::size_t>(i)] = acc.sum;
    }
    return out;
}

std::vector<double> exact_shapley_effects(const SubsetValueFn& g, int n) {
    return exact_shapley_effects_from_table(exact_value_table(g, n), n);
}

PairTable exact_shapley_owen_via_permutations(const SubsetValueFn& g, int n) {
    check_size(n, 8, "permutation-form pair index");
    const std::vector<double> table = exact_value_table(g, n);
    PairTable out;
    out.pairs = all_pairs(n);
    std::vector<Kahan> acc(out.pairs.size());

    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    long long count = 0;
    do {
        // prefix masks: elements strictly before each position
        std::vector<SubsetMask> before(static_cast<std::size_t>(n));
        SubsetMask running = 0;
        std::vector<int> pos(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            before[static_cast<std::size_t>(k)] = running;
            running |= 1ull << perm[static_cast<std::size_t>(k)];
            pos[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] = k;
        }
        for (std::size_t p = 0; p < out.pairs.size(); ++p) {
            const auto [i, j] = out.pairs[p];
            const SubsetMask bi = 1ull << i, bj = 1ull << j;
            const SubsetMask pre =
                before[static_cast<std::size_t>(pos[static_cast<std::size_t>(i)])] &
                ~bj;
            acc[p].add(table[pre | bi | bj] - table[pre | bi] -
                       table[pre | bj] + table[pre]);
        }
        ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));

    out.value.resize(out.pairs.size());
    for (std::size_t p = 0; p < out.pairs.size(); ++p) {
        out.value[p] = acc[p].sum / static_cast<double>(count);
    }
    return out;
}

GroundTruth posterior_truth(const LinearFamily& family, long long k_truth,
                            std::uint64_t seed, bool parallel) {
    if (family.output().kind != OutputSelector::Kind::CumulativeReward) {
        throw ConfigError("exact ground truth requires the cumulative-reward "
                          "output (no closed form for state components)");
    }
    if (k_truth < 1) throw ConfigError("k_truth must be >= 1");
    if (family.posterior_dim() == 0) {
        k_truth = 1; // every draw is identical; one has zero Monte Carlo error
    }
    const int n = family.input_count();
    check_size(n, 20, "exact value table");
    const auto pairs = all_pairs(n);
    const RngStream truth_root = RngStream(seed).derive(kTruthLabel);

    struct Partial {
        std::vector<double> pair_sum, pair_sq, single_sum;
        double var_sum = 0.0;
        Partial(std::size_t np, std::size_t ns)
            : pair_sum(np, 0.0), pair_sq(np, 0.0), single_sum(ns, 0.0) {}
        Partial() = default;
    };
    constexpr long long kBlock = 64;
    const long long n_blocks = (k_truth + kBlock - 1) / kBlock;
    std::vector<Partial> partials(static_cast<std::size_t>(n_blocks));

#pragma omp parallel for schedule(dynamic, 1) if (parallel)
    for (long long blk = 0; blk < n_blocks; ++blk) {
        Partial part(pairs.size(), static_cast<std::size_t>(n));
        const long long lo = blk * kBlock;
        const long long hi = std::min(k_truth, lo + kBlock);
        for (long long k = lo; k < hi; ++k) {
            RngStream w_rng = truth_root.derive(static_cast<std::uint64_t>(k));
            const LinearDynamics dyn =
                family.dynamics_for(family.draw_parameters(w_rng));
            const PathwayDecomposition dec = decompose(dyn);
            const std::vector<double> table = exact_value_table(
                [&](SubsetMask u) {
                    return analytic_value_function(dec, dyn.V, u);
                },
                n);
            const PairTable so = exact_shapley_owen_from_table(table, n);
            const std::vector<double> singles =
                exact_shapley_effects_from_table(table, n);
            for (std::size_t p = 0; p < pairs.size(); ++p) {
                part.pair_sum[p] += so.value[p];
                part.pair_sq[p] += so.value[p] * so.value[p];
            }
            for (int i = 0; i < n; ++i) {
                part.single_sum[static_cast<std::size_t>(i)] +=
                    singles[static_cast<std::size_t>(i)];
            }
            part.var_sum += table[full_mask(n)];
        }
        partials[static_cast<std::size_t>(blk)] = std::move(part);
    }

    GroundTruth truth;
    truth.pairs = pairs;
    truth.k_truth = k_truth;
    truth.pair_value.assign(pairs.size(), 0.0);
    truth.pair_se.assign(pairs.size(), 0.0);
    truth.single_value.assign(static_cast<std::size_t>(n), 0.0);
    std::vector<double> pair_sq(pairs.size(), 0.0);
    for (const Partial& part : partials) {
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            truth.pair_value[p] += part.pair_sum[p];
            pair_sq[p] += part.pair_sq[p];
        }
        for (int i = 0; i < n; ++i) {
            truth.single_value[static_cast<std::size_t>(i)] +=
                part.single_sum[static_cast<std::size_t>(i)];
        }
        truth.variance += part.var_sum;
    }
    const double kd = static_cast<double>(k_truth);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        truth.pair_value[p] /= kd;
        if (k_truth >= 2) {
            double var = (pair_sq[p] - kd * truth.pair_value[p] *
                                           truth.pair_value[p]) /
                         (kd - 1.0);
            var = std::max(var, 0.0);
            truth.pair_se[p] = std::sqrt(var / kd);
        }
    }
    for (int i = 0; i < n; ++i) {
        truth.single_value[static_cast<std::size_t>(i)] /= kd;
    }
    truth.variance /= kd;
    return truth;
}

double mean_squared_error(const std::vector<std::pair<int, int>>& pairs_a,
                          const std::vector<double>& a,
                          const std::vector<std::pair<int, int>>& pairs_b,
                          const std::vector<double>& b) {
    if (pairs_a.size() != pairs_b.size() || pairs_a.size() != a.size() ||
        pairs_b.size() != b.size()) {
        throw PairSetMismatch("pair tables have different sizes");
    }
    if (pairs_a.empty()) {
        throw PairSetMismatch("pair tables are empty");
    }
    for (std::size_t p = 0; p < pairs_a.size(); ++p) {
        if (pairs_a[p] != pairs_b[p]) {
            throw PairSetMismatch("pair tables cover different pairs");
        }
    }
    double acc = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        const double d = a[p] - b[p];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

} // namespace sopabn
