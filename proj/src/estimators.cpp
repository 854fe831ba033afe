#include "sopabn/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "sopabn/errors.hpp"
#include "sopabn/sampling.hpp"

namespace sopabn {

std::vector<std::pair<int, int>> all_pairs(int n) {
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    return pairs;
}

SubsetMask precedence_mask(const std::vector<int>& perm, int anchor,
                           int other) {
    SubsetMask p = 0;
    for (int v : perm) {
        if (v == anchor) return p;
        if (v != other) p |= 1ull << v;
    }
    throw ConfigError("precedence_mask: anchor " + std::to_string(anchor) +
                      " not present in permutation");
}

double nested_estimate_from_draws(const std::vector<double>& y, int n_outer,
                                  int n_inner) {
    if (n_outer < 2) {
        throw InsufficientSamples(
            "nested estimator needs at least 2 conditioning draws");
    }
    if (n_inner < 1 ||
        y.size() != static_cast<std::size_t>(n_outer) * n_inner) {
        throw ConfigError("nested estimator: draw buffer shape mismatch");
    }
    double grand = 0.0;
    double within_ss = 0.0;
    // scratch-free two-pass per group: groups are contiguous rows
    std::vector<double> means(static_cast<std::size_t>(n_outer));
    for (int i = 0; i < n_outer; ++i) {
        double s = 0.0;
        for (int j = 0; j < n_inner; ++j)
            s += y[static_cast<std::size_t>(i) * n_inner + j];
        means[static_cast<std::size_t>(i)] = s / n_inner;
        grand += means[static_cast<std::size_t>(i)];
        if (n_inner >= 2) {
            for (int j = 0; j < n_inner; ++j) {
                const double d = y[static_cast<std::size_t>(i) * n_inner + j] -
                                 means[static_cast<std::size_t>(i)];
                within_ss += d * d;
            }
        }
    }
    grand /= n_outer;
    double between = 0.0;
    for (int i = 0; i < n_outer; ++i) {
        const double d = means[static_cast<std::size_t>(i)] - grand;
        between += d * d;
    }
    between /= (n_outer - 1);
    const double correction =
        (n_inner >= 2)
            ? within_ss / (static_cast<double>(n_outer) * n_inner * (n_inner - 1))
            : 0.0;
    return between - correction;
}

double nested_value(const PabnModel& model, const OutputSelector& sel,
                    const SubsetConditioner& cond, int n_outer, int n_inner,
                    RngStream& rng, SimWorkspace& ws) {
    if (n_outer < 2) {
        throw InsufficientSamples(
            "nested estimator needs at least 2 conditioning draws");
    }
    if (n_inner < 1) {
        throw ConfigError("nested estimator needs at least 1 inner draw");
    }
    ws.draws.resize(static_cast<std::size_t>(n_outer) * n_inner);
    for (int i = 0; i < n_outer; ++i) {
        cond.sample_subset(rng, ws.x_u);
        for (int j = 0; j < n_inner; ++j) {
            ws.draws[static_cast<std::size_t>(i) * n_inner + j] =
                sample_output_given_subset(model, sel, cond, ws.x_u, rng, ws);
        }
    }
    return nested_estimate_from_draws(ws.draws, n_outer, n_inner);
}

double nested_value(const PabnModel& model, const OutputSelector& sel,
                    SubsetMask subset, int n_outer, int n_inner,
                    RngStream& rng, SimWorkspace& ws) {
    SubsetConditioner cond(model.residual_law(), subset);
    return nested_value(model, sel, cond, n_outer, n_inner, rng, ws);
}

double nonnested_value(const PabnModel& model, const OutputSelector& sel,
                       const SubsetConditioner& cond, RngStream& rng,
                       SimWorkspace& ws) {
    if (cond.subset_dim() == 0) return 0.0; // g(empty) is known exactly
    cond.sample_subset(rng, ws.x_u);
    cond.sample_subset(rng, ws.x_u2);
    const double y1 =
        sample_output_given_subset(model, sel, cond, ws.x_u, rng, ws);
    const double y2 =
        sample_output_given_subset(model, sel, cond, ws.x_u, rng, ws);
    const double y3 =
        sample_output_given_subset(model, sel, cond, ws.x_u2, rng, ws);
    return y1 * (y2 - y3);
}

double nonnested_value(const PabnModel& model, const OutputSelector& sel,
                       SubsetMask subset, RngStream& rng, SimWorkspace& ws) {
    if (subset == 0) return 0.0;
    SubsetConditioner cond(model.residual_law(), subset);
    return nonnested_value(model, sel, cond, rng, ws);
}

CachedSubsetEvaluator::CachedSubsetEvaluator(SimulationCost cost,
                                             bool use_cache)
    : cost_(std::move(cost)), use_cache_(use_cache) {
    memo_.reserve(64);
}

void CachedSubsetEvaluator::begin_iteration(RawSubsetValuer raw,
                                            RngStream eval_root) {
    raw_ = std::move(raw);
    root_ = eval_root;
    memo_.clear();
    iteration_evaluations_ = 0;
}

double CachedSubsetEvaluator::value(SubsetMask subset) {
    if (use_cache_) {
        for (const auto& [mask, v] : memo_) {
            if (mask == subset) return v;
        }
    }
    RngStream rng = root_.derive(subset);
    const double v = raw_(subset, rng);
    if (use_cache_) memo_.emplace_back(subset, v);
    ++evaluations_;
    ++iteration_evaluations_;
    simulations_ += cost_(subset);
    return v;
}

double delta_pair(CachedSubsetEvaluator& ev, const std::vector<int>& perm,
                  int anchor, int other) {
    const SubsetMask p = precedence_mask(perm, anchor, other);
    const SubsetMask bit_a = 1ull << anchor;
    const SubsetMask bit_o = 1ull << other;
    return ev.value(p | bit_a | bit_o) - ev.value(p | bit_a) -
           ev.value(p | bit_o) + ev.value(p);
}

double PairAccumulator::mean() const {
    if (count == 0) {
        throw InsufficientSamples("mean requested from an empty accumulator");
    }
    return sum / static_cast<double>(count);
}

double PairAccumulator::variance() const {
    if (count < 2) {
        throw InsufficientSamples(
            "sample variance needs at least 2 observations");
    }
    const double n = static_cast<double>(count);
    double v = (sum_sq - sum * sum / n) / (n - 1.0);
    return v > 0.0 ? v : 0.0;
}

void NestedBudget::validate() const {
    if (k_outer < 1 || m_inner < 1) {
        throw ConfigError("nested budget: K and M must be >= 1");
    }
    if (n_outer < 2) throw ConfigError("nested budget: N_O must be >= 2");
    if (n_inner < 1) throw ConfigError("nested budget: N_I must be >= 1");
}

namespace {

constexpr long long kBlockSize = 256;

using RawValuerFactory =
    std::function<RawSubsetValuer(long long iteration, SimWorkspace& ws)>;

// Shared driver for equal-allocation pair estimation: accumulates every
// pair's contrast each iteration.  Blocked accumulation with in-order merge
// keeps results independent of thread count.
PairEstimates run_pair_iterations(int n_inputs, long long iterations,
                                  const RawValuerFactory& raw_for,
                                  const SimulationCost& cost,
                                  const RngStream& alg_root, bool parallel,
                                  bool use_cache) {
    if (n_inputs < 2) {
        throw ConfigError("interaction estimation needs at least 2 inputs");
    }
    const auto pairs = all_pairs(n_inputs);
    const long long n_blocks = (iterations + kBlockSize - 1) / kBlockSize;

    struct Block {
        std::vector<PairAccumulator> acc;
        long long sims = 0;
        long long evals = 0;
    };
    std::vector<Block> partials(static_cast<std::size_t>(n_blocks));

    const RngStream perm_root = alg_root.derive(kPermutationStreams);
    const RngStream eval_root = alg_root.derive(kEvaluationStreams);

#pragma omp parallel for schedule(dynamic, 1) if (parallel)
    for (long long blk = 0; blk < n_blocks; ++blk) {
        Block block;
        block.acc.resize(pairs.size());
        CachedSubsetEvaluator ev(cost, use_cache);
        SimWorkspace ws;
        const long long lo = blk * kBlockSize;
        const long long hi = std::min(iterations, lo + kBlockSize);
        for (long long it = lo; it < hi; ++it) {
            RngStream perm_rng =
                perm_root.derive(static_cast<std::uint64_t>(it));
            const std::vector<int> perm =
                sample_permutation(perm_rng, n_inputs);
            ev.begin_iteration(raw_for(it, ws),
                               eval_root.derive(static_cast<std::uint64_t>(it)));
            for (std::size_t p = 0; p < pairs.size(); ++p) {
                block.acc[p].add(
                    delta_pair(ev, perm, pairs[p].first, pairs[p].second));
            }
        }
        block.sims = ev.simulations();
        block.evals = ev.evaluations();
        partials[static_cast<std::size_t>(blk)] = std::move(block);
    }

    PairEstimates out;
    out.n_inputs = n_inputs;
    out.pairs = pairs;
    out.iterations = iterations;
    std::vector<PairAccumulator> acc(pairs.size());
    for (const Block& block : partials) {
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            acc[p].merge(block.acc[p]);
        }
        out.simulations += block.sims;
        out.evaluations += block.evals;
    }
    out.estimate.resize(pairs.size());
    out.delta_variance.resize(pairs.size());
    out.counts.resize(pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        out.estimate[p] = acc[p].mean();
        out.delta_variance[p] = acc[p].count >= 2 ? acc[p].variance() : 0.0;
        out.counts[p] = acc[p].count;
    }
    return out;
}

} // namespace

PairEstimates run_algorithm1(const ModelFamily& family,
                             const NestedBudget& budget, std::uint64_t seed,
                             bool parallel, bool use_cache) {
    budget.validate();
    const RngStream alg_root = RngStream(seed).derive(kAlgorithm1Label);
    const RngStream param_root = alg_root.derive(kParameterStreams);
    const OutputSelector sel = family.output();
    const int n_outer = budget.n_outer;
    const int n_inner = budget.n_inner;
    const long long m_inner = budget.m_inner;

    RawValuerFactory raw_for = [&family, sel, param_root, m_inner, n_outer,
                                n_inner](long long it,
                                         SimWorkspace& ws) -> RawSubsetValuer {
        const long long k = it / m_inner;
        RngStream w_rng = param_root.derive(static_cast<std::uint64_t>(k));
        std::shared_ptr<const PabnModel> model =
            family.instantiate(family.draw_parameters(w_rng));
        return [model, sel, n_outer, n_inner, &ws](SubsetMask u,
                                                   RngStream& rng) {
            return nested_value(*model, sel, u, n_outer, n_inner, rng, ws);
        };
    };
    const long long cost_per_eval =
        static_cast<long long>(n_outer) * n_inner;
    SimulationCost cost = [cost_per_eval](SubsetMask) { return cost_per_eval; };

    return run_pair_iterations(family.input_count(), budget.iterations(),
                               raw_for, cost, alg_root, parallel, use_cache);
}

PairEstimates run_algorithm1_with_valuer(int n_inputs,
                                         const IterationValuer& valuer,
                                         const SimulationCost& cost,
                                         long long k_outer, long long m_inner,
                                         std::uint64_t seed, bool parallel,
                                         bool use_cache) {
    if (k_outer < 1 || m_inner < 1) {
        throw ConfigError("iteration counts must be >= 1");
    }
    const RngStream alg_root = RngStream(seed).derive(kAlgorithm1Label);
    RawValuerFactory raw_for = [&valuer](long long it,
                                         SimWorkspace&) -> RawSubsetValuer {
        return [&valuer, it](SubsetMask u, RngStream& rng) {
            return valuer(u, it, rng);
        };
    };
    return run_pair_iterations(n_inputs, k_outer * m_inner, raw_for, cost,
                               alg_root, parallel, use_cache);
}

} // namespace sopabn
