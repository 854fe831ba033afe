#include "sopabn/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "sopabn/errors.hpp"
#include "sopabn/sampling.hpp"

namespace sopabn {

InteractionTracker::InteractionTracker(int n_inputs)
    : n_(n_inputs), pairs_(all_pairs(n_inputs)), acc_(pairs_.size()) {
    if (n_inputs < 2) {
        throw ConfigError("interaction tracking needs at least 2 inputs");
    }
}

int InteractionTracker::pair_index(int i, int j) const {
    if (i == j || i < 0 || j < 0 || i >= n_ || j >= n_) {
        throw ConfigError("invalid pair (" + std::to_string(i) + "," +
                          std::to_string(j) + ")");
    }
    if (i > j) std::swap(i, j);
    // lexicographic position of (i,j) among all i<j pairs
    return i * (2 * n_ - i - 1) / 2 + (j - i - 1);
}

double InteractionTracker::sigma(int pair_idx) const {
    return std::sqrt(variance(pair_idx));
}

std::pair<double, double> confidence_interval(const InteractionTracker& t,
                                              int pair_idx, double alpha) {
    const long long n = t.count(pair_idx);
    if (n < 2) {
        throw InsufficientSamples(
            "confidence interval needs at least 2 observations");
    }
    const double z = normal_upper_critical(alpha / 2.0);
    const double half = z * t.sigma(pair_idx) / std::sqrt(static_cast<double>(n));
    const double m = t.mean(pair_idx);
    return {m - half, m + half};
}

double ghl_criterion(double sigma, long long count, double z) {
    if (count < 1) {
        throw InsufficientSamples("gHL needs at least 1 observation");
    }
    const double n = static_cast<double>(count);
    return z * sigma / (2.0 * n * std::sqrt(n));
}

namespace {

// Shared ordering for the argmax and for group membership: higher score
// first, then fewer samples, then lexicographically smaller pair.  With all
// scores zero this degrades to least-sampled-first, which keeps allocation
// alive (round-robin) when every dispersion estimate is zero.
bool better_pair(double score_a, long long count_a, int idx_a, double score_b,
                 long long count_b, int idx_b) {
    if (score_a != score_b) return score_a > score_b;
    if (count_a != count_b) return count_a < count_b;
    return idx_a < idx_b;
}

} // namespace

GroupSelection select_group(const InteractionTracker& tracker,
                            const std::vector<double>& sigma,
                            const std::vector<int>& perm, int group_size,
                            double z) {
    const auto& pairs = tracker.pairs();
    if (sigma.size() != pairs.size()) {
        throw ConfigError("select_group: sigma vector size mismatch");
    }
    if (group_size < 1) {
        throw ConfigError("select_group: group size must be >= 1");
    }

    std::vector<double> score(pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        score[p] = ghl_criterion(sigma[p], tracker.count(static_cast<int>(p)), z);
    }

    int best = 0;
    for (int p = 1; p < static_cast<int>(pairs.size()); ++p) {
        if (better_pair(score[p], tracker.count(p), p, score[best],
                        tracker.count(best), best)) {
            best = p;
        }
    }

    // Anchor: the winning pair's earlier element under this permutation.
    std::vector<int> pos(perm.size());
    for (std::size_t k = 0; k < perm.size(); ++k) pos[perm[k]] = static_cast<int>(k);
    const auto [bi, bj] = pairs[best];
    const int anchor = pos[bi] < pos[bj] ? bi : bj;

    // Candidates: pairs {anchor, j} with j after the anchor in the
    // permutation; all of them share the anchor's precedence set.
    std::vector<int> candidates;
    for (int v = 0; v < tracker.n_inputs(); ++v) {
        if (v != anchor && pos[v] > pos[anchor]) {
            candidates.push_back(tracker.pair_index(anchor, v));
        }
    }
    std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        return better_pair(score[a], tracker.count(a), a, score[b],
                           tracker.count(b), b);
    });
    if (static_cast<int>(candidates.size()) > group_size) {
        candidates.resize(group_size);
    }

    GroupSelection sel;
    sel.anchor = anchor;
    sel.argmax_pair = best;
    sel.members = std::move(candidates);
    return sel;
}

void AllocationOptions::validate() const {
    if (simulation_budget < 0) {
        throw ConfigError("allocation: simulation budget must be >= 0");
    }
    if (simulation_budget == 0) {
        if (iterations < 2) {
            throw ConfigError("allocation: need at least 2 iterations");
        }
        if (pilot_iterations < 0 || pilot_iterations > iterations) {
            throw ConfigError(
                "allocation: pilot length must lie in [0, iterations]");
        }
        if (pilot_iterations == 1) {
            throw ConfigError("allocation: a 1-iteration pilot cannot "
                              "estimate dispersion; use >= 2");
        }
    }
    if (group_size < 1) throw ConfigError("allocation: group size must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("allocation: alpha must lie in (0,1)");
    }
    if (!(pilot_fraction > 0.0 && pilot_fraction < 1.0)) {
        throw ConfigError("allocation: pilot fraction must lie in (0,1)");
    }
}

namespace {

struct SampleDrawer {
    // MC streams
    RngStream param_root, perm_root;
    // QMC state
    const ModelFamily* family = nullptr; // null in valuer mode
    int n_inputs = 0;
    int d_w = 0;
    std::unique_ptr<HaltonSequence> halton;
    std::vector<double> point;
    Eigen::VectorXd z;

    // Draw (w, perm) for a global iteration index.
    std::pair<Eigen::VectorXd, std::vector<int>> draw(long long it) {
        if (halton) {
            halton->point(it, point);
            Eigen::VectorXd w(0);
            if (d_w > 0) {
                z.resize(d_w);
                for (int i = 0; i < d_w; ++i) {
                    z[i] = normal_quantile(point[static_cast<std::size_t>(i)]);
                }
                w = family->parameters_from_normals(z);
            }
            std::vector<int> perm = permutation_from_uniforms(
                point.data() + d_w, n_inputs);
            return {std::move(w), std::move(perm)};
        }
        Eigen::VectorXd w(0);
        if (family) {
            RngStream w_rng = param_root.derive(static_cast<std::uint64_t>(it));
            w = family->draw_parameters(w_rng);
        }
        RngStream perm_rng = perm_root.derive(static_cast<std::uint64_t>(it));
        return {std::move(w), sample_permutation(perm_rng, n_inputs)};
    }
};

using IterationRawFactory =
    std::function<RawSubsetValuer(long long it, const Eigen::VectorXd& w,
                                  SimWorkspace& ws)>;

Algorithm2Result run_allocation(int n_inputs, const IterationRawFactory& raw_for,
                                const SimulationCost& cost,
                                const AllocationOptions& options,
                                std::uint64_t seed, const ModelFamily* family) {
    options.validate();
    if (n_inputs < 2) {
        throw ConfigError("interaction estimation needs at least 2 inputs");
    }

    const RngStream alg_root = RngStream(seed).derive(kAlgorithm2Label);
    SampleDrawer drawer;
    drawer.param_root = alg_root.derive(kParameterStreams);
    drawer.perm_root = alg_root.derive(kPermutationStreams);
    drawer.family = family;
    drawer.n_inputs = n_inputs;
    drawer.d_w = family ? family->posterior_dim() : 0;
    if (options.qmc) {
        drawer.halton = std::make_unique<HaltonSequence>(
            drawer.d_w + n_inputs - 1, options.scramble,
            RngStream(seed).derive(kScrambleLabel).next_u64());
    }
    const RngStream eval_root = alg_root.derive(kEvaluationStreams);
    const double z = normal_upper_critical(options.alpha / 2.0);

    InteractionTracker tracker(n_inputs);
    const auto& pairs = tracker.pairs();
    CachedSubsetEvaluator ev(cost, /*use_cache=*/true);
    SimWorkspace ws;

    const bool budget_mode = options.simulation_budget > 0;
    const long long pilot_sim_target =
        budget_mode ? static_cast<long long>(options.pilot_fraction *
                                             static_cast<double>(
                                                 options.simulation_budget))
                    : 0;
    long long pilot_len;
    if (budget_mode) {
        pilot_len = -1; // decided by the simulation counter below
    } else {
        pilot_len = options.pilot_iterations > 0
                        ? options.pilot_iterations
                        : std::max<long long>(
                              2, std::llround(options.pilot_fraction *
                                              static_cast<double>(
                                                  options.iterations)));
        pilot_len = std::min(pilot_len, options.iterations);
    }

    long long it = 0;

    // ---- Stage 1: pilot
    long long pilot_done = 0;
    while (true) {
        if (budget_mode) {
            if (pilot_done >= 2 && ev.simulations() >= pilot_sim_target) break;
        } else if (pilot_done >= pilot_len) {
            break;
        }
        auto [w, perm] = drawer.draw(it);
        ev.begin_iteration(raw_for(it, w, ws),
                           eval_root.derive(static_cast<std::uint64_t>(it)));
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            tracker.add(static_cast<int>(p),
                        delta_pair(ev, perm, pairs[p].first, pairs[p].second));
        }
        ++it;
        ++pilot_done;
    }

    std::vector<double> frozen_sigma(pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        frozen_sigma[p] = tracker.sigma(static_cast<int>(p));
    }

    // ---- Stage 2: sequential allocation
    long long stage2_updates = 0;
    std::vector<double> sigma_now(pairs.size());
    while (true) {
        if (budget_mode) {
            if (ev.simulations() >= options.simulation_budget) break;
        } else if (it >= options.iterations) {
            break;
        }
        auto [w, perm] = drawer.draw(it);
        ev.begin_iteration(raw_for(it, w, ws),
                           eval_root.derive(static_cast<std::uint64_t>(it)));
        const std::vector<double>* sigma = &frozen_sigma;
        if (!options.freeze_sigma) {
            for (std::size_t p = 0; p < pairs.size(); ++p) {
                sigma_now[p] = tracker.sigma(static_cast<int>(p));
            }
            sigma = &sigma_now;
        }
        const GroupSelection sel =
            select_group(tracker, *sigma, perm, options.group_size, z);
        for (int pair_idx : sel.members) {
            const auto [i, j] = pairs[static_cast<std::size_t>(pair_idx)];
            const int other = (i == sel.anchor) ? j : i;
            tracker.add(pair_idx, delta_pair(ev, perm, sel.anchor, other));
            ++stage2_updates;
        }
        ++it;
    }

    // ---- Stage 3: report
    Algorithm2Result out;
    out.n_inputs = n_inputs;
    out.pairs = pairs;
    out.alpha = options.alpha;
    out.iterations = it;
    out.pilot_iterations = pilot_done;
    out.stage2_pair_updates = stage2_updates;
    out.simulations = ev.simulations();
    out.evaluations = ev.evaluations();
    out.estimate.resize(pairs.size());
    out.sigma.resize(pairs.size());
    out.ci_lo.resize(pairs.size());
    out.ci_hi.resize(pairs.size());
    out.counts.resize(pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const int pi = static_cast<int>(p);
        out.estimate[p] = tracker.mean(pi);
        out.sigma[p] = tracker.sigma(pi);
        out.counts[p] = tracker.count(pi);
        const auto [lo, hi] = confidence_interval(tracker, pi, options.alpha);
        out.ci_lo[p] = lo;
        out.ci_hi[p] = hi;
    }
    return out;
}

} // namespace

Algorithm2Result run_algorithm2(const ModelFamily& family,
                                const AllocationOptions& options,
                                std::uint64_t seed) {
    const OutputSelector sel = family.output();
    IterationRawFactory raw_for =
        [&family, sel](long long, const Eigen::VectorXd& w,
                       SimWorkspace& ws) -> RawSubsetValuer {
        std::shared_ptr<const PabnModel> model = family.instantiate(w);
        return [model, sel, &ws](SubsetMask u, RngStream& rng) {
            return nonnested_value(*model, sel, u, rng, ws);
        };
    };
    SimulationCost cost = [](SubsetMask u) {
        return static_cast<long long>(u == 0 ? 0 : 3);
    };
    return run_allocation(family.input_count(), raw_for, cost, options, seed,
                          &family);
}

Algorithm2Result run_algorithm2_with_valuer(int n_inputs,
                                            const IterationValuer& valuer,
                                            const SimulationCost& cost,
                                            const AllocationOptions& options,
                                            std::uint64_t seed) {
    IterationRawFactory raw_for =
        [&valuer](long long it, const Eigen::VectorXd&,
                  SimWorkspace&) -> RawSubsetValuer {
        return [&valuer, it](SubsetMask u, RngStream& rng) {
            return valuer(u, it, rng);
        };
    };
    return run_allocation(n_inputs, raw_for, cost, options, seed, nullptr);
}

} // namespace sopabn
