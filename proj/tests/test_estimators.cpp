#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "sopabn/config.hpp"
#include "sopabn/errors.hpp"
#include "sopabn/estimators.hpp"
#include "sopabn/linear_gaussian.hpp"
#include "sopabn/oracle_metrics.hpp"
#include "test_support.hpp"

using namespace sopabn;

TEST_CASE("pair enumeration is lexicographic") {
    const auto pairs = all_pairs(4);
    REQUIRE(pairs.size() == 6);
    CHECK(pairs[0] == std::make_pair(0, 1));
    CHECK(pairs[1] == std::make_pair(0, 2));
    CHECK(pairs[2] == std::make_pair(0, 3));
    CHECK(pairs[3] == std::make_pair(1, 2));
    CHECK(pairs[4] == std::make_pair(1, 3));
    CHECK(pairs[5] == std::make_pair(2, 3));
    CHECK(all_pairs(2).size() == 1);
}

TEST_CASE("precedence mask excludes the partner input") {
    const std::vector<int> perm = {2, 0, 1, 4, 3};
    // inputs before anchor 1 are {2, 0}; partner 3 is not among them
    CHECK(precedence_mask(perm, 1, 3) == SubsetMask{0b101});
    // partner appearing earlier is removed
    CHECK(precedence_mask(perm, 1, 0) == SubsetMask{0b100});
    CHECK(precedence_mask(perm, 1, 2) == SubsetMask{0b001});
    // first element has an empty precedence set
    CHECK(precedence_mask(perm, 2, 4) == SubsetMask{0});
    CHECK(precedence_mask(perm, 3, 0) == SubsetMask{0b10110});
}

TEST_CASE("nested estimate from raw draws") {
    // rows are conditioning draws: means 2 and 3, between-variance 0.5,
    // within sum of squares 4 -> correction 4 / (2*2*1) = 1
    CHECK(nested_estimate_from_draws({1, 3, 2, 4}, 2, 2) ==
          doctest::Approx(-0.5).epsilon(1e-12));
    // a single inner draw has no within-group information: correction 0
    CHECK(nested_estimate_from_draws({5, 9}, 2, 1) ==
          doctest::Approx(8.0).epsilon(1e-12));
    CHECK(nested_estimate_from_draws({1, 1, 1, 1, 1, 1}, 3, 2) ==
          doctest::Approx(0.0));
}

TEST_CASE("single-shot estimator knows the empty subset exactly") {
    const ExperimentConfig config =
        load_config(testsup::config_dir() + "/linear_de4.json");
    LinearModel model(config.linear);
    SimWorkspace ws;
    RngStream rng(42);
    RngStream probe(42); // same state as rng
    CHECK(nonnested_value(model, config.output, SubsetMask{0}, rng, ws) ==
          0.0);
    // no randomness was consumed
    CHECK(rng.next_u64() == probe.next_u64());
}

TEST_CASE("nested estimator recovers the total variance on the full subset") {
    const ExperimentConfig config =
        load_config(testsup::config_dir() + "/linear_de4.json");
    LinearModel model(config.linear);
    const PathwayDecomposition dec = decompose(config.linear);
    const double var = analytic_variance(dec, config.linear.V);
    const SubsetMask full = full_mask(4);
    SimWorkspace ws;
    RngStream rng(7);
    PairAccumulator acc;
    for (int rep = 0; rep < 3000; ++rep) {
        acc.add(nested_value(model, config.output, full, 8, 1, rng, ws));
    }
    const double se = std::sqrt(acc.variance() / acc.count);
    CHECK(std::abs(acc.mean() - var) < 4.0 * se);
}

TEST_CASE("both estimators are unbiased for one conditional variance") {
    const ExperimentConfig config =
        load_config(testsup::config_dir() + "/linear_de4.json");
    LinearModel model(config.linear);
    const PathwayDecomposition dec = decompose(config.linear);
    const SubsetMask subset = 0b101; // {e1, e3}
    const double exact =
        analytic_value_function(dec, config.linear.V, subset);
    const SubsetConditioner cond(model.residual_law(), subset);
    SimWorkspace ws;

    RngStream rng_a(19);
    PairAccumulator nested;
    for (int rep = 0; rep < 4000; ++rep) {
        nested.add(
            nested_value(model, config.output, cond, 8, 4, rng_a, ws));
    }
    CHECK(std::abs(nested.mean() - exact) <
          4.0 * std::sqrt(nested.variance() / nested.count));

    RngStream rng_b(23);
    PairAccumulator single;
    for (int rep = 0; rep < 40000; ++rep) {
        single.add(nonnested_value(model, config.output, cond, rng_b, ws));
    }
    CHECK(std::abs(single.mean() - exact) <
          4.0 * std::sqrt(single.variance() / single.count));
}

TEST_CASE("per-iteration cache collapses repeated subsets") {
    // count distinct subsets touched by all 6 pair contrasts of one
    // permutation; a shared cache should evaluate each exactly once
    const std::vector<int> perm = {0, 2, 1, 3};
    std::set<SubsetMask> seen;
    auto run = [&](bool count_empty) {
        seen.clear();
        CachedSubsetEvaluator ev(
            [count_empty](SubsetMask u) -> long long {
                if (u == 0 && !count_empty) {
                    return 0;
                }
                return count_empty ? 8 : 3;
            },
            true);
        ev.begin_iteration(
            [&](SubsetMask u, RngStream&) {
                seen.insert(u);
                return static_cast<double>(mask_size(u));
            },
            RngStream(1));
        for (const auto& [i, j] : all_pairs(4)) {
            (void)delta_pair(ev, perm, i, j);
        }
        return ev;
    };

    const CachedSubsetEvaluator nested = run(true);
    CHECK(seen.size() == 11); // includes the empty subset
    CHECK(seen.count(0) == 1);
    CHECK(nested.evaluations() == 11);
    CHECK(nested.simulations() == 11 * 8);
    CHECK(nested.iteration_evaluations() == 11);

    const CachedSubsetEvaluator single = run(false);
    CHECK(seen.size() == 11);
    CHECK(single.simulations() == 10 * 3); // the empty subset is free

    // distinct subsets per iteration are far below the 24 raw contrast terms
    CHECK(seen.size() <= 17);
}

TEST_CASE("cache and parallelism change cost, never results") {
    const ExperimentConfig config =
        load_config(testsup::config_dir() + "/linear_de4.json");
    const LinearFamily family(config.linear, config.output);
    NestedBudget budget;
    budget.k_outer = 6;
    budget.m_inner = 5;
    budget.n_outer = 3;
    budget.n_inner = 2;

    const PairEstimates cached =
        run_algorithm1(family, budget, 99, false, true);
    const PairEstimates uncached =
        run_algorithm1(family, budget, 99, false, false);
    const PairEstimates parallel =
        run_algorithm1(family, budget, 99, true, true);

    REQUIRE(cached.estimate.size() == 6);
    for (std::size_t p = 0; p < 6; ++p) {
        CHECK(cached.estimate[p] == uncached.estimate[p]);
        CHECK(cached.estimate[p] == parallel.estimate[p]);
        CHECK(cached.delta_variance[p] == parallel.delta_variance[p]);
        CHECK(cached.counts[p] == budget.iterations());
    }
    CHECK(cached.evaluations < uncached.evaluations);
    CHECK(cached.simulations < uncached.simulations);
    CHECK(cached.iterations == 30);
}

TEST_CASE("equal-allocation driver is unbiased for the exact interactions") {
    const ExperimentConfig config =
        load_config(testsup::config_dir() + "/linear_de4.json");
    const LinearFamily family(config.linear, config.output);
    const PathwayDecomposition dec = decompose(config.linear);
    const auto g = [&](SubsetMask u) {
        return analytic_value_function(dec, config.linear.V, u);
    };
    const PairTable exact =
        exact_shapley_owen_from_table(exact_value_table(g, 4), 4);

    NestedBudget budget;
    budget.k_outer = 400;
    budget.m_inner = 10;
    budget.n_outer = 4;
    budget.n_inner = 2;
    const PairEstimates est = run_algorithm1(family, budget, 1234);
    REQUIRE(est.pairs.size() == exact.pairs.size());
    for (std::size_t p = 0; p < est.pairs.size(); ++p) {
        CHECK(est.pairs[p] == exact.pairs[p]);
        const double se = std::sqrt(est.delta_variance[p] /
                                    static_cast<double>(est.counts[p]));
        CHECK(std::abs(est.estimate[p] - exact.value[p]) < 4.0 * se);
    }
    // bookkeeping: an n=4 iteration touches 11 or 12 distinct subsets,
    // far below the 24 contrast terms it serves
    CHECK(est.iterations == 4000);
    CHECK(est.evaluations >= est.iterations * 11);
    CHECK(est.evaluations <= est.iterations * 12);
    CHECK(est.simulations <= est.evaluations * budget.n_outer * budget.n_inner);
}

TEST_CASE("injected valuer sees derived, reproducible streams") {
    // valuer ignores the stream: pure function of the subset
    const IterationValuer pure = [](SubsetMask u, long long, RngStream&) {
        return static_cast<double>(mask_size(u) * mask_size(u));
    };
    const SimulationCost unit = [](SubsetMask) -> long long { return 1; };
    const PairEstimates a =
        run_algorithm1_with_valuer(4, pure, unit, 3, 4, 5, false);
    const PairEstimates b =
        run_algorithm1_with_valuer(4, pure, unit, 3, 4, 5, true);
    for (std::size_t p = 0; p < a.estimate.size(); ++p) {
        CHECK(a.estimate[p] == b.estimate[p]);
        // g(U) = |U|^2 gives every pair contrast exactly 2
        CHECK(a.estimate[p] == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(a.delta_variance[p] == doctest::Approx(0.0));
    }

    // stream-dependent valuer still reproduces across runs with one seed
    const IterationValuer noisy = [](SubsetMask, long long, RngStream& rng) {
        return rng.next_gaussian();
    };
    const PairEstimates n1 =
        run_algorithm1_with_valuer(3, noisy, unit, 4, 2, 77, true);
    const PairEstimates n2 =
        run_algorithm1_with_valuer(3, noisy, unit, 4, 2, 77, false);
    for (std::size_t p = 0; p < n1.estimate.size(); ++p) {
        CHECK(n1.estimate[p] == n2.estimate[p]);
    }
}

TEST_CASE("budget validation and accumulator edge cases") {
    NestedBudget bad;
    bad.k_outer = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = NestedBudget{};
    bad.n_outer = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = NestedBudget{};
    bad.n_inner = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    PairAccumulator acc;
    CHECK_THROWS_AS((void)acc.mean(), InsufficientSamples);
    acc.add(1.0);
    CHECK_THROWS_AS((void)acc.variance(), InsufficientSamples);
    acc.add(2.0);
    acc.add(3.0);
    CHECK(acc.mean() == doctest::Approx(2.0));
    CHECK(acc.variance() == doctest::Approx(1.0));

    PairAccumulator other;
    other.add(5.0);
    acc.merge(other);
    CHECK(acc.count == 4);
    CHECK(acc.mean() == doctest::Approx(11.0 / 4.0));
}
