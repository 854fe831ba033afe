// Compares the serial reference implementation against the OpenMP-parallel
// kernels on the same workload and verifies the results are bit-identical.
// The parallel path processes iterations in fixed blocks merged in index
// order, so any divergence here is a bug, not roundoff.

#include <chrono>
#include <cstdio>
#include <exception>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sopabn/config.hpp"
#include "sopabn/estimators.hpp"
#include "sopabn/experiment.hpp"
#include "sopabn/oracle_metrics.hpp"

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
}

template <typename F> double timed(F&& f) {
    const auto start = std::chrono::steady_clock::now();
    f();
    return seconds_since(start);
}

bool identical(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) {
            return false;
        }
    }
    return true;
}

} // namespace

int main(int argc, char** argv) {
    std::string config_path = std::string(SOPABN_CONFIG_DIR) +
                              "/linear_default.json";
    long long budget = 2000000;
    if (argc > 1) {
        config_path = argv[1];
    }
    if (argc > 2) {
        budget = std::stoll(argv[2]);
    }

    try {
        const sopabn::ExperimentConfig config =
            sopabn::load_config(config_path);
        const auto family = config.make_family();
        const std::uint64_t seed = config.seed;

#ifdef _OPENMP
        std::printf("openmp: yes, max threads %d\n", omp_get_max_threads());
#else
        std::printf("openmp: no (serial build)\n");
#endif
        std::printf("config: %s\n", config_path.c_str());
        std::printf("budget: %lld simulations per estimator run\n\n", budget);

        const sopabn::NestedBudget shape =
            sopabn::budget_from_ratio({1, 1, 1, 2}, budget);
        std::printf("pairwise estimator (%lld draws x %lld permutations, "
                    "%d x %d nested draws)\n",
                    shape.k_outer, shape.m_inner, shape.n_outer,
                    shape.n_inner);
        sopabn::PairEstimates serial, parallel;
        const double t_serial = timed([&] {
            serial = sopabn::run_algorithm1(*family, shape, seed,
                                            /*parallel=*/false);
        });
        const double t_parallel = timed([&] {
            parallel = sopabn::run_algorithm1(*family, shape, seed,
                                              /*parallel=*/true);
        });
        const bool match1 = identical(serial.estimate, parallel.estimate);
        std::printf("  serial   %8.3f s\n", t_serial);
        std::printf("  parallel %8.3f s  (speedup %.2fx)\n", t_parallel,
                    t_serial / t_parallel);
        std::printf("  bit-identical: %s\n\n", match1 ? "yes" : "NO");

        bool match2 = true;
        if (const auto* lin =
                dynamic_cast<const sopabn::LinearFamily*>(family.get())) {
            const long long k_truth = 20000;
            std::printf("exact posterior reference (%lld parameter draws)\n",
                        k_truth);
            sopabn::GroundTruth gs, gp;
            const double u_serial = timed([&] {
                gs = sopabn::posterior_truth(*lin, k_truth, seed,
                                             /*parallel=*/false);
            });
            const double u_parallel = timed([&] {
                gp = sopabn::posterior_truth(*lin, k_truth, seed,
                                             /*parallel=*/true);
            });
            match2 = identical(gs.pair_value, gp.pair_value);
            std::printf("  serial   %8.3f s\n", u_serial);
            std::printf("  parallel %8.3f s  (speedup %.2fx)\n", u_parallel,
                        u_serial / u_parallel);
            std::printf("  bit-identical: %s\n", match2 ? "yes" : "NO");
        }

        return match1 && match2 ? 0 : 1;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    }
}
