#include "sopabn/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "sopabn/allocation.hpp"
#include "sopabn/errors.hpp"
#include "sopabn/oracle_metrics.hpp"
#include "sopabn/rng.hpp"

namespace sopabn {

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

void ResultTable::add_metadata(std::string key, Cell value) {
    metadata.emplace_back(std::move(key), std::move(value));
}

void ResultTable::add_row(std::vector<Cell> row) {
    if (row.size() != columns.size()) {
        throw Error("result table: row arity " + std::to_string(row.size()) +
                    " does not match " + std::to_string(columns.size()) +
                    " columns");
    }
    rows.push_back(std::move(row));
}

namespace {

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string format_number(long long v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) {
        return field;
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out += c;
        }
    }
    out += '"';
    return out;
}

nlohmann::ordered_json cell_to_json(const Cell& cell) {
    if (const auto* s = std::get_if<std::string>(&cell)) {
        return *s;
    }
    if (const auto* d = std::get_if<double>(&cell)) {
        return *d;
    }
    return std::get<long long>(cell);
}

} // namespace

std::string format_cell(const Cell& cell) {
    if (const auto* s = std::get_if<std::string>(&cell)) {
        return *s;
    }
    if (const auto* d = std::get_if<double>(&cell)) {
        return format_number(*d);
    }
    return format_number(std::get<long long>(cell));
}

std::string to_csv(const ResultTable& table) {
    std::string out;
    for (const auto& [key, value] : table.metadata) {
        out += "# " + key + "=" + format_cell(value) + "\n";
    }
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
        if (c > 0) {
            out += ',';
        }
        out += csv_escape(table.columns[c]);
    }
    out += '\n';
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) {
                out += ',';
            }
            out += csv_escape(format_cell(row[c]));
        }
        out += '\n';
    }
    return out;
}

std::string to_json_text(const ResultTable& table, double wall_seconds) {
    nlohmann::ordered_json doc;
    nlohmann::ordered_json meta = nlohmann::ordered_json::object();
    for (const auto& [key, value] : table.metadata) {
        meta[key] = cell_to_json(value);
    }
    if (wall_seconds >= 0.0) {
        meta["wall_time_seconds"] = wall_seconds;
    }
    doc["metadata"] = std::move(meta);
    doc["columns"] = table.columns;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : table.rows) {
        nlohmann::ordered_json r = nlohmann::ordered_json::array();
        for (const Cell& cell : row) {
            r.push_back(cell_to_json(cell));
        }
        rows.push_back(std::move(r));
    }
    doc["rows"] = std::move(rows);
    return doc.dump(2) + "\n";
}

std::vector<std::string> write_outputs(const ResultTable& table,
                                       const std::string& out_dir,
                                       const std::string& stem,
                                       const std::string& format,
                                       double wall_seconds) {
    if (format != "csv" && format != "json" && format != "both") {
        throw ConfigError("format: expected csv, json, or both");
    }
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw Error("cannot create output directory \"" + out_dir +
                    "\": " + ec.message());
    }
    auto write_file = [](const fs::path& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary);
        out << text;
        if (!out.good()) {
            throw Error("cannot write \"" + path.string() + "\"");
        }
    };
    std::vector<std::string> written;
    if (format == "csv" || format == "both") {
        const fs::path p = fs::path(out_dir) / (stem + ".csv");
        write_file(p, to_csv(table));
        written.push_back(p.string());
    }
    if (format == "json" || format == "both") {
        const fs::path p = fs::path(out_dir) / (stem + ".json");
        write_file(p, to_json_text(table, wall_seconds));
        written.push_back(p.string());
    }
    return written;
}

// ---------------------------------------------------------------------------
// Budget shaping and study seeds
// ---------------------------------------------------------------------------

NestedBudget budget_from_ratio(const std::array<double, 4>& ratio,
                               long long budget) {
    for (double r : ratio) {
        if (!(r > 0.0)) {
            throw ConfigError("budget ratio entries must be positive");
        }
    }
    if (budget < 1) {
        throw ConfigError("simulation budget must be positive");
    }
    NestedBudget b;
    const long long n_inner = std::max<long long>(1, std::llround(ratio[3]));
    b.n_inner = static_cast<int>(n_inner);
    const double c =
        std::cbrt(static_cast<double>(budget) /
                  (ratio[0] * ratio[1] * ratio[2] *
                   static_cast<double>(n_inner)));
    b.m_inner = std::max<long long>(1, std::llround(ratio[1] * c));
    b.n_outer =
        static_cast<int>(std::max<long long>(2, std::llround(ratio[2] * c)));
    const double per_iteration =
        static_cast<double>(b.m_inner) * b.n_outer * b.n_inner;
    b.k_outer = std::max<long long>(
        1, std::llround(static_cast<double>(budget) / per_iteration));
    b.validate();
    return b;
}

std::uint64_t replication_seed(std::uint64_t seed, long long replication) {
    return RngStream(seed)
        .derive(kMacroReplicationLabel)
        .derive(replication)
        .next_u64();
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

namespace {

void stamp(ResultTable& t, const char* subcommand,
           const ExperimentConfig& config) {
    t.add_metadata("subcommand", std::string(subcommand));
    t.add_metadata("config", config_fingerprint(config));
    t.add_metadata("seed", std::to_string(config.seed));
}

const LinearFamily& require_linear(const ModelFamily& family,
                                   const char* what) {
    const auto* lin = dynamic_cast<const LinearFamily*>(&family);
    if (lin == nullptr) {
        throw ConfigError(std::string(what) +
                          ": exact reference values require the linear model");
    }
    return *lin;
}

std::string ratio_label(const std::array<double, 4>& ratio) {
    std::string s;
    for (int i = 0; i < 4; ++i) {
        if (i > 0) {
            s += ':';
        }
        s += format_number(ratio[static_cast<std::size_t>(i)]);
    }
    return s;
}

// Mean and two-sided 90% normal interval over replication-level values.
struct SummaryStats {
    double mean = 0.0, lo = 0.0, hi = 0.0;
};

SummaryStats summarize(const std::vector<double>& values) {
    const auto n = static_cast<double>(values.size());
    SummaryStats s;
    for (double v : values) {
        s.mean += v;
    }
    s.mean /= n;
    double ss = 0.0;
    for (double v : values) {
        ss += (v - s.mean) * (v - s.mean);
    }
    const double se =
        values.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    const double z = normal_upper_critical(0.05);
    s.lo = s.mean - z * se;
    s.hi = s.mean + z * se;
    return s;
}

} // namespace

ResultTable run_estimate(const ExperimentConfig& config, bool parallel) {
    const auto family = config.make_family();
    ResultTable t;
    stamp(t, "estimate", config);

    std::vector<std::pair<int, int>> pairs;
    std::vector<double> estimate, ci_lo, ci_hi;
    std::vector<long long> counts;

    if (config.algorithm_kind == ExperimentConfig::AlgorithmKind::Nested) {
        const PairEstimates r =
            run_algorithm1(*family, config.nested, config.seed, parallel);
        pairs = r.pairs;
        estimate = r.estimate;
        counts = r.counts;
        const double z = normal_upper_critical(0.05);
        ci_lo.resize(pairs.size());
        ci_hi.resize(pairs.size());
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const double se =
                counts[p] >= 2
                    ? std::sqrt(r.delta_variance[p] /
                                static_cast<double>(counts[p]))
                    : 0.0;
            ci_lo[p] = estimate[p] - z * se;
            ci_hi[p] = estimate[p] + z * se;
        }
        t.add_metadata("algorithm", std::string("nested"));
        t.add_metadata("parameter_draws", config.nested.k_outer);
        t.add_metadata("permutations_per_draw", config.nested.m_inner);
        t.add_metadata("outer_draws",
                       static_cast<long long>(config.nested.n_outer));
        t.add_metadata("inner_draws",
                       static_cast<long long>(config.nested.n_inner));
        t.add_metadata("iterations", r.iterations);
        t.add_metadata("simulations", r.simulations);
        t.add_metadata("subset_evaluations", r.evaluations);
        t.add_metadata("ci_level", 0.9);
    } else {
        const Algorithm2Result r =
            run_algorithm2(*family, config.sequential, config.seed);
        pairs = r.pairs;
        estimate = r.estimate;
        counts = r.counts;
        ci_lo = r.ci_lo;
        ci_hi = r.ci_hi;
        t.add_metadata("algorithm", std::string("sequential"));
        t.add_metadata("sampler",
                       std::string(config.sequential.qmc ? "qmc" : "mc"));
        t.add_metadata("iterations", r.iterations);
        t.add_metadata("pilot_iterations", r.pilot_iterations);
        t.add_metadata("stage2_pair_updates", r.stage2_pair_updates);
        t.add_metadata("simulations", r.simulations);
        t.add_metadata("subset_evaluations", r.evaluations);
        t.add_metadata("ci_level", 1.0 - r.alpha);
    }

    std::vector<double> truth_value;
    if (config.has_truth) {
        const LinearFamily& lin = require_linear(*family, "estimate truth");
        const GroundTruth g =
            posterior_truth(lin, config.k_truth, config.seed, parallel);
        truth_value = g.pair_value;
        t.add_metadata("truth_parameter_draws", g.k_truth);
        t.add_metadata("mse", mean_squared_error(g.pairs, g.pair_value, pairs,
                                                 estimate));
    }

    t.columns = {"pair_i", "pair_j", "estimate", "count", "ci_lo", "ci_hi"};
    if (config.has_truth) {
        t.columns.push_back("truth");
        t.columns.push_back("squared_error");
    }
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        std::vector<Cell> row{static_cast<long long>(pairs[p].first),
                              static_cast<long long>(pairs[p].second),
                              estimate[p],
                              counts[p],
                              ci_lo[p],
                              ci_hi[p]};
        if (config.has_truth) {
            const double err = estimate[p] - truth_value[p];
            row.emplace_back(truth_value[p]);
            row.emplace_back(err * err);
        }
        t.add_row(std::move(row));
    }
    return t;
}

ResultTable run_oracle(const ExperimentConfig& config, bool parallel) {
    const auto family = config.make_family();
    const LinearFamily& lin = require_linear(*family, "oracle");
    long long k = config.has_truth ? config.k_truth : 10000;
    if (lin.posterior_dim() == 0) {
        k = 1; // every posterior draw yields the same exact table
    }
    const GroundTruth g = posterior_truth(lin, k, config.seed, parallel);

    ResultTable t;
    stamp(t, "oracle", config);
    t.add_metadata("parameter_draws", g.k_truth);
    t.add_metadata("output_variance", g.variance);
    t.columns = {"quantity", "i", "j", "value", "standard_error"};
    for (std::size_t p = 0; p < g.pairs.size(); ++p) {
        t.add_row({std::string("interaction"),
                   static_cast<long long>(g.pairs[p].first),
                   static_cast<long long>(g.pairs[p].second), g.pair_value[p],
                   g.pair_se[p]});
    }
    for (std::size_t i = 0; i < g.single_value.size(); ++i) {
        t.add_row({std::string("main_effect"), static_cast<long long>(i),
                   std::string(), g.single_value[i], std::string()});
    }
    t.add_row({std::string("output_variance"), std::string(), std::string(),
               g.variance, std::string()});
    return t;
}

ResultTable run_ablation(const ExperimentConfig& config, bool parallel) {
    if (!config.ablation.present) {
        throw ConfigError("ablation: config has no ablation block");
    }
    const auto family = config.make_family();
    const LinearFamily& lin = require_linear(*family, "ablation");
    const GroundTruth g =
        posterior_truth(lin, config.k_truth, config.seed, parallel);
    const int reps = config.ablation.macro_replications;

    ResultTable t;
    stamp(t, "ablation", config);
    t.add_metadata("budget", config.ablation.budget);
    t.add_metadata("replications", static_cast<long long>(reps));
    t.add_metadata("truth_parameter_draws", g.k_truth);
    t.add_metadata("ci_level", 0.9);
    t.columns = {"ratio",       "parameter_draws", "permutations_per_draw",
                 "outer_draws", "inner_draws",     "mean_simulations",
                 "mean_mse",    "mse_ci_lo",       "mse_ci_hi"};

    for (const auto& ratio : config.ablation.ratios) {
        const NestedBudget shape =
            budget_from_ratio(ratio, config.ablation.budget);
        std::vector<double> mses;
        mses.reserve(static_cast<std::size_t>(reps));
        long long sims = 0;
        for (int rep = 0; rep < reps; ++rep) {
            const PairEstimates r = run_algorithm1(
                *family, shape, replication_seed(config.seed, rep), parallel);
            mses.push_back(mean_squared_error(g.pairs, g.pair_value, r.pairs,
                                              r.estimate));
            sims += r.simulations;
        }
        const SummaryStats s = summarize(mses);
        t.add_row({ratio_label(ratio), shape.k_outer, shape.m_inner,
                   static_cast<long long>(shape.n_outer),
                   static_cast<long long>(shape.n_inner),
                   static_cast<long long>(sims / reps), s.mean, s.lo, s.hi});
    }
    return t;
}

ResultTable run_comparison(const ExperimentConfig& config, bool parallel) {
    if (!config.compare.present) {
        throw ConfigError("compare: config has no compare block");
    }
    const auto family = config.make_family();
    const LinearFamily& lin = require_linear(*family, "compare");
    const GroundTruth g =
        posterior_truth(lin, config.k_truth, config.seed, parallel);
    const int reps = config.compare.macro_replications;

    ResultTable t;
    stamp(t, "compare", config);
    t.add_metadata("replications", static_cast<long long>(reps));
    t.add_metadata("truth_parameter_draws", g.k_truth);
    t.add_metadata("ratio", ratio_label(config.compare.ratio));
    t.columns = {"budget", "method", "replication", "simulations", "mse"};

    AllocationOptions base =
        config.algorithm_kind == ExperimentConfig::AlgorithmKind::Sequential
            ? config.sequential
            : AllocationOptions{};
    base.iterations = 0;
    base.pilot_iterations = 0;

    for (const long long budget : config.compare.budgets) {
        const NestedBudget shape =
            budget_from_ratio(config.compare.ratio, budget);
        for (int rep = 0; rep < reps; ++rep) {
            const PairEstimates r = run_algorithm1(
                *family, shape, replication_seed(config.seed, rep), parallel);
            t.add_row({budget, std::string("nested"),
                       static_cast<long long>(rep), r.simulations,
                       mean_squared_error(g.pairs, g.pair_value, r.pairs,
                                          r.estimate)});
        }
        for (const std::string& sampler : config.compare.samplers) {
            AllocationOptions o = base;
            o.qmc = sampler == "qmc";
            o.simulation_budget = budget;
            for (int rep = 0; rep < reps; ++rep) {
                const Algorithm2Result r = run_algorithm2(
                    *family, o, replication_seed(config.seed, rep));
                t.add_row({budget, "sequential-" + sampler,
                           static_cast<long long>(rep), r.simulations,
                           mean_squared_error(g.pairs, g.pair_value, r.pairs,
                                              r.estimate)});
            }
        }
    }
    return t;
}

ResultTable run_dependence(const ExperimentConfig& config, bool parallel) {
    (void)parallel; // the sequential allocator is inherently serial
    if (!config.dependence.present) {
        throw ConfigError("dependence: config has no dependence block");
    }
    if (config.model_kind != ExperimentConfig::ModelKind::Feedback) {
        throw ConfigError("dependence: requires the feedback model");
    }
    const int reps = config.dependence.macro_replications;

    AllocationOptions o =
        config.algorithm_kind == ExperimentConfig::AlgorithmKind::Sequential
            ? config.sequential
            : AllocationOptions{};
    o.iterations = 0;
    o.pilot_iterations = 0;
    o.simulation_budget = config.dependence.simulation_budget;

    ResultTable t;
    stamp(t, "dependence", config);
    t.add_metadata("simulation_budget", o.simulation_budget);
    t.add_metadata("replications", static_cast<long long>(reps));
    t.columns = {"level",       "l_S",         "l_P",
                 "l_I",         "replication", "pair_i",
                 "pair_j",      "period_i",    "component_i",
                 "period_j",    "component_j", "same_period",
                 "estimate",    "count",       "ci_lo",
                 "ci_hi"};

    const int d_state = 3;
    for (std::size_t li = 0; li < config.dependence.levels.size(); ++li) {
        const Eigen::Vector3d& l = config.dependence.levels[li];
        const auto family = config.make_family_with_loading(l);
        for (int rep = 0; rep < reps; ++rep) {
            const Algorithm2Result r = run_algorithm2(
                *family, o, replication_seed(config.seed, rep));
            for (std::size_t p = 0; p < r.pairs.size(); ++p) {
                const InputIndex a =
                    unflatten_input(r.pairs[p].first, d_state);
                const InputIndex b =
                    unflatten_input(r.pairs[p].second, d_state);
                t.add_row({config.dependence.names[li], l[0], l[1], l[2],
                           static_cast<long long>(rep),
                           static_cast<long long>(r.pairs[p].first),
                           static_cast<long long>(r.pairs[p].second),
                           static_cast<long long>(a.t),
                           static_cast<long long>(a.n),
                           static_cast<long long>(b.t),
                           static_cast<long long>(b.n),
                           static_cast<long long>(a.t == b.t ? 1 : 0),
                           r.estimate[p], r.counts[p], r.ci_lo[p],
                           r.ci_hi[p]});
            }
        }
    }
    return t;
}

} // namespace sopabn
