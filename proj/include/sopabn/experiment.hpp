#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sopabn/config.hpp"
#include "sopabn/estimators.hpp"

namespace sopabn {

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

using Cell = std::variant<std::string, double, long long>;

// Tabular run output: ordered key/value metadata plus a rectangular body.
// Everything in the table is a deterministic function of (config, seed);
// wall-clock time is deliberately kept out and only added to the JSON
// rendering, so CSV output is byte-identical across reruns.
struct ResultTable {
    std::vector<std::pair<std::string, Cell>> metadata;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add_metadata(std::string key, Cell value);
    void add_row(std::vector<Cell> row); // enforces column arity
};

// Shortest round-trip decimal for numbers; strings pass through.
std::string format_cell(const Cell& cell);

// '#'-prefixed metadata lines followed by an RFC 4180 body (LF line ends,
// UTF-8, '.' decimal separator).
std::string to_csv(const ResultTable& table);

// JSON mirror of the same table; wall_seconds < 0 omits the timing field.
std::string to_json_text(const ResultTable& table, double wall_seconds = -1.0);

// Writes <out_dir>/<stem>.csv and/or .json per format ("csv", "json",
// "both"); creates out_dir if needed.  Returns the paths written.
std::vector<std::string> write_outputs(const ResultTable& table,
                                       const std::string& out_dir,
                                       const std::string& stem,
                                       const std::string& format,
                                       double wall_seconds);

// ---------------------------------------------------------------------------
// Budget shaping and study seeds
// ---------------------------------------------------------------------------

// Equal-allocation shape spending ~`budget` simulations in the proportions
// ratio = (parameter draws : permutations : conditioning draws : inner
// draws).  The inner count is the ratio's last entry taken literally; the
// other three scale with the cube root of the remaining budget, and the
// parameter-draw count is recomputed last so the realized product tracks the
// budget even after rounding.
NestedBudget budget_from_ratio(const std::array<double, 4>& ratio,
                               long long budget);

// Independent per-replication seed derived from the study seed.
std::uint64_t replication_seed(std::uint64_t seed, long long replication);

// ---------------------------------------------------------------------------
// Subcommand runners
// ---------------------------------------------------------------------------

ResultTable run_estimate(const ExperimentConfig& config, bool parallel = true);
ResultTable run_oracle(const ExperimentConfig& config, bool parallel = true);
ResultTable run_ablation(const ExperimentConfig& config, bool parallel = true);
ResultTable run_comparison(const ExperimentConfig& config,
                           bool parallel = true);
ResultTable run_dependence(const ExperimentConfig& config,
                           bool parallel = true);

} // namespace sopabn
