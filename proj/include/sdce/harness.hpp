#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdce/config.hpp"
#include "sdce/estimation.hpp"
#include "sdce/pmir.hpp"

namespace sdce::harness {

// One cell of the sweep cross product: (contamination axis) x (policy axis)
// x (seed axis). The run seed is derived from the panel seed and the
// contamination index only, so cells that differ in policy alone share their
// random stream (paired comparisons).
struct SweepCell {
    std::string run_id;  // zero-padded ordinal plus axis tags; the sort key
    double forced_rho = -1.0;  // negative = endogenous
    std::string policy = "none";
    std::uint64_t panel_seed = 0;
    std::uint64_t cell_seed = 0;
};

std::vector<SweepCell> plan_sweep(const cfg::ExperimentConfig& config);

// Executes one cell; fills the record's fingerprint from the config.
pmir::RunRecord run_cell(const cfg::ExperimentConfig& config, const SweepCell& cell);

struct SweepOutcome {
    std::vector<SweepCell> cells;
    std::vector<pmir::RunRecord> records;  // aligned with cells
    std::vector<std::string> errors;       // aligned; empty string = clean
    int skipped = 0;  // cells taken from a previous run via the manifest
};

// Runs the whole cross product on config.workers threads. With a nonempty
// config.out_dir, rows are appended to results.<ext> as cells finish,
// manifest.json tracks per-cell status (timestamps and host data live only
// there), and the result file is rewritten run_id-sorted at the end so the
// bytes are order-deterministic. A manifest from an earlier run with the
// same config fingerprint marks completed cells, which are loaded from the
// existing file instead of rerun. Cell failures are recorded in the
// manifest and leave no rows.
SweepOutcome run_sweep(const cfg::ExperimentConfig& config);

// Fixed column order:
// run_id, seed, policy, generation, rho, quality_rel, w2_drift, w_prod,
// w_cons, l_coll, l_info, welfare_total, residual, schema_version.
// Floats carry 17 significant digits; write-then-read round-trips exactly.
extern const int kSchemaVersion;
extern const char* kCsvHeader;

std::string emit_csv(const SweepOutcome& outcome);
std::string emit_jsonl(const SweepOutcome& outcome);
std::string emit_text(const SweepOutcome& outcome);

// One parsed result row (the payload the three formats share).
struct ResultRow {
    std::string run_id;
    std::uint64_t seed = 0;
    std::string policy;
    int generation = 0;
    double rho = 0.0;
    double quality_rel = 0.0;
    double w2_drift = 0.0;
    double w_prod = 0.0;
    double w_cons = 0.0;
    double l_coll = 0.0;
    double l_info = 0.0;
    double welfare_total = 0.0;
    double residual = 0.0;
    int schema_version = 0;
};

// Parses emit_csv output (header required, schema version checked).
// Throws std::runtime_error with row context on malformed input.
std::vector<ResultRow> read_results_csv(const std::string& text);

// Reference relative-quality table: generations (rows) by contamination
// ratios (columns), row-major values.
struct QualityGrid {
    std::vector<int> generations;
    std::vector<double> ratios;
    std::vector<double> values;
};

// The frozen reference grid the scaling replication is checked against
// (6 generations x 5 contamination ratios).
QualityGrid reference_collapse_grid();

// Grid cells as (t, rho, ratio) observations for scaling_fit.
est::Dataset grid_dataset(const QualityGrid& grid);

// Aligned fixed-width text rendering (3 decimals), one row per generation.
std::string render_quality_grid(const QualityGrid& grid);

// Extracts the same 6x5 grid shape from simulated records: cell value =
// quality_rel at the row generation for the cell's forced contamination.
QualityGrid simulated_quality_grid(const SweepOutcome& outcome);

struct CheckLine {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Replication commands. Each builds its canonical configuration on top of
// the given base (scale and seed panel are taken from the base), runs the
// experiment, and evaluates its gates. Tables are appended to *rendered
// when non-null.
std::vector<CheckLine> replicate_scaling(cfg::ExperimentConfig base,
                                         std::string* rendered = nullptr);
std::vector<CheckLine> replicate_reduced_form(cfg::ExperimentConfig base,
                                              std::string* rendered = nullptr);
std::vector<CheckLine> replicate_policies(cfg::ExperimentConfig base,
                                          std::string* rendered = nullptr);
std::vector<CheckLine> replicate_regimes(cfg::ExperimentConfig base,
                                         std::string* rendered = nullptr);

double median(std::vector<double> values);

// Exact one-sided binomial tail P(X >= wins) for X ~ Binomial(trials, 1/2).
double sign_test_p(int wins, int trials);

}  // namespace sdce::harness
