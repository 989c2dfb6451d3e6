#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssfl/dataset.hpp"
#include "ssfl/orchestrator.hpp"

namespace ssfl {

// Everything a reproducible experiment needs, parsed from a key = value
// config file (see docs/config_schema.json for the key list).
struct ExperimentConfig {
    bool use_csv = false;
    SyntheticSpec synth;
    std::string train_csv;
    std::string test_csv;

    FLConfig fl;  // fl.variant/fl.seed are overridden per run
    std::vector<Variant> variants = {Variant::ssfl};
    std::vector<std::uint64_t> seeds = {1};
    std::vector<std::size_t> mask_study_counts = {1, 2, 4, 8, 16, 32};
    std::string out_dir = "out";
};

// Parses and validates; errors carry "<path>:<line>: <reason>".
ExperimentConfig load_config(const std::string& path);

// CLI overrides: --seed replaces the seed list, --out replaces the output
// directory. A non-empty `out_root` (from the environment) prefixes relative
// output directories.
void apply_overrides(ExperimentConfig& config, std::optional<std::uint64_t> seed,
                     const std::optional<std::string>& out, const std::string& out_root);

// Canonical echo of every resolved key; feeding it back through load_config
// reproduces the run bit for bit.
std::string resolved_config_text(const ExperimentConfig& config);

// Executes every (variant, seed) pair — up to `jobs` in parallel — and writes
// metrics.csv, summary.json, ledger.csv, mask_stats.json, config_resolved.txt
// and per-run artifacts under <out>/runs/.
void run_experiment(const ExperimentConfig& config, std::size_t jobs);

// Mask-error sweep: for each count c, aggregate the saliency of c balanced
// minibatches and compare the resulting mask against the full-data oracle.
// Writes mask_study.csv (count,seed,mask_error) and config_resolved.txt.
void run_mask_study(const ExperimentConfig& config);

}  // namespace ssfl
