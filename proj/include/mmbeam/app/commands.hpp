#pragma once

#include <filesystem>
#include <string>

#include "mmbeam/io/config.hpp"
#include "mmbeam/io/manifest.hpp"
#include "mmbeam/metrics.hpp"

// Command implementations behind the mmbeam executable. Every command is
// deterministic for a fixed configuration; output files are written
// atomically.

namespace mmbeam::app {

namespace fs = std::filesystem;

/// Generates the dataset into out_dir: samples/, manifest.csv, scenarios.csv,
/// truth.csv and config.resolved.ini. Requires a [world] section.
fs::path cmd_synth(const io::RunConfig& cfg, const fs::path& out_dir);

/// Prepares a raw manifest into out_dir: prepared/, prepared.csv.
fs::path cmd_prep(const fs::path& manifest, const io::RunConfig& cfg, const fs::path& out_dir);

struct TrainOutputs {
  fs::path checkpoint;
  fs::path log;
};
/// Trains on a prepared manifest; writes checkpoint.mmbc, train_log.csv and
/// config.resolved.ini into out_dir.
TrainOutputs cmd_train(const fs::path& manifest, io::RunConfig cfg, const fs::path& out_dir);

/// Evaluates a checkpoint (EMA weights when present) on a prepared manifest;
/// writes predictions.csv and dba.csv into out_dir.
metrics::DbaReport cmd_eval(const fs::path& manifest, const fs::path& checkpoint, const fs::path& out_dir);

/// Complexity report CSV for the configured model and input shapes.
std::string cmd_flops(const io::RunConfig& cfg);

/// Scores predictions against a truth file; every truth id needs a prediction.
metrics::DbaReport cmd_score(const fs::path& truth, const fs::path& predictions);

/// Loads a prepared manifest into memory.
pipeline::PreparedDataset load_prepared(const io::PreparedManifest& m);

/// Model input shapes implied by the world and prep sections.
void configure_inputs_from_config(io::RunConfig& cfg);

/// Parses arguments, runs a command and maps errors onto exit codes:
/// 0 success, 2 config, 3 data, 4 numeric, 1 anything else.
int run_cli(int argc, char** argv);

}  // namespace mmbeam::app
