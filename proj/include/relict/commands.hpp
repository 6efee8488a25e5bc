#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "relict/errors.hpp"
#include "relict/evaluation.hpp"
#include "relict/replica_engine.hpp"

namespace relict {

struct RunConfig {
  std::filesystem::path training_manifest;
  std::filesystem::path synthetic_manifest;
  std::vector<MeasureSpec> measures;
  std::size_t n = 50;
  std::optional<ThresholdConfig> thresholds;
  std::filesystem::path output_dir;
  unsigned worker_count = 1;
  std::size_t memory_budget_mb = 1024;
  // Write neighbors_<measure>.csv files.
  bool neighbor_dump = true;
  std::array<std::size_t, 3> pool_shape{4, 4, 4};

  // Throws ConfigError unless manifests exist, measures are non-empty with
  // distinct names, n >= 2 and worker_count >= 1.
  void validate() const;
};

// JSON config. `measures` holds names or objects such as
// {"name": "ssim", "data_range": 1.0}, {"name": "asd_binary", "label": 2} or
// {"name": "rmse", "zscore": true}. `thresholds` is an inline object or a path
// to a threshold file. Relative paths resolve against the config's directory.
RunConfig read_run_config(const std::filesystem::path& path);

struct RankOutputs {
  std::filesystem::path records;
  std::vector<std::filesystem::path> neighbor_csvs;
  std::filesystem::path runtimes;
  PipelineResult result;
};

// Loads both corpora, runs the pipeline and writes records.jsonl,
// neighbors_<measure>.csv and runtimes.json into output_dir. Wall time per
// measure is printed to `log`. RELICT_WORKERS overrides worker_count.
RankOutputs cmd_rank(const RunConfig& config, std::ostream& log);

// Aggregates ratings, sweeps every measure in the records and writes
// labels.json, agreement.json, sweeps.json, sweep_<measure>.csv and
// thresholds.json into `out`.
std::vector<SweepResult> cmd_sweep(const std::filesystem::path& ratings, const std::filesystem::path& records,
                                   const std::filesystem::path& out, std::ostream& log);

// Renders the outputs of rank and sweep found in `in` (records.jsonl,
// sweeps.json, agreement.json, runtimes.json; all optional except sweeps.json)
// into a report directory.
void cmd_report(const std::filesystem::path& in, const std::filesystem::path& out);

// 2 for InputError, 3 for DegenerateLabelsError, 1 otherwise.
int exit_code_for(const Error& error);
// {"error": "<ErrorName>", "message": "..."}.
std::string error_json(const Error& error);

}  // namespace relict
