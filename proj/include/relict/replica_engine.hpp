#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relict/image_metrics.hpp"
#include "relict/volume_io.hpp"

namespace relict {

enum class MeasureKind {
  mae,
  rmse,
  ssim,
  emb_rmse,
  emb_cosine,
  dice_binary,
  dice_multiclass,
  asd_binary,
  asd_multiclass,
};

enum class Level { image, feature, segmentation };
enum class Polarity { distance, similarity };

std::string_view to_string(MeasureKind kind);
std::string_view to_string(Level level);
std::optional<MeasureKind> parse_measure_kind(std::string_view name);

struct MeasureSpec {
  MeasureKind kind = MeasureKind::rmse;
  // Used by ssim only.
  SsimParams ssim;
  // Foreground label for dice_binary / asd_binary.
  std::int32_t label = 1;
  // Z-score volumes before image-level comparison. Off by default: raw
  // intensities are compared.
  bool zscore = false;

  std::string name() const { return std::string(to_string(kind)); }
  Level level() const;
  Polarity polarity() const;

  // Throws ConfigError on unknown names.
  static MeasureSpec from_name(std::string_view name);
};

// Maps a raw measure value onto [0, inf) where smaller means closer:
// distances pass through, dice becomes 1 - dice, SSIM and cosine become
// (1 - raw) / 2. Throws RangeError when raw is outside the measure's range.
double to_distance(double raw, const MeasureSpec& spec);

struct Neighbor {
  std::string training_id;
  double raw_value = 0.0;
  double distance_value = 0.0;
};

struct CandidateSet {
  std::string synthetic_id;
  std::string measure;
  // Every training image, ascending by distance, ties by training id.
  std::vector<Neighbor> neighbors;
  std::size_t n = 50;
};

// Closest distance over the mean of the n closest distances (the closest
// included). Returns 0 when that mean is 0. Throws InputError when fewer than
// n neighbors exist.
double distance_ratio(const CandidateSet& candidates);

// Mean of the n smallest distances, computed as closest + mean excess so it is
// never below the closest distance.
double mean_of_closest(const CandidateSet& candidates);

enum class Decision { replica, not_replica, undecided };
enum class ThresholdMode { ratio, absolute };

std::string_view to_string(Decision decision);
std::string_view to_string(ThresholdMode mode);

struct Threshold {
  double value = 0.0;
  ThresholdMode mode = ThresholdMode::ratio;
};

struct ThresholdConfig {
  std::map<std::string, Threshold> per_measure;

  const Threshold* find(std::string_view measure) const;
  // Throws ConfigError unless every threshold is finite and its mode is
  // absolute exactly for segmentation-level measures.
  void validate() const;
};

// JSON `{measure: {"threshold": x, "mode": "ratio"|"absolute"}}`; a bare
// number takes the measure's default mode.
ThresholdConfig parse_threshold_config(std::string_view text);
ThresholdConfig read_threshold_config(const std::filesystem::path& path);
void write_threshold_config(const ThresholdConfig& config, const std::filesystem::path& path);

// Replica iff value < threshold.
Decision decide(double value, const Threshold& threshold);

struct RankingRecord {
  std::string synthetic_id;
  std::string measure;
  std::string closest_training_id;
  double closest_distance = 0.0;
  double mean_of_n_closest = 0.0;
  // Image and feature levels.
  std::optional<double> distance_ratio;
  // Segmentation level: the closest converted distance itself.
  std::optional<double> absolute_value;
  Decision decision = Decision::undecided;

  // The value thresholded for decisions: ratio or absolute value.
  double score() const { return distance_ratio ? *distance_ratio : absolute_value.value_or(0.0); }
};

inline constexpr int kRecordSchemaVersion = 1;

std::string to_json_line(const RankingRecord& record);
RankingRecord record_from_json_line(std::string_view line);
void write_records(const std::filesystem::path& path, std::span<const RankingRecord> records);
std::vector<RankingRecord> read_records(const std::filesystem::path& path);

// One synthetic image against every training image. Throws InputError when a
// modality required by the measure's level is missing and CorpusError when
// the corpus holds fewer than 2 images or fewer than n.
CandidateSet rank_training(const ImageBundle& synthetic, const Corpus& training,
                           const MeasureSpec& spec, std::size_t n, unsigned workers = 1);

RankingRecord make_record(const CandidateSet& candidates, const MeasureSpec& spec,
                          const ThresholdConfig* thresholds);

struct PipelineOptions {
  std::size_t n = 50;
  unsigned workers = 1;
  // Caps memory held by per-training-image precomputation (normalized
  // volumes, surface distance maps); training images are processed in blocks
  // that fit.
  std::size_t memory_budget_mb = 1024;
  std::optional<ThresholdConfig> thresholds;
};

struct MeasureTiming {
  std::string measure;
  double seconds = 0.0;
};

struct PipelineResult {
  // Grouped by spec in input order, each group ascending by score then
  // synthetic id.
  std::vector<RankingRecord> records;
  // candidates[spec_index][synthetic_index].
  std::vector<std::vector<CandidateSet>> candidates;
  std::vector<MeasureTiming> timings;
  std::vector<std::string> warnings;
};

PipelineResult run_pipeline(const Corpus& training, const Corpus& synthetic,
                            std::span<const MeasureSpec> specs, const PipelineOptions& options);

// CSV `synthetic_id,rank,training_id,raw_value,distance_value` with the first
// n neighbors of each synthetic image, rank starting at 1.
void write_neighbor_csv(const std::filesystem::path& path, std::span<const CandidateSet> candidates);

}  // namespace relict
