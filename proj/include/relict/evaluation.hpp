#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relict/replica_engine.hpp"
#include "relict/volume_io.hpp"

namespace relict {

// "<synthetic_id>::<training_id>".
std::string make_pair_id(std::string_view synthetic_id, std::string_view training_id);
// Splits a pair id; throws InputError when the separator is missing.
std::pair<std::string, std::string> split_pair_id(std::string_view pair_id);

struct PreselectedPair {
  std::string synthetic_id;
  std::string training_id;
  double rmse = 0.0;

  std::string pair_id() const { return make_pair_id(synthetic_id, training_id); }
};

// For each synthetic image (in corpus order) the training image of minimum
// voxel RMSE, ties going to the lexicographically smaller id.
std::vector<PreselectedPair> preselect_pairs(const Corpus& training, const Corpus& synthetic,
                                             unsigned workers = 1);

// Likert scale: 1 certainly not a replica ... 4 certainly replica.
inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 4;
inline constexpr int kReplicaScore = 3;

struct RatingRecord {
  std::string pair_id;
  std::string rater_id;
  int score = 0;
  int round = 1;
  std::string timestamp;
};

std::string to_json_line(const RatingRecord& rating);
// Throws FormatError on malformed JSON and InputError on out-of-range fields.
RatingRecord rating_from_json_line(std::string_view line);

// Reads a ratings log. An unterminated final line (an interrupted append) is
// skipped and reported through `warnings`.
std::vector<RatingRecord> read_ratings_log(const std::filesystem::path& path,
                                           std::vector<std::string>* warnings = nullptr);

enum class ReferenceClass { replica, not_replica, unresolved };
enum class Provenance { consensus_round_1, consensus_round_2, unresolved };

std::string_view to_string(ReferenceClass label);
std::string_view to_string(Provenance provenance);

struct ReferenceLabel {
  std::string pair_id;
  ReferenceClass label = ReferenceClass::unresolved;
  Provenance provenance = Provenance::unresolved;
};

// Two-rater consensus. Both round-1 scores >= 3 give replica, both <= 2 give
// not_replica; a disagreement needs round-2 scores from both raters and stays
// unresolved if they still disagree. Output is sorted by pair id. Throws
// IncompleteRatingsError on missing coverage.
std::vector<ReferenceLabel> aggregate_ratings(std::span<const RatingRecord> ratings);

void write_reference_labels(const std::filesystem::path& path, std::span<const ReferenceLabel> labels);
std::vector<ReferenceLabel> read_reference_labels(const std::filesystem::path& path);

struct AgreementStats {
  std::size_t pairs = 0;
  std::size_t agreeing = 0;
  // 0..100.
  double percent_agreement = 0.0;
  std::map<std::string, double> median_score;
};

// Round-1 agreement of the binarized (score >= 3) decisions and each rater's
// median round-1 score.
AgreementStats agreement_stats(std::span<const RatingRecord> ratings);

struct SweepPoint {
  double threshold = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double balanced_accuracy = 0.0;
};

struct LabeledValue {
  std::string pair_id;
  double value = 0.0;
  bool replica = false;
};

struct SweepResult {
  std::string measure;
  std::vector<SweepPoint> points;
  double optimal_threshold = 0.0;
  double optimal_balanced_accuracy = 0.0;
  std::size_t excluded_unresolved = 0;
  std::vector<LabeledValue> samples;
};

inline constexpr double kSweepStep = 0.01;

// Thresholds k/100 from floor(min) to ceil(max) + 0.01 on the 0.01 grid;
// predicted replica iff value < T, replica being the positive class. The
// optimum is the largest balanced accuracy, ties to the smallest T.
// `values` maps pair id to measure value; every resolved label needs a value.
// Throws DegenerateLabelsError unless both classes are present.
SweepResult sweep_thresholds(std::string measure, const std::map<std::string, double>& values,
                             std::span<const ReferenceLabel> labels);

// Sweeps for every measure found in `records`; the value of a pair is the
// score of its synthetic image's record.
std::vector<SweepResult> sweep_records(std::span<const RankingRecord> records,
                                       std::span<const ReferenceLabel> labels);

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep);

// Table-style wall time, e.g. "16 mins".
std::string format_runtime_minutes(double seconds);

void write_sweeps_json(const std::filesystem::path& path, std::span<const SweepResult> sweeps);
std::vector<SweepResult> read_sweeps_json(const std::filesystem::path& path);

void write_timings_json(const std::filesystem::path& path, std::span<const MeasureTiming> timings);
std::vector<MeasureTiming> read_timings_json(const std::filesystem::path& path);

void write_agreement_json(const std::filesystem::path& path, const AgreementStats& stats);
AgreementStats read_agreement_json(const std::filesystem::path& path);

struct ReportInputs {
  std::span<const RankingRecord> records;
  std::span<const SweepResult> sweeps;
  std::optional<AgreementStats> agreement;
  std::span<const MeasureTiming> timings;
};

// Writes summary.json, sweep_<measure>.csv and scatter_<measure>.svg per
// sweep into `out`. Throws IoError when `out` cannot be written.
void emit_report(const ReportInputs& inputs, const std::filesystem::path& out);

}  // namespace relict
