#include "relict/replica_engine.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>

#include <fmt/format.h>
#include <json.hpp>

#include "relict/errors.hpp"
#include "relict/feature_metrics.hpp"
#include "relict/parallel.hpp"
#include "relict/segmentation_metrics.hpp"

namespace relict {

namespace {

constexpr std::array<std::pair<MeasureKind, std::string_view>, 9> kMeasureNames{{
    {MeasureKind::mae, "mae"},
    {MeasureKind::rmse, "rmse"},
    {MeasureKind::ssim, "ssim"},
    {MeasureKind::emb_rmse, "emb_rmse"},
    {MeasureKind::emb_cosine, "emb_cosine"},
    {MeasureKind::dice_binary, "dice_binary"},
    {MeasureKind::dice_multiclass, "dice_multiclass"},
    {MeasureKind::asd_binary, "asd_binary"},
    {MeasureKind::asd_multiclass, "asd_multiclass"},
}};

// Rounding slack accepted on similarity ranges before a value is rejected.
constexpr double kRangeSlack = 1e-12;

struct PreparedImage {
  std::shared_ptr<const Volume3D> volume;
  std::shared_ptr<const EmbeddingVector> embedding;
  std::shared_ptr<const SegmentationMask> mask;
  std::shared_ptr<const PreparedMask> surfaces;
};

bool needs_surfaces(MeasureKind kind) {
  return kind == MeasureKind::asd_binary || kind == MeasureKind::asd_multiclass;
}

PreparedImage prepare(const ImageBundle& image, CorpusRole role, const MeasureSpec& spec,
                      std::vector<std::string>& warnings) {
  PreparedImage out;
  switch (spec.level()) {
    case Level::image:
      if (!image.volume) {
        throw InputError(fmt::format("{} image '{}' has no volume required by measure {}",
                                     to_string(role), image.id, spec.name()));
      }
      out.volume = spec.zscore ? std::make_shared<const Volume3D>(zscore_normalize(*image.volume, &warnings))
                               : image.volume;
      break;
    case Level::feature:
      if (!image.embedding) {
        throw InputError(fmt::format("{} image '{}' has no embedding required by measure {}",
                                     to_string(role), image.id, spec.name()));
      }
      out.embedding = image.embedding;
      break;
    case Level::segmentation:
      if (!image.mask) {
        throw InputError(fmt::format("{} image '{}' has no mask required by measure {}",
                                     to_string(role), image.id, spec.name()));
      }
      out.mask = image.mask;
      if (spec.kind == MeasureKind::asd_binary) {
        const std::array<std::int32_t, 1> label{spec.label};
        out.surfaces = std::make_shared<const PreparedMask>(image.mask, label);
      } else if (spec.kind == MeasureKind::asd_multiclass) {
        out.surfaces = std::make_shared<const PreparedMask>(image.mask);
      }
      break;
  }
  return out;
}

std::size_t prepared_bytes(const ImageBundle& image, const MeasureSpec& spec) {
  if (spec.level() == Level::image && spec.zscore && image.volume) {
    return image.volume->size() * sizeof(double);
  }
  if (needs_surfaces(spec.kind) && image.mask) {
    const std::size_t labels = spec.kind == MeasureKind::asd_binary ? 1 : image.mask->label_set().size();
    return PreparedMask::estimate_bytes(image.mask->dims(), std::max<std::size_t>(labels, 1));
  }
  return 0;
}

double evaluate(const PreparedImage& s, const PreparedImage& t, const MeasureSpec& spec) {
  switch (spec.kind) {
    case MeasureKind::mae: return mae(*s.volume, *t.volume);
    case MeasureKind::rmse: return rmse(*s.volume, *t.volume);
    case MeasureKind::ssim: return mean_ssim(*s.volume, *t.volume, spec.ssim);
    case MeasureKind::emb_rmse: return embedding_rmse(*s.embedding, *t.embedding);
    case MeasureKind::emb_cosine: return cosine_similarity(*s.embedding, *t.embedding);
    case MeasureKind::dice_binary: return dice_binary(*s.mask, *t.mask, spec.label);
    case MeasureKind::dice_multiclass: return dice_multiclass(*s.mask, *t.mask);
    case MeasureKind::asd_binary: return asd_binary(*s.surfaces, *t.surfaces, spec.label);
    case MeasureKind::asd_multiclass: return asd_multiclass(*s.surfaces, *t.surfaces);
  }
  return 0.0;
}

void check_corpus_size(const Corpus& training, std::size_t n) {
  if (training.images.size() < 2) {
    throw CorpusError(fmt::format("training corpus holds {} image(s); at least 2 are required",
                                  training.images.size()));
  }
  if (n < 2) throw ConfigError(fmt::format("n must be at least 2, got {}", n));
  if (n > training.images.size()) {
    throw CorpusError(fmt::format("n = {} exceeds the training corpus size {}", n,
                                  training.images.size()));
  }
}

// Candidate sets for every image of `synthetics` against the training corpus.
std::vector<CandidateSet> compute_candidates(const Corpus& training,
                                             std::span<const ImageBundle> synthetics,
                                             CorpusRole synthetic_role, const MeasureSpec& spec,
                                             std::size_t n, unsigned workers,
                                             std::size_t memory_budget_mb,
                                             std::vector<std::string>& warnings) {
  check_corpus_size(training, n);
  const std::size_t n_syn = synthetics.size();
  const std::size_t n_train = training.images.size();

  std::vector<std::vector<std::string>> syn_warnings(n_syn);
  std::vector<PreparedImage> prepared_syn(n_syn);
  parallel_for(n_syn, workers, [&](std::size_t s) {
    prepared_syn[s] = prepare(synthetics[s], synthetic_role, spec, syn_warnings[s]);
  });

  const std::size_t item_bytes = prepared_bytes(training.images.front(), spec);
  const std::size_t budget = memory_budget_mb * 1024ULL * 1024ULL;
  const std::size_t block = item_bytes == 0 ? n_train : std::clamp<std::size_t>(budget / item_bytes, 1, n_train);

  std::vector<double> raw(n_syn * n_train, 0.0);
  std::vector<std::vector<std::string>> train_warnings(n_train);
  std::vector<PreparedImage> prepared_train;
  for (std::size_t begin = 0; begin < n_train; begin += block) {
    const std::size_t end = std::min(n_train, begin + block);
    prepared_train.assign(end - begin, PreparedImage{});
    parallel_for(end - begin, workers, [&](std::size_t i) {
      prepared_train[i] = prepare(training.images[begin + i], CorpusRole::training, spec,
                                  train_warnings[begin + i]);
    });
    const std::size_t width = end - begin;
    parallel_for(n_syn * width, workers, [&](std::size_t k) {
      const std::size_t s = k / width;
      const std::size_t t = k % width;
      try {
        raw[s * n_train + begin + t] = evaluate(prepared_syn[s], prepared_train[t], spec);
      } catch (const Error& e) {
        rethrow_with_context(e, fmt::format("measure {} on pair (synthetic '{}', training '{}')",
                                            spec.name(), synthetics[s].id,
                                            training.images[begin + t].id));
      }
    });
    prepared_train.clear();
  }
  for (const auto& w : syn_warnings) warnings.insert(warnings.end(), w.begin(), w.end());
  for (const auto& w : train_warnings) warnings.insert(warnings.end(), w.begin(), w.end());

  std::vector<CandidateSet> out(n_syn);
  for (std::size_t s = 0; s < n_syn; ++s) {
    CandidateSet& c = out[s];
    c.synthetic_id = synthetics[s].id;
    c.measure = spec.name();
    c.n = n;
    c.neighbors.reserve(n_train);
    for (std::size_t t = 0; t < n_train; ++t) {
      const double value = raw[s * n_train + t];
      double distance = 0.0;
      try {
        distance = to_distance(value, spec);
      } catch (const Error& e) {
        rethrow_with_context(e, fmt::format("measure {} on pair (synthetic '{}', training '{}')",
                                            spec.name(), c.synthetic_id, training.images[t].id));
      }
      c.neighbors.push_back({training.images[t].id, value, distance});
    }
    std::sort(c.neighbors.begin(), c.neighbors.end(), [](const Neighbor& a, const Neighbor& b) {
      if (a.distance_value != b.distance_value) return a.distance_value < b.distance_value;
      return a.training_id < b.training_id;
    });
  }
  return out;
}

std::optional<double> optional_number(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

std::string_view to_string(MeasureKind kind) {
  for (const auto& [k, name] : kMeasureNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::string_view to_string(Level level) {
  switch (level) {
    case Level::image: return "image";
    case Level::feature: return "feature";
    case Level::segmentation: return "segmentation";
  }
  return "unknown";
}

std::optional<MeasureKind> parse_measure_kind(std::string_view name) {
  for (const auto& [k, n] : kMeasureNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

Level MeasureSpec::level() const {
  switch (kind) {
    case MeasureKind::mae:
    case MeasureKind::rmse:
    case MeasureKind::ssim: return Level::image;
    case MeasureKind::emb_rmse:
    case MeasureKind::emb_cosine: return Level::feature;
    default: return Level::segmentation;
  }
}

Polarity MeasureSpec::polarity() const {
  switch (kind) {
    case MeasureKind::ssim:
    case MeasureKind::emb_cosine:
    case MeasureKind::dice_binary:
    case MeasureKind::dice_multiclass: return Polarity::similarity;
    default: return Polarity::distance;
  }
}

MeasureSpec MeasureSpec::from_name(std::string_view name) {
  const auto kind = parse_measure_kind(name);
  if (!kind) throw ConfigError(fmt::format("unknown measure '{}'", name));
  MeasureSpec spec;
  spec.kind = *kind;
  return spec;
}

double to_distance(double raw, const MeasureSpec& spec) {
  if (!std::isfinite(raw)) {
    throw RangeError(fmt::format("{} value {} is not finite", spec.name(), raw));
  }
  switch (spec.kind) {
    case MeasureKind::dice_binary:
    case MeasureKind::dice_multiclass:
      if (raw < 0.0 || raw > 1.0) {
        throw RangeError(fmt::format("{} value {} outside [0, 1]", spec.name(), raw));
      }
      return 1.0 - raw;
    case MeasureKind::ssim:
    case MeasureKind::emb_cosine: {
      if (raw < -1.0 - kRangeSlack || raw > 1.0 + kRangeSlack) {
        throw RangeError(fmt::format("{} value {} outside [-1, 1]", spec.name(), raw));
      }
      const double clamped = std::clamp(raw, -1.0, 1.0);
      return (1.0 - clamped) / 2.0;
    }
    default:
      if (raw < 0.0) throw RangeError(fmt::format("{} value {} is negative", spec.name(), raw));
      return raw;
  }
}

double mean_of_closest(const CandidateSet& c) {
  if (c.n == 0 || c.neighbors.size() < c.n) {
    throw InputError(fmt::format("{} / {}: {} neighbors available, n = {}", c.synthetic_id, c.measure,
                                 c.neighbors.size(), c.n));
  }
  const double closest = c.neighbors.front().distance_value;
  double excess = 0.0;
  for (std::size_t i = 0; i < c.n; ++i) excess += c.neighbors[i].distance_value - closest;
  return closest + excess / static_cast<double>(c.n);
}

double distance_ratio(const CandidateSet& c) {
  const double mean = mean_of_closest(c);
  if (mean == 0.0) return 0.0;
  return c.neighbors.front().distance_value / mean;
}

std::string_view to_string(Decision decision) {
  switch (decision) {
    case Decision::replica: return "replica";
    case Decision::not_replica: return "not_replica";
    case Decision::undecided: return "undecided";
  }
  return "undecided";
}

std::string_view to_string(ThresholdMode mode) {
  return mode == ThresholdMode::ratio ? "ratio" : "absolute";
}

const Threshold* ThresholdConfig::find(std::string_view measure) const {
  const auto it = per_measure.find(std::string(measure));
  return it == per_measure.end() ? nullptr : &it->second;
}

void ThresholdConfig::validate() const {
  for (const auto& [name, t] : per_measure) {
    if (!std::isfinite(t.value)) throw ConfigError(fmt::format("threshold for {} is not finite", name));
    const auto kind = parse_measure_kind(name);
    if (!kind) throw ConfigError(fmt::format("threshold given for unknown measure '{}'", name));
    MeasureSpec spec;
    spec.kind = *kind;
    const bool segmentation = spec.level() == Level::segmentation;
    if (segmentation != (t.mode == ThresholdMode::absolute)) {
      throw ConfigError(fmt::format("threshold for {} must use {} mode", name,
                                    segmentation ? "absolute" : "ratio"));
    }
  }
}

ThresholdConfig parse_threshold_config(std::string_view text) {
  ThresholdConfig config;
  try {
    const auto doc = nlohmann::json::parse(text);
    if (!doc.is_object()) throw ConfigError("threshold config must be a JSON object");
    for (const auto& [name, value] : doc.items()) {
      const auto kind = parse_measure_kind(name);
      if (!kind) throw ConfigError(fmt::format("threshold given for unknown measure '{}'", name));
      MeasureSpec spec;
      spec.kind = *kind;
      Threshold t;
      t.mode = spec.level() == Level::segmentation ? ThresholdMode::absolute : ThresholdMode::ratio;
      if (value.is_object()) {
        t.value = value.at("threshold").get<double>();
        if (value.contains("mode")) {
          const auto mode = value.at("mode").get<std::string>();
          if (mode != "ratio" && mode != "absolute") {
            throw ConfigError(fmt::format("threshold mode '{}' for {} is invalid", mode, name));
          }
          t.mode = mode == "ratio" ? ThresholdMode::ratio : ThresholdMode::absolute;
        }
      } else {
        t.value = value.get<double>();
      }
      config.per_measure[name] = t;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("malformed threshold config: {}", e.what()));
  }
  config.validate();
  return config;
}

ThresholdConfig read_threshold_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("{}: cannot open threshold config", path.string()));
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_threshold_config(text);
  } catch (const Error& e) {
    rethrow_with_context(e, path.string());
  }
}

void write_threshold_config(const ThresholdConfig& config, const std::filesystem::path& path) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& [name, t] : config.per_measure) {
    doc[name] = {{"threshold", t.value}, {"mode", std::string(to_string(t.mode))}};
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(fmt::format("{}: cannot write threshold config", path.string()));
  out << doc.dump(2) << '\n';
}

Decision decide(double value, const Threshold& threshold) {
  return value < threshold.value ? Decision::replica : Decision::not_replica;
}

std::string to_json_line(const RankingRecord& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["schema_version"] = kRecordSchemaVersion;
  j["synthetic_id"] = r.synthetic_id;
  j["measure"] = r.measure;
  j["closest_training_id"] = r.closest_training_id;
  j["closest_distance"] = r.closest_distance;
  j["mean_of_n_closest"] = r.mean_of_n_closest;
  j["distance_ratio"] = opt(r.distance_ratio);
  j["absolute_value"] = opt(r.absolute_value);
  j["decision"] = std::string(to_string(r.decision));
  return j.dump();
}

RankingRecord record_from_json_line(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    if (j.at("schema_version").get<int>() != kRecordSchemaVersion) {
      throw FormatError(fmt::format("unsupported record schema_version {}",
                                    j.at("schema_version").dump()));
    }
    RankingRecord r;
    r.synthetic_id = j.at("synthetic_id").get<std::string>();
    r.measure = j.at("measure").get<std::string>();
    r.closest_training_id = j.at("closest_training_id").get<std::string>();
    r.closest_distance = j.at("closest_distance").get<double>();
    r.mean_of_n_closest = j.at("mean_of_n_closest").get<double>();
    r.distance_ratio = optional_number(j, "distance_ratio");
    r.absolute_value = optional_number(j, "absolute_value");
    const auto decision = j.at("decision").get<std::string>();
    if (decision == "replica") {
      r.decision = Decision::replica;
    } else if (decision == "not_replica") {
      r.decision = Decision::not_replica;
    } else if (decision == "undecided") {
      r.decision = Decision::undecided;
    } else {
      throw FormatError(fmt::format("unknown decision '{}'", decision));
    }
    if (r.distance_ratio.has_value() == r.absolute_value.has_value()) {
      throw FormatError("record must carry exactly one of distance_ratio and absolute_value");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("malformed ranking record: {}", e.what()));
  }
}

void write_records(const std::filesystem::path& path, std::span<const RankingRecord> records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError(fmt::format("{}: cannot write records", path.string()));
  for (const auto& r : records) out << to_json_line(r) << '\n';
  if (!out) throw IoError(fmt::format("{}: write failed", path.string()));
}

std::vector<RankingRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("{}: cannot open records", path.string()));
  std::vector<RankingRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json_line(line));
    } catch (const Error& e) {
      rethrow_with_context(e, fmt::format("{}:{}", path.string(), line_no));
    }
  }
  return records;
}

CandidateSet rank_training(const ImageBundle& synthetic, const Corpus& training,
                           const MeasureSpec& spec, std::size_t n, unsigned workers) {
  std::vector<std::string> warnings;
  auto sets = compute_candidates(training, std::span<const ImageBundle>(&synthetic, 1),
                                 CorpusRole::synthetic, spec, n, workers,
                                 std::numeric_limits<std::size_t>::max() / (1024 * 1024), warnings);
  return std::move(sets.front());
}

RankingRecord make_record(const CandidateSet& c, const MeasureSpec& spec,
                          const ThresholdConfig* thresholds) {
  RankingRecord r;
  r.synthetic_id = c.synthetic_id;
  r.measure = c.measure;
  if (c.neighbors.empty()) throw InputError(fmt::format("{}: no neighbors", c.synthetic_id));
  r.closest_training_id = c.neighbors.front().training_id;
  r.closest_distance = c.neighbors.front().distance_value;
  r.mean_of_n_closest = mean_of_closest(c);
  if (spec.level() == Level::segmentation) {
    r.absolute_value = r.closest_distance;
  } else {
    r.distance_ratio = distance_ratio(c);
  }
  r.decision = Decision::undecided;
  if (thresholds != nullptr) {
    if (const Threshold* t = thresholds->find(c.measure)) r.decision = decide(r.score(), *t);
  }
  return r;
}

PipelineResult run_pipeline(const Corpus& training, const Corpus& synthetic,
                            std::span<const MeasureSpec> specs, const PipelineOptions& options) {
  if (specs.empty()) throw ConfigError("no measures requested");
  check_corpus_size(training, options.n);
  if (options.thresholds) options.thresholds->validate();
  const ThresholdConfig* thresholds = options.thresholds ? &*options.thresholds : nullptr;

  PipelineResult result;
  for (const MeasureSpec& spec : specs) {
    const auto start = std::chrono::steady_clock::now();
    auto sets = compute_candidates(training, synthetic.images, synthetic.role, spec, options.n,
                                   options.workers, options.memory_budget_mb, result.warnings);
    std::vector<RankingRecord> records;
    records.reserve(sets.size());
    for (const auto& c : sets) records.push_back(make_record(c, spec, thresholds));
    std::stable_sort(records.begin(), records.end(), [](const RankingRecord& a, const RankingRecord& b) {
      if (a.score() != b.score()) return a.score() < b.score();
      return a.synthetic_id < b.synthetic_id;
    });
    result.records.insert(result.records.end(), records.begin(), records.end());
    result.candidates.push_back(std::move(sets));
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    result.timings.push_back({spec.name(), elapsed.count()});
  }
  return result;
}

void write_neighbor_csv(const std::filesystem::path& path, std::span<const CandidateSet> candidates) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError(fmt::format("{}: cannot write neighbor dump", path.string()));
  out << "synthetic_id,rank,training_id,raw_value,distance_value\n";
  for (const auto& c : candidates) {
    const std::size_t count = std::min(c.n, c.neighbors.size());
    for (std::size_t i = 0; i < count; ++i) {
      const auto& nb = c.neighbors[i];
      out << fmt::format("{},{},{},{},{}\n", c.synthetic_id, i + 1, nb.training_id, nb.raw_value,
                         nb.distance_value);
    }
  }
  if (!out) throw IoError(fmt::format("{}: write failed", path.string()));
}

}  // namespace relict
