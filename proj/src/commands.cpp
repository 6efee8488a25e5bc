#include "relict/commands.hpp"

#include <fstream>
#include <set>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "relict/parallel.hpp"
#include "relict/volume_io.hpp"

namespace relict {

namespace {

namespace fs = std::filesystem;

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

MeasureSpec parse_measure(const nlohmann::json& j) {
  if (j.is_string()) return MeasureSpec::from_name(j.get<std::string>());
  if (!j.is_object()) throw ConfigError("each measure must be a name or an object with a \"name\"");
  MeasureSpec spec = MeasureSpec::from_name(j.at("name").get<std::string>());
  for (const auto& [key, value] : j.items()) {
    if (key == "name") continue;
    if (key == "data_range") {
      spec.ssim.data_range = value.get<double>();
    } else if (key == "sigma") {
      spec.ssim.sigma = value.get<double>();
    } else if (key == "truncate") {
      spec.ssim.truncate = value.get<double>();
    } else if (key == "k1") {
      spec.ssim.k1 = value.get<double>();
    } else if (key == "k2") {
      spec.ssim.k2 = value.get<double>();
    } else if (key == "label") {
      spec.label = value.get<std::int32_t>();
    } else if (key == "zscore") {
      spec.zscore = value.get<bool>();
    } else {
      throw ConfigError(fmt::format("measure {} has unknown option '{}'", spec.name(), key));
    }
  }
  return spec;
}

}  // namespace

void RunConfig::validate() const {
  for (const auto& [what, path] : {std::pair{"training_manifest", training_manifest},
                                   std::pair{"synthetic_manifest", synthetic_manifest}}) {
    if (path.empty()) throw ConfigError(fmt::format("{} is required", what));
    if (!fs::exists(path)) throw ConfigError(fmt::format("{} {} does not exist", what, path.string()));
  }
  if (measures.empty()) throw ConfigError("measures must not be empty");
  std::set<std::string> names;
  for (const auto& m : measures) {
    if (!names.insert(m.name()).second) {
      throw ConfigError(fmt::format("measure {} is listed twice; records are keyed by measure name", m.name()));
    }
  }
  if (n < 2) throw ConfigError(fmt::format("n = {} must be at least 2", n));
  if (worker_count < 1) throw ConfigError("worker_count must be at least 1");
  if (output_dir.empty()) throw ConfigError("output_dir is required");
  for (std::size_t s : pool_shape) {
    if (s == 0) throw ConfigError("pool_shape entries must be positive");
  }
  if (thresholds) thresholds->validate();
}

RunConfig read_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("{}: cannot open config", path.string()));
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  RunConfig config;
  try {
    const auto doc = nlohmann::json::parse(in);
    if (!doc.is_object()) throw ConfigError(fmt::format("{}: config must be a JSON object", path.string()));
    static const std::set<std::string> known{"training_manifest", "synthetic_manifest", "measures", "n",
                                             "thresholds", "output_dir", "worker_count", "memory_budget_mb",
                                             "neighbor_dump", "pool_shape"};
    for (const auto& [key, value] : doc.items()) {
      if (!known.contains(key)) throw ConfigError(fmt::format("{}: unknown config key '{}'", path.string(), key));
    }
    config.training_manifest = resolve(base, doc.at("training_manifest").get<std::string>());
    config.synthetic_manifest = resolve(base, doc.at("synthetic_manifest").get<std::string>());
    config.output_dir = resolve(base, doc.at("output_dir").get<std::string>());
    for (const auto& m : doc.at("measures")) config.measures.push_back(parse_measure(m));
    if (doc.contains("n")) {
      const auto n = doc["n"].get<long long>();
      if (n < 2) throw ConfigError(fmt::format("n = {} must be at least 2", n));
      config.n = static_cast<std::size_t>(n);
    }
    if (doc.contains("worker_count")) {
      const auto w = doc["worker_count"].get<long long>();
      if (w < 1) throw ConfigError("worker_count must be at least 1");
      config.worker_count = static_cast<unsigned>(w);
    }
    if (doc.contains("memory_budget_mb")) config.memory_budget_mb = doc["memory_budget_mb"].get<std::size_t>();
    if (doc.contains("neighbor_dump")) config.neighbor_dump = doc["neighbor_dump"].get<bool>();
    if (doc.contains("pool_shape")) config.pool_shape = doc["pool_shape"].get<std::array<std::size_t, 3>>();
    if (doc.contains("thresholds") && !doc["thresholds"].is_null()) {
      const auto& t = doc["thresholds"];
      config.thresholds = t.is_string() ? read_threshold_config(resolve(base, t.get<std::string>()))
                                        : parse_threshold_config(t.dump());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: invalid config: {}", path.string(), e.what()));
  }
  config.validate();
  return config;
}

RankOutputs cmd_rank(const RunConfig& config, std::ostream& log) {
  config.validate();
  const unsigned workers = resolve_worker_count(config.worker_count);

  const auto training_manifest = read_manifest(config.training_manifest);
  const auto synthetic_manifest = read_manifest(config.synthetic_manifest);
  if (training_manifest.role != CorpusRole::training) {
    throw ConfigError(fmt::format("{} is a {} manifest, expected training", config.training_manifest.string(),
                                  to_string(training_manifest.role)));
  }
  if (synthetic_manifest.role != CorpusRole::synthetic) {
    throw ConfigError(fmt::format("{} is a {} manifest, expected synthetic", config.synthetic_manifest.string(),
                                  to_string(synthetic_manifest.role)));
  }
  const CorpusLoadOptions load{config.pool_shape, workers};
  const Corpus training = load_corpus(training_manifest, load);
  const Corpus synthetic = load_corpus(synthetic_manifest, load);

  PipelineOptions options;
  options.n = config.n;
  options.workers = workers;
  options.memory_budget_mb = config.memory_budget_mb;
  options.thresholds = config.thresholds;

  RankOutputs out;
  out.result = run_pipeline(training, synthetic, config.measures, options);
  for (const auto& w : out.result.warnings) fmt::print(log, "warning: {}\n", w);

  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (!fs::is_directory(config.output_dir)) {
    throw IoError(fmt::format("{}: cannot create output directory", config.output_dir.string()));
  }
  out.records = config.output_dir / "records.jsonl";
  write_records(out.records, out.result.records);
  if (config.neighbor_dump) {
    for (std::size_t i = 0; i < config.measures.size(); ++i) {
      const auto path = config.output_dir / fmt::format("neighbors_{}.csv", config.measures[i].name());
      write_neighbor_csv(path, out.result.candidates[i]);
      out.neighbor_csvs.push_back(path);
    }
  }
  out.runtimes = config.output_dir / "runtimes.json";
  write_timings_json(out.runtimes, out.result.timings);
  for (const auto& t : out.result.timings) {
    fmt::print(log, "{}: {} ({:.2f} s)\n", t.measure, format_runtime_minutes(t.seconds), t.seconds);
  }
  return out;
}

std::vector<SweepResult> cmd_sweep(const fs::path& ratings_path, const fs::path& records_path, const fs::path& out,
                                   std::ostream& log) {
  if (!fs::exists(ratings_path)) throw InputError(fmt::format("{}: ratings log not found", ratings_path.string()));
  std::vector<std::string> warnings;
  const auto ratings = read_ratings_log(ratings_path, &warnings);
  for (const auto& w : warnings) fmt::print(log, "warning: {}\n", w);
  const auto records = read_records(records_path);

  const auto labels = aggregate_ratings(ratings);
  const auto agreement = agreement_stats(ratings);
  const auto sweeps = sweep_records(records, labels);

  std::error_code ec;
  fs::create_directories(out, ec);
  if (!fs::is_directory(out)) throw IoError(fmt::format("{}: cannot create output directory", out.string()));
  write_reference_labels(out / "labels.json", labels);
  write_agreement_json(out / "agreement.json", agreement);
  write_sweeps_json(out / "sweeps.json", sweeps);

  ThresholdConfig thresholds;
  for (const auto& s : sweeps) {
    write_sweep_csv(out / fmt::format("sweep_{}.csv", s.measure), s);
    const auto kind = parse_measure_kind(s.measure);
    if (!kind) continue;
    MeasureSpec spec;
    spec.kind = *kind;
    thresholds.per_measure[s.measure] = {
        s.optimal_threshold, spec.level() == Level::segmentation ? ThresholdMode::absolute : ThresholdMode::ratio};
  }
  write_threshold_config(thresholds, out / "thresholds.json");

  std::size_t unresolved = 0;
  for (const auto& l : labels) unresolved += l.label == ReferenceClass::unresolved ? 1 : 0;
  fmt::print(log, "{} labelled pairs, {} unresolved, round-1 agreement {}/{} ({:.0f}%)\n", labels.size(),
             unresolved, agreement.agreeing, agreement.pairs, agreement.percent_agreement);
  for (const auto& s : sweeps) {
    fmt::print(log, "{}: optimal threshold {:.2f}, balanced accuracy {:.3f}\n", s.measure, s.optimal_threshold,
               s.optimal_balanced_accuracy);
  }
  return sweeps;
}

void cmd_report(const fs::path& in, const fs::path& out) {
  const auto sweeps_path = in / "sweeps.json";
  if (!fs::exists(sweeps_path)) throw InputError(fmt::format("{}: not found; run sweep first", sweeps_path.string()));
  const auto sweeps = read_sweeps_json(sweeps_path);
  std::vector<RankingRecord> records;
  if (fs::exists(in / "records.jsonl")) records = read_records(in / "records.jsonl");
  std::vector<MeasureTiming> timings;
  if (fs::exists(in / "runtimes.json")) timings = read_timings_json(in / "runtimes.json");
  std::optional<AgreementStats> agreement;
  if (fs::exists(in / "agreement.json")) agreement = read_agreement_json(in / "agreement.json");
  emit_report({records, sweeps, agreement, timings}, out);
}

int exit_code_for(const Error& error) {
  switch (error.code()) {
    case ErrorCode::input: return 2;
    case ErrorCode::degenerate_labels: return 3;
    default: return 1;
  }
}

std::string error_json(const Error& error) {
  nlohmann::ordered_json j;
  j["error"] = std::string(error_code_name(error.code()));
  j["message"] = error.what();
  return j.dump();
}

}  // namespace relict
