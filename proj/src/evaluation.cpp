#include "relict/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <cctype>

#include <fmt/format.h>
#include <json.hpp>

#include "relict/errors.hpp"
#include "relict/image_metrics.hpp"
#include "relict/parallel.hpp"

namespace relict {

namespace {

constexpr std::string_view kPairSeparator = "::";
constexpr std::size_t kMaxGridPoints = 10'000'000;

using ordered_json = nlohmann::ordered_json;

bool is_replica_score(int score) { return score >= kReplicaScore; }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError(fmt::format("{}: cannot open for writing", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("{}: write failed", path.string()));
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("{}: cannot open", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }
}

double median(std::vector<int> scores) {
  std::sort(scores.begin(), scores.end());
  const std::size_t n = scores.size();
  if (n == 0) return 0.0;
  if (n % 2 == 1) return scores[n / 2];
  return (scores[n / 2 - 1] + scores[n / 2]) / 2.0;
}

// Ratings indexed as pair -> rater -> round -> score, after validation.
struct RatingTable {
  std::vector<std::string> raters;
  std::map<std::string, std::map<std::string, std::map<int, int>>> scores;
};

RatingTable build_table(std::span<const RatingRecord> ratings) {
  RatingTable table;
  std::set<std::string> raters;
  for (const auto& r : ratings) {
    if (r.score < kMinScore || r.score > kMaxScore) {
      throw InputError(fmt::format("rating of {} by {} has score {} outside 1-4", r.pair_id, r.rater_id, r.score));
    }
    if (r.round != 1 && r.round != 2) {
      throw InputError(fmt::format("rating of {} by {} has round {}; only rounds 1 and 2 exist",
                                   r.pair_id, r.rater_id, r.round));
    }
    raters.insert(r.rater_id);
    auto& slot = table.scores[r.pair_id][r.rater_id];
    if (!slot.emplace(r.round, r.score).second) {
      throw InputError(fmt::format("duplicate rating of {} by {} in round {}", r.pair_id, r.rater_id, r.round));
    }
  }
  if (raters.size() > 2) {
    throw InputError(fmt::format("{} raters present; the protocol uses exactly two", raters.size()));
  }
  if (raters.size() < 2) {
    throw IncompleteRatingsError(fmt::format("{} rater(s) present; two are required", raters.size()));
  }
  table.raters.assign(raters.begin(), raters.end());
  for (const auto& [pair, by_rater] : table.scores) {
    for (const auto& rater : table.raters) {
      const auto it = by_rater.find(rater);
      if (it == by_rater.end() || !it->second.contains(1)) {
        throw IncompleteRatingsError(fmt::format("pair {} lacks a round-1 score from {}", pair, rater));
      }
    }
  }
  return table;
}

std::string svg_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string scatter_svg(const SweepResult& sweep) {
  constexpr double width = 360.0;
  constexpr double height = 300.0;
  constexpr double top = 30.0;
  constexpr double bottom = 260.0;
  double lo = sweep.optimal_threshold;
  double hi = sweep.optimal_threshold;
  for (const auto& s : sweep.samples) {
    lo = std::min(lo, s.value);
    hi = std::max(hi, s.value);
  }
  if (hi == lo) hi = lo + 1.0;
  auto y_of = [&](double v) { return bottom - (v - lo) / (hi - lo) * (bottom - top); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n"
      "<line x1=\"50\" y1=\"{}\" x2=\"50\" y2=\"{}\" stroke=\"black\"/>\n"
      "<text x=\"46\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{:.3g}</text>\n"
      "<text x=\"46\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{:.3g}</text>\n",
      width, height, width, height, width / 2, svg_escape(sweep.measure), top, bottom, bottom + 4, lo,
      top + 4, hi);
  svg += fmt::format(
      "<line x1=\"50\" y1=\"{0:.2f}\" x2=\"{1}\" y2=\"{0:.2f}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n"
      "<text x=\"{1}\" y=\"{2:.2f}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">T={3}</text>\n",
      y_of(sweep.optimal_threshold), width - 10, y_of(sweep.optimal_threshold) - 4,
      sweep.optimal_threshold);
  for (std::size_t i = 0; i < sweep.samples.size(); ++i) {
    const auto& s = sweep.samples[i];
    const double x = (s.replica ? 130.0 : 270.0) + static_cast<double>(static_cast<int>(i % 9) - 4) * 6.0;
    svg += fmt::format(
        "<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3.5\" fill=\"{}\" fill-opacity=\"0.7\"><title>{} {}</title></circle>\n",
        x, y_of(s.value), s.replica ? "#c0392b" : "#2471a3", svg_escape(s.pair_id), s.value);
  }
  svg += fmt::format(
      "<text x=\"130\" y=\"285\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">Replica</text>\n"
      "<text x=\"270\" y=\"285\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">Non-Replica</text>\n"
      "</svg>\n");
  return svg;
}

std::string safe_file_stem(std::string_view measure) {
  std::string out;
  for (char c : measure) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') ? c : '_';
  return out;
}

}  // namespace

std::string make_pair_id(std::string_view synthetic_id, std::string_view training_id) {
  return fmt::format("{}{}{}", synthetic_id, kPairSeparator, training_id);
}

std::pair<std::string, std::string> split_pair_id(std::string_view pair_id) {
  const auto pos = pair_id.find(kPairSeparator);
  if (pos == std::string_view::npos) throw InputError(fmt::format("malformed pair id '{}'", pair_id));
  return {std::string(pair_id.substr(0, pos)), std::string(pair_id.substr(pos + kPairSeparator.size()))};
}

std::vector<PreselectedPair> preselect_pairs(const Corpus& training, const Corpus& synthetic,
                                             unsigned workers) {
  if (training.images.empty()) throw CorpusError("training corpus is empty");
  std::vector<PreselectedPair> out(synthetic.images.size());
  parallel_for(synthetic.images.size(), workers, [&](std::size_t s) {
    const ImageBundle& syn = synthetic.images[s];
    PreselectedPair best{syn.id, "", std::numeric_limits<double>::infinity()};
    for (const ImageBundle& t : training.images) {
      double value = 0.0;
      try {
        value = rmse(*syn.volume, *t.volume);
      } catch (const Error& e) {
        rethrow_with_context(e, fmt::format("preselection pair (synthetic '{}', training '{}')", syn.id, t.id));
      }
      if (value < best.rmse || (value == best.rmse && t.id < best.training_id)) {
        best.rmse = value;
        best.training_id = t.id;
      }
    }
    out[s] = std::move(best);
  });
  return out;
}

std::string to_json_line(const RatingRecord& r) {
  ordered_json j;
  j["pair_id"] = r.pair_id;
  j["rater_id"] = r.rater_id;
  j["score"] = r.score;
  j["round"] = r.round;
  j["timestamp"] = r.timestamp;
  return j.dump();
}

RatingRecord rating_from_json_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("malformed rating JSON: {}", e.what()));
  }
  if (!j.is_object()) throw FormatError("rating must be a JSON object");
  RatingRecord r;
  try {
    r.pair_id = j.at("pair_id").get<std::string>();
    r.rater_id = j.at("rater_id").get<std::string>();
    if (!j.at("score").is_number_integer()) throw InputError("score must be an integer");
    if (!j.at("round").is_number_integer()) throw InputError("round must be an integer");
    r.score = j.at("score").get<int>();
    r.round = j.at("round").get<int>();
    if (j.contains("timestamp") && j["timestamp"].is_string()) r.timestamp = j["timestamp"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("rating is missing a field: {}", e.what()));
  }
  if (r.pair_id.empty()) throw InputError("pair_id is empty");
  if (r.rater_id.empty()) throw InputError("rater_id is empty");
  if (r.score < kMinScore || r.score > kMaxScore) {
    throw InputError(fmt::format("score {} outside the 1-4 Likert scale", r.score));
  }
  if (r.round < 1) throw InputError(fmt::format("round {} must be positive", r.round));
  return r;
}

std::vector<RatingRecord> read_ratings_log(const std::filesystem::path& path,
                                           std::vector<std::string>* warnings) {
  std::vector<RatingRecord> out;
  if (!std::filesystem::exists(path)) return out;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("{}: cannot open ratings log", path.string()));
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < content.size()) {
    const std::size_t end = content.find('\n', start);
    ++line_no;
    if (end == std::string::npos) {
      if (warnings != nullptr) {
        warnings->push_back(fmt::format("{}:{}: skipping unterminated final line", path.string(), line_no));
      }
      break;
    }
    const std::string_view line(content.data() + start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    try {
      out.push_back(rating_from_json_line(line));
    } catch (const Error& e) {
      rethrow_with_context(e, fmt::format("{}:{}", path.string(), line_no));
    }
  }
  return out;
}

std::string_view to_string(ReferenceClass label) {
  switch (label) {
    case ReferenceClass::replica: return "replica";
    case ReferenceClass::not_replica: return "not_replica";
    case ReferenceClass::unresolved: return "unresolved";
  }
  return "unresolved";
}

std::string_view to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::consensus_round_1: return "consensus_round_1";
    case Provenance::consensus_round_2: return "consensus_round_2";
    case Provenance::unresolved: return "unresolved";
  }
  return "unresolved";
}

std::vector<ReferenceLabel> aggregate_ratings(std::span<const RatingRecord> ratings) {
  const RatingTable table = build_table(ratings);
  std::vector<ReferenceLabel> out;
  out.reserve(table.scores.size());
  for (const auto& [pair, by_rater] : table.scores) {
    const auto& first = by_rater.at(table.raters[0]);
    const auto& second = by_rater.at(table.raters[1]);
    ReferenceLabel label{pair, ReferenceClass::unresolved, Provenance::unresolved};
    const bool r1a = is_replica_score(first.at(1));
    const bool r1b = is_replica_score(second.at(1));
    if (r1a == r1b) {
      label.label = r1a ? ReferenceClass::replica : ReferenceClass::not_replica;
      label.provenance = Provenance::consensus_round_1;
    } else {
      const auto a2 = first.find(2);
      const auto b2 = second.find(2);
      if (a2 == first.end() || b2 == second.end()) {
        throw IncompleteRatingsError(
            fmt::format("pair {} was disagreed on in round 1 and lacks round-2 scores from {}", pair,
                        a2 == first.end() ? table.raters[0] : table.raters[1]));
      }
      const bool r2a = is_replica_score(a2->second);
      const bool r2b = is_replica_score(b2->second);
      if (r2a == r2b) {
        label.label = r2a ? ReferenceClass::replica : ReferenceClass::not_replica;
        label.provenance = Provenance::consensus_round_2;
      }
    }
    out.push_back(std::move(label));
  }
  return out;
}

void write_reference_labels(const std::filesystem::path& path, std::span<const ReferenceLabel> labels) {
  ordered_json doc = ordered_json::object();
  for (const auto& l : labels) {
    doc[l.pair_id] = {{"label", std::string(to_string(l.label))},
                      {"provenance", std::string(to_string(l.provenance))}};
  }
  write_text(path, doc.dump(2) + "\n");
}

std::vector<ReferenceLabel> read_reference_labels(const std::filesystem::path& path) {
  const auto doc = read_json(path);
  std::vector<ReferenceLabel> out;
  try {
    for (const auto& [pair, value] : doc.items()) {
      ReferenceLabel l;
      l.pair_id = pair;
      const auto label = value.at("label").get<std::string>();
      const auto provenance = value.at("provenance").get<std::string>();
      if (label == "replica") {
        l.label = ReferenceClass::replica;
      } else if (label == "not_replica") {
        l.label = ReferenceClass::not_replica;
      } else if (label == "unresolved") {
        l.label = ReferenceClass::unresolved;
      } else {
        throw FormatError(fmt::format("{}: unknown label '{}'", path.string(), label));
      }
      if (provenance == "consensus_round_1") {
        l.provenance = Provenance::consensus_round_1;
      } else if (provenance == "consensus_round_2") {
        l.provenance = Provenance::consensus_round_2;
      } else if (provenance == "unresolved") {
        l.provenance = Provenance::unresolved;
      } else {
        throw FormatError(fmt::format("{}: unknown provenance '{}'", path.string(), provenance));
      }
      out.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: malformed reference labels: {}", path.string(), e.what()));
  }
  return out;
}

AgreementStats agreement_stats(std::span<const RatingRecord> ratings) {
  const RatingTable table = build_table(ratings);
  AgreementStats stats;
  std::map<std::string, std::vector<int>> round1;
  for (const auto& [pair, by_rater] : table.scores) {
    const int a = by_rater.at(table.raters[0]).at(1);
    const int b = by_rater.at(table.raters[1]).at(1);
    round1[table.raters[0]].push_back(a);
    round1[table.raters[1]].push_back(b);
    ++stats.pairs;
    if (is_replica_score(a) == is_replica_score(b)) ++stats.agreeing;
  }
  stats.percent_agreement =
      stats.pairs == 0 ? 0.0 : 100.0 * static_cast<double>(stats.agreeing) / static_cast<double>(stats.pairs);
  for (auto& [rater, scores] : round1) stats.median_score[rater] = median(std::move(scores));
  return stats;
}

SweepResult sweep_thresholds(std::string measure, const std::map<std::string, double>& values,
                             std::span<const ReferenceLabel> labels) {
  SweepResult result;
  result.measure = std::move(measure);
  std::size_t positives = 0;
  std::size_t negatives = 0;
  for (const auto& l : labels) {
    if (l.label == ReferenceClass::unresolved) {
      ++result.excluded_unresolved;
      continue;
    }
    const auto it = values.find(l.pair_id);
    if (it == values.end()) {
      throw InputError(fmt::format("{}: no value for labelled pair {}", result.measure, l.pair_id));
    }
    if (!std::isfinite(it->second)) {
      throw InputError(fmt::format("{}: value for pair {} is not finite", result.measure, l.pair_id));
    }
    const bool replica = l.label == ReferenceClass::replica;
    result.samples.push_back({l.pair_id, it->second, replica});
    (replica ? positives : negatives) += 1;
  }
  if (positives == 0 || negatives == 0) {
    throw DegenerateLabelsError(fmt::format("{}: sweep needs both classes, got {} replica and {} non-replica",
                                            result.measure, positives, negatives));
  }
  std::sort(result.samples.begin(), result.samples.end(),
            [](const LabeledValue& a, const LabeledValue& b) { return a.pair_id < b.pair_id; });

  const auto [min_it, max_it] = std::minmax_element(
      result.samples.begin(), result.samples.end(),
      [](const LabeledValue& a, const LabeledValue& b) { return a.value < b.value; });
  const double lo = min_it->value;
  const double hi = max_it->value;
  auto grid = [](long long k) { return static_cast<double>(k) / 100.0; };
  long long k_lo = static_cast<long long>(std::floor(lo * 100.0));
  while (grid(k_lo) > lo) --k_lo;
  while (grid(k_lo + 1) <= lo) ++k_lo;
  long long k_hi = static_cast<long long>(std::ceil(hi * 100.0));
  while (grid(k_hi) < hi) ++k_hi;
  while (grid(k_hi - 1) >= hi) --k_hi;
  if (static_cast<std::size_t>(k_hi - k_lo) + 2 > kMaxGridPoints) {
    throw RangeError(fmt::format("{}: value range [{}, {}] needs too many 0.01 steps", result.measure, lo, hi));
  }

  std::vector<double> sorted_pos;
  std::vector<double> sorted_neg;
  for (const auto& s : result.samples) (s.replica ? sorted_pos : sorted_neg).push_back(s.value);
  std::sort(sorted_pos.begin(), sorted_pos.end());
  std::sort(sorted_neg.begin(), sorted_neg.end());

  result.optimal_balanced_accuracy = -1.0;
  for (long long k = k_lo; k <= k_hi + 1; ++k) {
    SweepPoint p;
    p.threshold = grid(k);
    const auto tp = std::lower_bound(sorted_pos.begin(), sorted_pos.end(), p.threshold) - sorted_pos.begin();
    const auto fp = std::lower_bound(sorted_neg.begin(), sorted_neg.end(), p.threshold) - sorted_neg.begin();
    p.sensitivity = static_cast<double>(tp) / static_cast<double>(positives);
    p.specificity = static_cast<double>(static_cast<long long>(negatives) - fp) / static_cast<double>(negatives);
    p.balanced_accuracy = (p.sensitivity + p.specificity) / 2.0;
    if (p.balanced_accuracy > result.optimal_balanced_accuracy) {
      result.optimal_balanced_accuracy = p.balanced_accuracy;
      result.optimal_threshold = p.threshold;
    }
    result.points.push_back(p);
  }
  return result;
}

std::vector<SweepResult> sweep_records(std::span<const RankingRecord> records,
                                       std::span<const ReferenceLabel> labels) {
  std::vector<std::string> measures;
  std::map<std::string, std::map<std::string, double>> by_measure;
  for (const auto& r : records) {
    if (!by_measure.contains(r.measure)) measures.push_back(r.measure);
    if (!by_measure[r.measure].emplace(r.synthetic_id, r.score()).second) {
      throw InputError(fmt::format("duplicate record for synthetic '{}' and measure {}", r.synthetic_id, r.measure));
    }
  }
  std::vector<SweepResult> out;
  for (const auto& m : measures) {
    const auto& by_synthetic = by_measure[m];
    std::map<std::string, double> values;
    for (const auto& l : labels) {
      const auto synthetic_id = split_pair_id(l.pair_id).first;
      const auto it = by_synthetic.find(synthetic_id);
      if (it != by_synthetic.end()) values[l.pair_id] = it->second;
    }
    out.push_back(sweep_thresholds(m, values, labels));
  }
  return out;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep) {
  std::string text = "threshold,sensitivity,specificity,balanced_accuracy\n";
  for (const auto& p : sweep.points) {
    text += fmt::format("{:.2f},{},{},{}\n", p.threshold, p.sensitivity, p.specificity, p.balanced_accuracy);
  }
  write_text(path, text);
}

std::string format_runtime_minutes(double seconds) {
  const long long minutes = std::llround(std::max(0.0, seconds) / 60.0);
  return fmt::format("{} {}", minutes, minutes == 1 ? "min" : "mins");
}

void write_sweeps_json(const std::filesystem::path& path, std::span<const SweepResult> sweeps) {
  ordered_json doc = ordered_json::array();
  for (const auto& s : sweeps) {
    ordered_json j;
    j["measure"] = s.measure;
    j["optimal_threshold"] = s.optimal_threshold;
    j["optimal_balanced_accuracy"] = s.optimal_balanced_accuracy;
    j["excluded_unresolved"] = s.excluded_unresolved;
    j["points"] = ordered_json::array();
    for (const auto& p : s.points) {
      j["points"].push_back({p.threshold, p.sensitivity, p.specificity, p.balanced_accuracy});
    }
    j["samples"] = ordered_json::array();
    for (const auto& v : s.samples) {
      j["samples"].push_back({{"pair_id", v.pair_id}, {"value", v.value}, {"replica", v.replica}});
    }
    doc.push_back(std::move(j));
  }
  write_text(path, doc.dump(2) + "\n");
}

std::vector<SweepResult> read_sweeps_json(const std::filesystem::path& path) {
  const auto doc = read_json(path);
  std::vector<SweepResult> out;
  try {
    for (const auto& j : doc) {
      SweepResult s;
      s.measure = j.at("measure").get<std::string>();
      s.optimal_threshold = j.at("optimal_threshold").get<double>();
      s.optimal_balanced_accuracy = j.at("optimal_balanced_accuracy").get<double>();
      s.excluded_unresolved = j.at("excluded_unresolved").get<std::size_t>();
      for (const auto& p : j.at("points")) {
        s.points.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>(),
                            p.at(3).get<double>()});
      }
      for (const auto& v : j.at("samples")) {
        s.samples.push_back({v.at("pair_id").get<std::string>(), v.at("value").get<double>(),
                             v.at("replica").get<bool>()});
      }
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: malformed sweeps file: {}", path.string(), e.what()));
  }
  return out;
}

void write_timings_json(const std::filesystem::path& path, std::span<const MeasureTiming> timings) {
  ordered_json doc = ordered_json::array();
  for (const auto& t : timings) {
    doc.push_back({{"measure", t.measure}, {"seconds", t.seconds}, {"runtime", format_runtime_minutes(t.seconds)}});
  }
  write_text(path, doc.dump(2) + "\n");
}

std::vector<MeasureTiming> read_timings_json(const std::filesystem::path& path) {
  const auto doc = read_json(path);
  std::vector<MeasureTiming> out;
  try {
    for (const auto& j : doc) out.push_back({j.at("measure").get<std::string>(), j.at("seconds").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: malformed timings file: {}", path.string(), e.what()));
  }
  return out;
}

void write_agreement_json(const std::filesystem::path& path, const AgreementStats& stats) {
  ordered_json j;
  j["pairs"] = stats.pairs;
  j["agreeing"] = stats.agreeing;
  j["percent_agreement"] = stats.percent_agreement;
  j["median_score"] = ordered_json::object();
  for (const auto& [rater, m] : stats.median_score) j["median_score"][rater] = m;
  write_text(path, j.dump(2) + "\n");
}

AgreementStats read_agreement_json(const std::filesystem::path& path) {
  const auto j = read_json(path);
  AgreementStats stats;
  try {
    stats.pairs = j.at("pairs").get<std::size_t>();
    stats.agreeing = j.at("agreeing").get<std::size_t>();
    stats.percent_agreement = j.at("percent_agreement").get<double>();
    for (const auto& [rater, m] : j.at("median_score").items()) stats.median_score[rater] = m.get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: malformed agreement file: {}", path.string(), e.what()));
  }
  return stats;
}

void emit_report(const ReportInputs& inputs, const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec || !std::filesystem::is_directory(out)) {
    throw IoError(fmt::format("{}: cannot create report directory", out.string()));
  }

  ordered_json summary;
  summary["record_count"] = inputs.records.size();
  summary["measures"] = ordered_json::array();
  for (const auto& sweep : inputs.sweeps) {
    const std::string stem = safe_file_stem(sweep.measure);
    const std::string curve = fmt::format("sweep_{}.csv", stem);
    const std::string scatter = fmt::format("scatter_{}.svg", stem);
    write_sweep_csv(out / curve, sweep);
    write_text(out / scatter, scatter_svg(sweep));

    std::size_t replicas = 0;
    for (const auto& s : sweep.samples) replicas += s.replica ? 1 : 0;
    const auto best = std::find_if(sweep.points.begin(), sweep.points.end(), [&](const SweepPoint& p) {
      return p.threshold == sweep.optimal_threshold;
    });
    ordered_json m;
    m["measure"] = sweep.measure;
    m["optimal_threshold"] = sweep.optimal_threshold;
    m["optimal_balanced_accuracy"] = sweep.optimal_balanced_accuracy;
    m["sensitivity_at_optimum"] = best != sweep.points.end() ? best->sensitivity : 0.0;
    m["specificity_at_optimum"] = best != sweep.points.end() ? best->specificity : 0.0;
    m["replicas"] = replicas;
    m["non_replicas"] = sweep.samples.size() - replicas;
    m["excluded_unresolved"] = sweep.excluded_unresolved;
    m["curve_file"] = curve;
    m["scatter_file"] = scatter;
    summary["measures"].push_back(std::move(m));
  }

  summary["runtimes"] = ordered_json::array();
  for (const auto& t : inputs.timings) {
    ordered_json row;
    row["measure"] = t.measure;
    row["analysis_level"] = "unknown";
    if (const auto kind = parse_measure_kind(t.measure)) {
      MeasureSpec spec;
      spec.kind = *kind;
      row["analysis_level"] = std::string(to_string(spec.level()));
    }
    row["minutes"] = t.seconds / 60.0;
    row["runtime"] = format_runtime_minutes(t.seconds);
    summary["runtimes"].push_back(std::move(row));
  }

  if (inputs.agreement) {
    ordered_json a;
    a["pairs"] = inputs.agreement->pairs;
    a["agreeing"] = inputs.agreement->agreeing;
    a["percent_agreement"] = inputs.agreement->percent_agreement;
    a["median_score"] = ordered_json::object();
    for (const auto& [rater, med] : inputs.agreement->median_score) a["median_score"][rater] = med;
    summary["agreement"] = std::move(a);
  } else {
    summary["agreement"] = nullptr;
  }
  write_text(out / "summary.json", summary.dump(2) + "\n");
}

}  // namespace relict
