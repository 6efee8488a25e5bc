#include "relict/rating_service.hpp"

#include <fcntl.h>
#include <png.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "relict/errors.hpp"

namespace relict {

namespace {

using ordered_json = nlohmann::ordered_json;

ServiceResponse json_response(int status, const ordered_json& body) {
  return {status, "application/json", body.dump()};
}

ServiceResponse error_response(int status, std::string_view message) {
  ordered_json body;
  body["error"] = std::string(message);
  return json_response(status, body);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || text.empty()) return std::nullopt;
  return value;
}

void write_all(int fd, std::string_view data, const std::filesystem::path& path) {
  while (!data.empty()) {
    const ssize_t written = ::write(fd, data.data(), data.size());
    if (written < 0) {
      if (errno == EINTR) continue;
      throw IoError(fmt::format("{}: write failed: {}", path.string(), std::strerror(errno)));
    }
    data.remove_prefix(static_cast<std::size_t>(written));
  }
}

void fsync_directory(const std::filesystem::path& dir) {
  const int fd = ::open(dir.empty() ? "." : dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

// Drops an unterminated tail left by an interrupted append; it was never
// acknowledged.
std::optional<std::string> trim_partial_tail(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  std::ifstream in(path, std::ios::binary);
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (content.empty() || content.back() == '\n') return std::nullopt;
  const auto last = content.rfind('\n');
  const std::size_t keep = last == std::string::npos ? 0 : last + 1;
  std::filesystem::resize_file(path, keep, ec);
  if (ec) throw IoError(fmt::format("{}: cannot drop partial final line: {}", path.string(), ec.message()));
  return fmt::format("{}: dropped {} bytes of an interrupted append", path.string(), content.size() - keep);
}

struct PngWriteState {
  std::string out;
};

void png_write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* state = static_cast<PngWriteState*>(png_get_io_ptr(png));
  state->out.append(reinterpret_cast<const char*>(data), length);
}

void png_flush_callback(png_structp) {}

struct PngReadState {
  std::string_view in;
  std::size_t offset = 0;
};

void png_read_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (state->offset + length > state->in.size()) png_error(png, "truncated PNG stream");
  std::memcpy(data, state->in.data() + state->offset, length);
  state->offset += length;
}

}  // namespace

std::string_view to_string(SlicePlane plane) {
  switch (plane) {
    case SlicePlane::axial: return "axial";
    case SlicePlane::coronal: return "coronal";
    case SlicePlane::sagittal: return "sagittal";
  }
  return "axial";
}

std::optional<SlicePlane> parse_slice_plane(std::string_view name) {
  if (name == "axial") return SlicePlane::axial;
  if (name == "coronal") return SlicePlane::coronal;
  if (name == "sagittal") return SlicePlane::sagittal;
  return std::nullopt;
}

std::size_t slice_count(const Dims& dims, SlicePlane plane) {
  switch (plane) {
    case SlicePlane::axial: return dims.nz;
    case SlicePlane::coronal: return dims.ny;
    case SlicePlane::sagittal: return dims.nx;
  }
  return 0;
}

GrayImage extract_slice(const Volume3D& volume, SlicePlane plane, std::size_t index, std::optional<double> lo,
                        std::optional<double> hi) {
  const Dims& d = volume.dims();
  if (index >= slice_count(d, plane)) {
    throw InputError(fmt::format("{} slice {} is outside 0..{} of volume '{}'", to_string(plane), index,
                                 slice_count(d, plane) - 1, volume.id()));
  }
  double low = 0.0;
  double high = 0.0;
  if (lo && hi) {
    low = *lo;
    high = *hi;
  } else {
    const auto [vmin, vmax] = volume.intensity_range();
    low = lo.value_or(vmin);
    high = hi.value_or(vmax);
    if (!lo && !hi && vmin == vmax) {
      low = vmin - 0.5;
      high = vmax + 0.5;
    }
  }
  if (!std::isfinite(low) || !std::isfinite(high) || !(low < high)) {
    throw RangeError(fmt::format("window [{}, {}] needs finite lo < hi", low, high));
  }

  GrayImage image;
  switch (plane) {
    case SlicePlane::axial: image.width = d.nx; image.height = d.ny; break;
    case SlicePlane::coronal: image.width = d.nx; image.height = d.nz; break;
    case SlicePlane::sagittal: image.width = d.ny; image.height = d.nz; break;
  }
  image.pixels.resize(image.width * image.height);
  const double scale = 255.0 / (high - low);
  for (std::size_t row = 0; row < image.height; ++row) {
    for (std::size_t col = 0; col < image.width; ++col) {
      double v = 0.0;
      switch (plane) {
        case SlicePlane::axial: v = volume.at(col, row, index); break;
        case SlicePlane::coronal: v = volume.at(col, index, row); break;
        case SlicePlane::sagittal: v = volume.at(index, col, row); break;
      }
      const double p = std::clamp(std::round((v - low) * scale), 0.0, 255.0);
      image.pixels[row * image.width + col] = static_cast<std::uint8_t>(p);
    }
  }
  return image;
}

std::string encode_png(const GrayImage& image) {
  if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height) {
    throw DimensionError(fmt::format("cannot encode a {}x{} image from {} pixels", image.width, image.height,
                                     image.pixels.size()));
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  PngWriteState state;
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed");
  }
  png_set_write_fn(png, &state, png_write_callback, png_flush_callback);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t row = 0; row < image.height; ++row) {
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() + row * image.width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(state.out);
}

GrayImage decode_png(std::string_view bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw FormatError("not a PNG stream");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  PngReadState state{bytes, 0};
  GrayImage image;
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("malformed PNG stream");
  }
  png_set_read_fn(png, &state, png_read_callback);
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("only 8-bit grayscale PNG is supported");
  }
  image.width = png_get_image_width(png, info);
  image.height = png_get_image_height(png, info);
  image.pixels.resize(image.width * image.height);
  for (std::size_t row = 0; row < image.height; ++row) {
    png_read_row(png, image.pixels.data() + row * image.width, nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

std::vector<PairQueueEntry> build_pair_queue(std::span<const RankingRecord> records,
                                             std::string_view preselection_measure) {
  std::vector<const RankingRecord*> selected;
  for (const auto& r : records) {
    if (r.measure == preselection_measure) selected.push_back(&r);
  }
  if (selected.empty()) {
    throw ConfigError(fmt::format("records contain no '{}' lines to build the rating queue from",
                                  preselection_measure));
  }
  std::sort(selected.begin(), selected.end(), [](const RankingRecord* a, const RankingRecord* b) {
    if (a->score() != b->score()) return a->score() < b->score();
    return a->synthetic_id < b->synthetic_id;
  });
  std::vector<PairQueueEntry> queue;
  std::set<std::string> seen;
  for (const RankingRecord* r : selected) {
    if (!seen.insert(r->synthetic_id).second) {
      throw ConfigError(fmt::format("duplicate '{}' record for synthetic image '{}'", preselection_measure,
                                    r->synthetic_id));
    }
    queue.push_back({make_pair_id(r->synthetic_id, r->closest_training_id), r->synthetic_id,
                     r->closest_training_id, queue.size() + 1});
  }
  return queue;
}

RatingService::RatingService(std::span<const RankingRecord> records, const Corpus& training,
                             const Corpus& synthetic, RatingServiceOptions options)
    : options_(std::move(options)) {
  if (options_.raters.size() != 2 || options_.raters[0] == options_.raters[1] || options_.raters[0].empty() ||
      options_.raters[1].empty()) {
    throw ConfigError("the rating service needs exactly two distinct, non-empty rater ids");
  }
  queue_ = build_pair_queue(records, options_.preselection_measure);
  for (std::size_t i = 0; i < queue_.size(); ++i) pair_index_[queue_[i].pair_id] = i;

  auto add_volumes = [&](const Corpus& corpus) {
    for (const auto& image : corpus.images) {
      if (!volumes_.emplace(image.id, VolumeEntry{image.volume, std::string(to_string(corpus.role))}).second) {
        throw ConfigError(fmt::format("volume id '{}' appears in more than one corpus", image.id));
      }
    }
  };
  add_volumes(training);
  add_volumes(synthetic);
  for (const auto& entry : queue_) {
    for (const auto& id : {entry.synthetic_id, entry.training_id}) {
      if (!volumes_.contains(id)) {
        throw ConfigError(fmt::format("queued pair {} refers to volume '{}' missing from the corpora",
                                      entry.pair_id, id));
      }
    }
  }

  if (auto warning = trim_partial_tail(options_.ratings_log)) warnings_.push_back(std::move(*warning));
  const auto logged = read_ratings_log(options_.ratings_log, &warnings_);
  for (std::size_t i = 0; i < logged.size(); ++i) {
    if (auto rejection = check(logged[i])) {
      throw ConfigError(fmt::format("{}: logged rating {} is inconsistent: {}", options_.ratings_log.string(),
                                    i + 1, rejection->second));
    }
    scores_[{logged[i].pair_id, logged[i].rater_id}][logged[i].round] = logged[i].score;
    ratings_.push_back(logged[i]);
  }
}

std::vector<RatingRecord> RatingService::ratings() const {
  std::shared_lock lock(mutex_);
  return ratings_;
}

bool RatingService::needs_round_two(const std::string& pair_id) const {
  std::optional<bool> decisions[2];
  for (std::size_t r = 0; r < 2; ++r) {
    const auto it = scores_.find({pair_id, options_.raters[r]});
    if (it == scores_.end()) return false;
    const auto round1 = it->second.find(1);
    if (round1 == it->second.end()) return false;
    decisions[r] = round1->second >= kReplicaScore;
  }
  return *decisions[0] != *decisions[1];
}

std::optional<std::pair<int, std::string>> RatingService::check(const RatingRecord& rating) const {
  if (std::find(options_.raters.begin(), options_.raters.end(), rating.rater_id) == options_.raters.end()) {
    return std::pair{400, fmt::format("rater '{}' is not registered", rating.rater_id)};
  }
  if (rating.score < kMinScore || rating.score > kMaxScore) {
    return std::pair{400, fmt::format("score {} outside the 1-4 Likert scale", rating.score)};
  }
  if (rating.round != 1 && rating.round != 2) {
    return std::pair{400, fmt::format("round {} does not exist; use 1 or 2", rating.round)};
  }
  if (!pair_index_.contains(rating.pair_id)) {
    return std::pair{404, fmt::format("pair '{}' is not in the rating queue", rating.pair_id)};
  }
  const auto it = scores_.find({rating.pair_id, rating.rater_id});
  if (it != scores_.end() && it->second.contains(rating.round)) {
    return std::pair{409, fmt::format("{} already rated {} in round {}", rating.rater_id, rating.pair_id,
                                      rating.round)};
  }
  if (rating.round == 2 && !needs_round_two(rating.pair_id)) {
    return std::pair{409, fmt::format("pair {} has no round-1 disagreement to re-evaluate", rating.pair_id)};
  }
  return std::nullopt;
}

void RatingService::append_to_log(const RatingRecord& rating) {
  const auto& path = options_.ratings_log;
  std::error_code ec;
  const bool existed = std::filesystem::exists(path, ec);
  if (!existed && path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError(fmt::format("{}: cannot open ratings log: {}", path.string(), std::strerror(errno)));
  try {
    write_all(fd, to_json_line(rating) + "\n", path);
    if (::fsync(fd) != 0) throw IoError(fmt::format("{}: fsync failed: {}", path.string(), std::strerror(errno)));
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  if (!existed) fsync_directory(path.parent_path());
}

ServiceResponse RatingService::pairs() const {
  std::shared_lock lock(mutex_);
  ordered_json out = ordered_json::array();
  for (const auto& entry : queue_) {
    ordered_json j;
    j["pair_id"] = entry.pair_id;
    j["synthetic_id"] = entry.synthetic_id;
    j["training_id"] = entry.training_id;
    j["queue_rank"] = entry.queue_rank;
    j["rated_by"] = ordered_json::array();
    for (const auto& rater : options_.raters) {
      const auto it = scores_.find({entry.pair_id, rater});
      if (it == scores_.end()) continue;
      for (const auto& [round, score] : it->second) {
        j["rated_by"].push_back({{"rater_id", rater}, {"round", round}});
      }
    }
    j["needs_round_2"] = needs_round_two(entry.pair_id);
    out.push_back(std::move(j));
  }
  return json_response(200, out);
}

ServiceResponse RatingService::volume_meta(std::string_view volume_id) const {
  const auto it = volumes_.find(std::string(volume_id));
  if (it == volumes_.end()) return error_response(404, fmt::format("unknown volume '{}'", volume_id));
  const Volume3D& v = *it->second.volume;
  const auto [lo, hi] = v.intensity_range();
  ordered_json j;
  j["id"] = v.id();
  j["role"] = it->second.role;
  j["dims"] = {v.dims().nx, v.dims().ny, v.dims().nz};
  j["spacing"] = {v.spacing()[0], v.spacing()[1], v.spacing()[2]};
  j["intensity_range"] = {lo, hi};
  j["slices"] = {{"axial", v.dims().nz}, {"coronal", v.dims().ny}, {"sagittal", v.dims().nx}};
  return json_response(200, j);
}

ServiceResponse RatingService::slice(std::string_view volume_id, std::string_view plane, std::string_view index,
                                     std::optional<std::string_view> lo,
                                     std::optional<std::string_view> hi) const {
  const auto it = volumes_.find(std::string(volume_id));
  if (it == volumes_.end()) return error_response(404, fmt::format("unknown volume '{}'", volume_id));
  const auto parsed_plane = parse_slice_plane(plane);
  if (!parsed_plane) return error_response(400, fmt::format("unknown plane '{}'", plane));
  const auto parsed_index = parse_number<long long>(index);
  if (!parsed_index) return error_response(400, fmt::format("index '{}' is not an integer", index));
  std::optional<double> low;
  std::optional<double> high;
  if (lo) {
    low = parse_number<double>(*lo);
    if (!low) return error_response(400, fmt::format("lo '{}' is not a number", *lo));
  }
  if (hi) {
    high = parse_number<double>(*hi);
    if (!high) return error_response(400, fmt::format("hi '{}' is not a number", *hi));
  }
  const Volume3D& v = *it->second.volume;
  if (*parsed_index < 0 || static_cast<std::size_t>(*parsed_index) >= slice_count(v.dims(), *parsed_plane)) {
    return error_response(404, fmt::format("{} slice {} does not exist in volume '{}'", plane, *parsed_index,
                                           volume_id));
  }
  try {
    const auto image = extract_slice(v, *parsed_plane, static_cast<std::size_t>(*parsed_index), low, high);
    return {200, "image/png", encode_png(image)};
  } catch (const RangeError& e) {
    return error_response(400, e.what());
  }
}

ServiceResponse RatingService::submit_rating(std::string_view body) {
  RatingRecord rating;
  try {
    rating = rating_from_json_line(body);
  } catch (const Error& e) {
    return error_response(400, e.what());
  }
  if (rating.timestamp.empty()) rating.timestamp = utc_timestamp();

  std::unique_lock lock(mutex_);
  if (auto rejection = check(rating)) return error_response(rejection->first, rejection->second);
  try {
    append_to_log(rating);
  } catch (const Error& e) {
    return error_response(500, e.what());
  }
  scores_[{rating.pair_id, rating.rater_id}][rating.round] = rating.score;
  ratings_.push_back(rating);
  return {201, "application/json", to_json_line(rating)};
}

ServiceResponse RatingService::progress() const {
  std::shared_lock lock(mutex_);
  std::size_t disagreements = 0;
  for (const auto& entry : queue_) disagreements += needs_round_two(entry.pair_id) ? 1 : 0;
  ordered_json j;
  j["pairs"] = queue_.size();
  j["round_2_required"] = disagreements;
  j["raters"] = ordered_json::array();
  bool round1_complete = true;
  bool round2_complete = true;
  for (const auto& rater : options_.raters) {
    std::size_t round1 = 0;
    std::size_t round2 = 0;
    for (const auto& entry : queue_) {
      const auto it = scores_.find({entry.pair_id, rater});
      if (it == scores_.end()) continue;
      round1 += it->second.contains(1) ? 1 : 0;
      round2 += it->second.contains(2) ? 1 : 0;
    }
    round1_complete = round1_complete && round1 == queue_.size();
    round2_complete = round2_complete && round2 == disagreements;
    j["raters"].push_back({{"rater_id", rater}, {"round_1", round1}, {"round_2", round2}});
  }
  j["round_1_complete"] = round1_complete;
  j["round_2_complete"] = round1_complete && round2_complete;
  return json_response(200, j);
}

}  // namespace relict
