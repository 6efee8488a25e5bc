#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "relict/evaluation.hpp"
#include "relict/replica_engine.hpp"
#include "relict/volume.hpp"
#include "relict/volume_io.hpp"

namespace relict {

enum class SlicePlane { axial, coronal, sagittal };

std::string_view to_string(SlicePlane plane);
std::optional<SlicePlane> parse_slice_plane(std::string_view name);

// Row-major 8-bit image, `width` pixels per row.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

// Number of slices along the plane's normal axis.
std::size_t slice_count(const Dims& dims, SlicePlane plane);

// Axial fixes z (width nx, height ny), coronal fixes y (nx by nz), sagittal
// fixes x (ny by nz). Pixels are clamp(round((v - lo) / (hi - lo) * 255)).
// Without a window the volume's intensity range is used; a constant volume
// then maps to mid gray. Throws InputError for an index outside the extent
// and RangeError unless lo < hi.
GrayImage extract_slice(const Volume3D& volume, SlicePlane plane, std::size_t index,
                        std::optional<double> lo = std::nullopt, std::optional<double> hi = std::nullopt);

std::string encode_png(const GrayImage& image);
GrayImage decode_png(std::string_view bytes);

struct PairQueueEntry {
  std::string pair_id;
  std::string synthetic_id;
  std::string training_id;
  std::size_t queue_rank = 0;
};

// One pair per synthetic image: its closest training image under the
// preselection measure, ranked ascending by that measure's score with ties by
// synthetic id. Throws ConfigError when `records` has no line for the measure.
std::vector<PairQueueEntry> build_pair_queue(std::span<const RankingRecord> records,
                                             std::string_view preselection_measure);

struct ServiceResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

struct RatingServiceOptions {
  std::filesystem::path ratings_log;
  // Exactly two rater ids.
  std::vector<std::string> raters{"rater1", "rater2"};
  std::string preselection_measure = "rmse";
};

// Transport-independent core of the rating service. Ratings are appended to
// the log and fsynced before a submission is acknowledged; construction
// replays the log. Safe for concurrent use.
class RatingService {
 public:
  // Throws ConfigError when the raters are not two distinct ids, the log holds
  // ratings from unregistered raters or unknown pairs, or volume ids collide
  // across corpora.
  RatingService(std::span<const RankingRecord> records, const Corpus& training, const Corpus& synthetic,
                RatingServiceOptions options);

  const std::vector<PairQueueEntry>& queue() const { return queue_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  std::vector<RatingRecord> ratings() const;

  ServiceResponse pairs() const;
  ServiceResponse volume_meta(std::string_view volume_id) const;
  ServiceResponse slice(std::string_view volume_id, std::string_view plane, std::string_view index,
                        std::optional<std::string_view> lo, std::optional<std::string_view> hi) const;
  // Body `{pair_id, rater_id, score, round}`; 201 on durable append, 400 on
  // malformed input, 404 for an unknown pair, 409 for a duplicate or a round-2
  // rating of a pair the raters agreed on in round 1.
  ServiceResponse submit_rating(std::string_view body);
  ServiceResponse progress() const;

 private:
  struct VolumeEntry {
    std::shared_ptr<const Volume3D> volume;
    std::string role;
  };

  // Empty when accepted; otherwise the status and message of the rejection.
  std::optional<std::pair<int, std::string>> check(const RatingRecord& rating) const;
  bool needs_round_two(const std::string& pair_id) const;
  void append_to_log(const RatingRecord& rating);

  RatingServiceOptions options_;
  std::vector<PairQueueEntry> queue_;
  std::map<std::string, std::size_t> pair_index_;
  std::map<std::string, VolumeEntry> volumes_;
  std::vector<std::string> warnings_;

  mutable std::shared_mutex mutex_;
  std::vector<RatingRecord> ratings_;
  // (pair, rater) -> round -> score.
  std::map<std::pair<std::string, std::string>, std::map<int, int>> scores_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  // 0 picks a free port.
  int port = 8080;
  // Served at / when set, e.g. a built rating UI.
  std::optional<std::filesystem::path> static_dir;
};

// HTTP front end for RatingService.
class RatingServer {
 public:
  RatingServer(RatingService& service, ServerOptions options);
  ~RatingServer();
  RatingServer(const RatingServer&) = delete;
  RatingServer& operator=(const RatingServer&) = delete;

  // Binds the socket and returns the bound port. Throws IoError when the
  // port is unavailable.
  int bind();
  // Serves until stop() is called. Requires bind().
  void listen();
  // Blocks until listen() is accepting connections.
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace relict
