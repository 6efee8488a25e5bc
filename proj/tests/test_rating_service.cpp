#include <doctest.h>

#include <httplib.h>

#include <cmath>
#include <fstream>
#include <random>
#include <thread>

#include <json.hpp>

#include "relict/errors.hpp"
#include "relict/rating_service.hpp"
#include "support/fixtures.hpp"

using namespace relict;
using relict::testing::TempDir;

namespace {

Volume3D ramp(const std::string& id) {
  // v(x, y, z) = x + 4y + 16z on a 4x4x4 grid.
  std::vector<double> v(64);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  return Volume3D(id, {4, 4, 4}, {1, 1, 1}, std::move(v));
}

std::uint8_t windowed(double v, double lo, double hi) {
  const double t = (v - lo) / (hi - lo) * 255.0;
  if (t <= 0) return 0;
  if (t >= 255) return 255;
  return static_cast<std::uint8_t>(std::floor(t + 0.5));
}

struct ServiceFixture {
  TempDir dir{"relict-service"};
  Corpus training;
  Corpus synthetic;
  std::vector<RankingRecord> records;

  ServiceFixture() {
    std::mt19937_64 rng(17);
    training.role = CorpusRole::training;
    synthetic.role = CorpusRole::synthetic;
    for (int i = 0; i < 4; ++i) {
      training.images.push_back(
          relict::testing::bundle(relict::testing::smoothed_volume("t" + std::to_string(i), {5, 6, 7}, rng)));
    }
    const double ratios[] = {0.7, 0.2, 0.9};
    for (int i = 0; i < 3; ++i) {
      const std::string id = "s" + std::to_string(i);
      synthetic.images.push_back(relict::testing::bundle(relict::testing::smoothed_volume(id, {5, 6, 7}, rng)));
      RankingRecord r;
      r.synthetic_id = id;
      r.measure = "rmse";
      r.closest_training_id = "t" + std::to_string(i);
      r.distance_ratio = ratios[i];
      records.push_back(r);
      r.measure = "mae";
      r.distance_ratio = 1.0 - ratios[i];
      r.closest_training_id = "t3";
      records.push_back(r);
    }
  }

  RatingServiceOptions options() const {
    RatingServiceOptions o;
    o.ratings_log = dir / "ratings.jsonl";
    o.raters = {"ann", "bob"};
    return o;
  }

  RatingService make() const { return RatingService(records, training, synthetic, options()); }
};

std::string body(const std::string& pair, const std::string& rater, int score, int round = 1) {
  return nlohmann::json{{"pair_id", pair}, {"rater_id", rater}, {"score", score}, {"round", round}}.dump();
}

}  // namespace

TEST_CASE("axial slice of a ramp matches the windowing formula") {
  const auto v = ramp("r");
  const auto img = extract_slice(v, SlicePlane::axial, 0);
  CHECK(img.width == 4);
  CHECK(img.height == 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) CHECK(img.pixels[y * 4 + x] == windowed(x + 4.0 * y, 0, 63));

  const auto win = extract_slice(v, SlicePlane::axial, 2, 35.0, 40.0);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) CHECK(win.pixels[y * 4 + x] == windowed(x + 4.0 * y + 32, 35, 40));
}

TEST_CASE("coronal and sagittal slices") {
  const auto v = ramp("r");
  const auto cor = extract_slice(v, SlicePlane::coronal, 1);
  for (std::size_t z = 0; z < 4; ++z)
    for (std::size_t x = 0; x < 4; ++x) CHECK(cor.pixels[z * 4 + x] == windowed(x + 4.0 + 16.0 * z, 0, 63));
  const auto sag = extract_slice(v, SlicePlane::sagittal, 3);
  for (std::size_t z = 0; z < 4; ++z)
    for (std::size_t y = 0; y < 4; ++y) CHECK(sag.pixels[z * 4 + y] == windowed(3 + 4.0 * y + 16.0 * z, 0, 63));
  CHECK_THROWS_AS(extract_slice(v, SlicePlane::sagittal, 4), InputError);
  CHECK_THROWS_AS(extract_slice(v, SlicePlane::axial, 0, 5.0, 5.0), RangeError);
}

TEST_CASE("constant volume renders uniform gray") {
  const Volume3D c("c", {3, 3, 3}, {1, 1, 1}, std::vector<double>(27, 7.0));
  for (auto [lo, hi] : {std::pair{0.0, 14.0}, std::pair{6.0, 10.0}}) {
    const auto img = extract_slice(c, SlicePlane::axial, 1, lo, hi);
    for (auto p : img.pixels) CHECK(p == img.pixels[0]);
  }
  const auto def = extract_slice(c, SlicePlane::coronal, 0);
  for (auto p : def.pixels) CHECK(p == 128);
}

TEST_CASE("PNG encoding round trips") {
  const auto img = extract_slice(ramp("r"), SlicePlane::axial, 3);
  const auto png = encode_png(img);
  CHECK(png.substr(1, 3) == "PNG");
  const auto back = decode_png(png);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.pixels == img.pixels);
  CHECK_THROWS_AS(decode_png("not a png"), FormatError);
}

TEST_CASE("queue follows the preselection measure") {
  ServiceFixture f;
  const auto q = build_pair_queue(f.records, "rmse");
  REQUIRE(q.size() == 3);
  CHECK(q[0].synthetic_id == "s1");
  CHECK(q[0].queue_rank == 1);
  CHECK(q[1].synthetic_id == "s0");
  CHECK(q[2].synthetic_id == "s2");
  CHECK(q[2].queue_rank == 3);
  CHECK(q[0].pair_id == "s1::t1");
  const auto by_mae = build_pair_queue(f.records, "mae");
  CHECK(by_mae[0].synthetic_id == "s2");
  CHECK_THROWS_AS(build_pair_queue(f.records, "ssim"), ConfigError);
}

TEST_CASE("rating submission rules") {
  ServiceFixture f;
  auto service = f.make();
  CHECK(service.submit_rating(body("s1::t1", "ann", 5)).status == 400);
  CHECK(service.submit_rating(body("s1::t1", "ann", 0)).status == 400);
  CHECK(service.submit_rating("{not json").status == 400);
  CHECK(service.submit_rating(R"({"pair_id":"s1::t1","rater_id":"ann","score":"3","round":1})").status == 400);
  CHECK(service.submit_rating(body("s1::t1", "eve", 3)).status == 400);
  CHECK(service.submit_rating(body("s1::t1", "ann", 3, 3)).status == 400);
  CHECK(service.submit_rating(body("s9::t1", "ann", 3)).status == 404);

  CHECK(service.submit_rating(body("s1::t1", "ann", 3)).status == 201);
  CHECK(service.submit_rating(body("s1::t1", "ann", 2)).status == 409);
  // Round 2 needs a round-1 disagreement.
  CHECK(service.submit_rating(body("s1::t1", "ann", 3, 2)).status == 409);
  CHECK(service.submit_rating(body("s1::t1", "bob", 4)).status == 201);
  CHECK(service.submit_rating(body("s1::t1", "bob", 4, 2)).status == 409);

  CHECK(service.submit_rating(body("s0::t0", "ann", 4)).status == 201);
  CHECK(service.submit_rating(body("s0::t0", "bob", 1)).status == 201);
  CHECK(service.submit_rating(body("s0::t0", "bob", 3, 2)).status == 201);

  const auto pairs = nlohmann::json::parse(service.pairs().body);
  CHECK(pairs[1]["pair_id"] == "s0::t0");
  CHECK(pairs[1]["needs_round_2"] == true);
  CHECK(pairs[1]["rated_by"].size() == 3);
  CHECK(pairs[0]["needs_round_2"] == false);
  CHECK(pairs[0].dump().find("ratio") == std::string::npos);

  const auto progress = nlohmann::json::parse(service.progress().body);
  CHECK(progress["pairs"] == 3);
  CHECK(progress["round_2_required"] == 1);
  CHECK(progress["raters"][0]["round_1"] == 2);
  CHECK(progress["raters"][1]["round_2"] == 1);
  CHECK(progress["round_1_complete"] == false);
}

TEST_CASE("restart reconstructs state from the log") {
  ServiceFixture f;
  {
    auto service = f.make();
    REQUIRE(service.submit_rating(body("s1::t1", "ann", 3)).status == 201);
    REQUIRE(service.submit_rating(body("s1::t1", "bob", 1)).status == 201);
  }
  // Simulate a crash during an append.
  { std::ofstream(f.dir / "ratings.jsonl", std::ios::app) << R"({"pair_id":"s0::t0","rat)"; }
  auto service = f.make();
  CHECK(service.warnings().size() == 1);
  const auto ratings = service.ratings();
  REQUIRE(ratings.size() == 2);
  CHECK(ratings[1].score == 1);
  CHECK_FALSE(ratings[0].timestamp.empty());
  CHECK(service.submit_rating(body("s1::t1", "ann", 3)).status == 409);
  CHECK(service.submit_rating(body("s1::t1", "ann", 2, 2)).status == 201);
  const auto again = f.make();
  CHECK(again.ratings().size() == 3);
  CHECK(again.warnings().empty());
}

TEST_CASE("service configuration errors") {
  ServiceFixture f;
  auto o = f.options();
  o.raters = {"ann"};
  CHECK_THROWS_AS(RatingService(f.records, f.training, f.synthetic, o), ConfigError);
  o.raters = {"ann", "ann"};
  CHECK_THROWS_AS(RatingService(f.records, f.training, f.synthetic, o), ConfigError);

  { std::ofstream(f.dir / "ratings.jsonl") << body("s1::t1", "eve", 3) << '\n'; }
  CHECK_THROWS_AS(f.make(), ConfigError);
}

TEST_CASE("volume meta and slices") {
  ServiceFixture f;
  auto service = f.make();
  const auto meta = service.volume_meta("s2");
  REQUIRE(meta.status == 200);
  const auto j = nlohmann::json::parse(meta.body);
  CHECK(j["dims"] == nlohmann::json::array({5, 6, 7}));
  CHECK(j["role"] == "synthetic");
  CHECK(j["intensity_range"][1] == 1.0);
  CHECK(service.volume_meta("nope").status == 404);

  const auto png = service.slice("t0", "axial", "6", std::nullopt, std::nullopt);
  CHECK(png.status == 200);
  CHECK(png.content_type == "image/png");
  const auto img = decode_png(png.body);
  CHECK(img.width == 5);
  CHECK(img.height == 6);
  CHECK(service.slice("t0", "axial", "7", std::nullopt, std::nullopt).status == 404);
  CHECK(service.slice("t0", "sagittal", "-1", std::nullopt, std::nullopt).status == 404);
  CHECK(service.slice("zz", "axial", "0", std::nullopt, std::nullopt).status == 404);
  CHECK(service.slice("t0", "oblique", "0", std::nullopt, std::nullopt).status == 400);
  CHECK(service.slice("t0", "axial", "x", std::nullopt, std::nullopt).status == 400);
  CHECK(service.slice("t0", "axial", "0", "0.5", "0.5").status == 400);
  CHECK(service.slice("t0", "axial", "0", "0.1", "0.6").status == 200);
}

TEST_CASE("HTTP API end to end") {
  ServiceFixture f;
  auto service = f.make();
  ServerOptions so;
  so.port = 0;
  RatingServer server(service, so);
  const int port = server.bind();
  std::thread t([&] { server.listen(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto pairs = client.Get("/api/pairs");
  REQUIRE(pairs);
  CHECK(pairs->status == 200);
  const auto queue = nlohmann::json::parse(pairs->body);
  REQUIRE(queue.size() == 3);
  CHECK(queue[0]["queue_rank"] == 1);
  CHECK(queue[0]["synthetic_id"] == "s1");

  auto meta = client.Get("/api/volumes/t1/meta");
  REQUIRE(meta);
  CHECK(meta->status == 200);
  auto slice = client.Get("/api/volumes/t1/slice?plane=coronal&index=2&lo=0&hi=1");
  REQUIRE(slice);
  CHECK(slice->status == 200);
  CHECK(slice->get_header_value("Content-Type") == "image/png");
  CHECK(decode_png(slice->body).height == 7);
  auto missing = client.Get("/api/volumes/t1/slice?plane=axial&index=7");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  auto bad = client.Post("/api/ratings", body("s1::t1", "ann", 5), "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(nlohmann::json::parse(bad->body).contains("error"));
  auto ok = client.Post("/api/ratings", body("s1::t1", "ann", 4), "application/json");
  REQUIRE(ok);
  CHECK(ok->status == 201);
  auto progress = client.Get("/api/progress");
  REQUIRE(progress);
  CHECK(nlohmann::json::parse(progress->body)["raters"][0]["round_1"] == 1);

  // The acknowledged rating is already on disk.
  CHECK(read_ratings_log(f.dir / "ratings.jsonl").size() == 1);

  RatingServer clash(service, {"127.0.0.1", port, std::nullopt});
  CHECK_THROWS_AS(clash.bind(), IoError);

  server.stop();
  t.join();
}
