#include <csignal>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "relict/commands.hpp"
#include "relict/parallel.hpp"
#include "relict/rating_service.hpp"
#include "relict/volume_io.hpp"

namespace {

relict::RatingServer* g_server = nullptr;

void handle_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

int serve(const std::string& records_path, const std::string& training_path, const std::string& synthetic_path,
          const std::string& ratings_log, const std::string& host, int port, const std::string& raters,
          const std::string& preselection, const std::string& static_dir) {
  const unsigned workers = relict::resolve_worker_count(1);
  const auto records = relict::read_records(records_path);
  relict::CorpusLoadOptions load;
  load.workers = workers;
  const auto training = relict::load_corpus(relict::read_manifest(training_path), load);
  const auto synthetic = relict::load_corpus(relict::read_manifest(synthetic_path), load);

  relict::RatingServiceOptions options;
  options.ratings_log = ratings_log;
  options.raters = split_csv(raters);
  options.preselection_measure = preselection;
  relict::RatingService service(records, training, synthetic, options);
  for (const auto& w : service.warnings()) std::cerr << "warning: " << w << '\n';

  relict::ServerOptions server_options;
  server_options.host = host;
  server_options.port = port;
  if (!static_dir.empty()) server_options.static_dir = static_dir;
  relict::RatingServer server(service, server_options);
  const int bound = server.bind();
  g_server = &server;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  std::cout << fmt::format("serving {} pairs on http://{}:{}", service.queue().size(), host, bound) << std::endl;
  server.listen();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replica detection for 3D generative model outputs"};
  app.require_subcommand(1);

  std::string config_path;
  auto* rank = app.add_subcommand("rank", "Rank training images for every synthetic image");
  rank->add_option("--config", config_path, "Run config JSON")->required()->check(CLI::ExistingFile);

  std::string ratings_path;
  std::string records_path;
  std::string out_dir;
  auto* sweep = app.add_subcommand("sweep", "Calibrate thresholds against rater labels");
  sweep->add_option("--ratings", ratings_path, "Ratings log (JSON Lines)")->required();
  sweep->add_option("--records", records_path, "records.jsonl from rank")->required();
  sweep->add_option("--out", out_dir, "Output directory")->required();

  std::string training_path;
  std::string synthetic_path;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string raters = "rater1,rater2";
  std::string preselection = "rmse";
  std::string static_dir;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP rating service");
  serve_cmd->add_option("--records", records_path, "records.jsonl from rank")->required();
  serve_cmd->add_option("--training", training_path, "Training manifest")->required();
  serve_cmd->add_option("--synthetic", synthetic_path, "Synthetic manifest")->required();
  serve_cmd->add_option("--ratings-log", ratings_path, "Ratings log (JSON Lines, append-only)")->required();
  serve_cmd->add_option("--host", host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--port", port, "Port, 0 for any free port")->capture_default_str();
  serve_cmd->add_option("--raters", raters, "The two rater ids, comma separated")->capture_default_str();
  serve_cmd->add_option("--preselection", preselection, "Measure whose records order the queue")
      ->capture_default_str();
  serve_cmd->add_option("--static", static_dir, "Directory served at / (rating UI build)");

  std::string in_dir;
  auto* report = app.add_subcommand("report", "Render summary, curves and scatter plots");
  report->add_option("--in", in_dir, "Directory holding rank and sweep outputs")->required();
  report->add_option("--out", out_dir, "Report directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (rank->parsed()) {
      relict::cmd_rank(relict::read_run_config(config_path), std::cout);
    } else if (sweep->parsed()) {
      relict::cmd_sweep(ratings_path, records_path, out_dir, std::cout);
    } else if (serve_cmd->parsed()) {
      return serve(records_path, training_path, synthetic_path, ratings_path, host, port, raters, preselection,
                   static_dir);
    } else if (report->parsed()) {
      relict::cmd_report(in_dir, out_dir);
    }
  } catch (const relict::Error& e) {
    std::cerr << relict::error_json(e) << std::endl;
    return relict::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "InternalError"}, {"message", e.what()}}.dump() << std::endl;
    return 1;
  }
  return 0;
}
