#include <httplib.h>

#include <fmt/format.h>
#include <json.hpp>

#include "relict/errors.hpp"
#include "relict/rating_service.hpp"

namespace relict {

struct RatingServer::Impl {
  Impl(RatingService& s, ServerOptions o) : service(s), options(std::move(o)) {}

  RatingService& service;
  ServerOptions options;
  httplib::Server server;
  bool bound = false;
};

namespace {

void send(httplib::Response& res, const ServiceResponse& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

std::optional<std::string> param(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  return req.get_param_value(key);
}

// httplib's default also sets SO_REUSEPORT, which would let a second server
// share a port that is already in use.
void reuse_address_only(socket_t sock) {
  int yes = 1;
  setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
}

}  // namespace

RatingServer::RatingServer(RatingService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  auto& srv = impl_->server;
  srv.set_socket_options(reuse_address_only);
  RatingService* svc = &service;

  srv.Get("/api/pairs", [svc](const httplib::Request&, httplib::Response& res) { send(res, svc->pairs()); });
  srv.Get(R"(/api/volumes/([^/]+)/meta)", [svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc->volume_meta(req.matches[1].str()));
  });
  srv.Get(R"(/api/volumes/([^/]+)/slice)", [svc](const httplib::Request& req, httplib::Response& res) {
    const auto plane = param(req, "plane").value_or("axial");
    const auto index = param(req, "index");
    if (!index) {
      send(res, {400, "application/json", R"({"error":"missing query parameter 'index'"})"});
      return;
    }
    const auto lo = param(req, "lo");
    const auto hi = param(req, "hi");
    send(res, svc->slice(req.matches[1].str(), plane, *index, lo ? std::optional<std::string_view>(*lo) : std::nullopt,
                         hi ? std::optional<std::string_view>(*hi) : std::nullopt));
  });
  srv.Post("/api/ratings", [svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc->submit_rating(req.body));
  });
  srv.Get("/api/progress", [svc](const httplib::Request&, httplib::Response& res) { send(res, svc->progress()); });

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
  });

  if (impl_->options.static_dir) {
    if (!srv.set_mount_point("/", impl_->options.static_dir->string())) {
      throw ConfigError(fmt::format("{}: static directory does not exist", impl_->options.static_dir->string()));
    }
  }
}

RatingServer::~RatingServer() { stop(); }

int RatingServer::bind() {
  auto& srv = impl_->server;
  const auto& opts = impl_->options;
  int port = opts.port;
  if (port == 0) {
    port = srv.bind_to_any_port(opts.host);
    if (port < 0) throw IoError(fmt::format("cannot bind {} to a free port", opts.host));
  } else if (!srv.bind_to_port(opts.host, port)) {
    throw IoError(fmt::format("cannot bind {}:{}; is the port in use?", opts.host, port));
  }
  impl_->bound = true;
  return port;
}

void RatingServer::listen() {
  if (!impl_->bound) throw ConfigError("RatingServer::listen called before bind");
  impl_->server.listen_after_bind();
}

void RatingServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

void RatingServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace relict
