#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ontogen/review.hpp"

namespace ontogen {

struct ServeConfig {
  std::string bind_address = "127.0.0.1";
  int port = 8765;                                 // 0 = pick a free port
  std::optional<std::filesystem::path> static_dir;  // built UI assets, if any
  std::optional<std::filesystem::path> export_dir;  // where POST /export writes files
};

/// Request/response API over the review service:
///   GET /ontology  ontology file format
///   GET /queue     flagged same-as verdicts
///   GET /audit     provenance and build audit
///   POST /edits    one ExpertEdit; 200 applied, 409 rejected, 400 malformed
///   GET /edits     the edit log
///   POST /export   curated ontology and CSO triples
/// Every endpoint answers 503 until an ontology is loaded.
class ReviewHttpServer {
 public:
  ReviewHttpServer(ReviewService& service, ServeConfig cfg) : service_(service), cfg_(std::move(cfg)) { routes(); }
  ~ReviewHttpServer() { stop(); }

  /// Binds and serves on a background thread; returns the bound port.
  int start() {
    if (cfg_.port == 0) {
      port_ = server_.bind_to_any_port(cfg_.bind_address);
    } else {
      port_ = server_.bind_to_port(cfg_.bind_address, cfg_.port) ? cfg_.port : -1;
    }
    if (port_ < 0) throw IoError("cannot bind " + cfg_.bind_address + ":" + std::to_string(cfg_.port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stop() is called elsewhere.
  void run() {
    if (!server_.listen(cfg_.bind_address, cfg_.port))
      throw IoError("cannot bind " + cfg_.bind_address + ":" + std::to_string(cfg_.port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }

 private:
  static void json_reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class F>
  auto guarded(F f) {
    return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const ServiceNotReady& e) {
        json_reply(res, 503, {{"status", "not_ready"}, {"reason", e.what()}});
      } catch (const ParseError& e) {
        json_reply(res, 400, {{"status", "invalid"}, {"reason", e.what()}});
      } catch (const std::exception& e) {
        json_reply(res, 500, {{"status", "error"}, {"reason", e.what()}});
      }
    };
  }

  void routes() {
    server_.Get("/ontology", guarded([this](const httplib::Request&, httplib::Response& res) {
                  res.set_content(service_.get_views().ontology, "application/json");
                }));
    server_.Get("/queue", guarded([this](const httplib::Request&, httplib::Response& res) {
                  json_reply(res, 200, service_.get_views().queue);
                }));
    server_.Get("/audit", guarded([this](const httplib::Request&, httplib::Response& res) {
                  json_reply(res, 200, service_.get_views().audit);
                }));
    server_.Get("/edits", guarded([this](const httplib::Request&, httplib::Response& res) {
                  const auto log = service_.edit_log();
                  json_reply(res, 200, {{"base_ontology_digest", log.base_ontology_digest}, {"edits", log.edits}});
                }));
    server_.Post("/edits", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   auto body = nlohmann::json::parse(req.body, nullptr, false);
                   if (body.is_discarded()) throw ParseError("request body is not JSON");
                   const auto result = service_.apply(body.get<ExpertEdit>());
                   json_reply(res, result.applied ? 200 : 409, result);
                 }));
    server_.Post("/export", guarded([this](const httplib::Request&, httplib::Response& res) {
                   const auto snap = service_.snapshot();
                   nlohmann::json body{{"ontology", snap->ontology_text},
                                       {"cso_triples", export_cso_triples(snap->state.ontology)},
                                       {"last_edit_id", snap->last_edit_id}};
                   if (cfg_.export_dir) {
                     std::filesystem::create_directories(*cfg_.export_dir);
                     const auto onto = *cfg_.export_dir / "ontology.curated.json";
                     const auto cso = *cfg_.export_dir / "cso_triples.curated.tsv";
                     std::ofstream(onto, std::ios::binary) << snap->ontology_text << '\n';
                     std::ofstream(cso, std::ios::binary) << body["cso_triples"].get<std::string>();
                     body["written"] = {onto.string(), cso.string()};
                   }
                   json_reply(res, 200, body);
                 }));
    if (cfg_.static_dir && !server_.set_mount_point("/", cfg_.static_dir->string()))
      throw ConfigError("static UI directory " + cfg_.static_dir->string() + " does not exist");
  }

  ReviewService& service_;
  ServeConfig cfg_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace ontogen
