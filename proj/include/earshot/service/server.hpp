#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "earshot/service/session_manager.hpp"

namespace earshot::service {

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks an ephemeral port
  unsigned threads = 2;
};

// Minimal request/response pair for the REST surface; independent of the
// transport so routing can be exercised without sockets.
struct RestRequest {
  std::string method;
  std::string target;  // path plus optional query
  std::string body;
  std::string content_type;
};

struct RestResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

RestResponse route_rest(SessionManager& mgr, const RestRequest& req);

// Splits "/a/b?x=1&y=2" into the path and decoded query parameters.
std::pair<std::string, std::map<std::string, std::string>> split_target(std::string_view target);

// HTTP + WebSocket + SSE on one port:
//   GET  /healthz
//   POST /v1/session                      GET /v1/session/{id}
//   GET  /v1/session/{id}/transcript      DELETE /v1/session/{id}
//   POST /v1/session/{id}/messages        GET /v1/session/{id}/events (SSE)
//   WS   /v1/session/{id}/stream          GET/PUT /v1/memory/{id}
//   GET  /v1/memory                       GET /v1/schema/wire_frame
class Server {
 public:
  Server(SessionManager& mgr, ServerOptions opts);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and starts the I/O threads; returns the bound port.
  unsigned short start();
  void stop();
  // Blocks until stop() or SIGINT/SIGTERM.
  void wait_for_signal();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace earshot::service
