#include "earshot/service/server.hpp"

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/strand.hpp>
#include <boost/asio/write.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <deque>
#include <thread>
#include <vector>

#include "earshot/assets.hpp"
#include "earshot/error.hpp"
#include "earshot/text.hpp"

namespace earshot::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

std::string percent_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
        std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += s[i] == '+' ? ' ' : s[i];
    }
  }
  return out;
}

std::vector<std::string> segments(std::string_view path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    auto j = path.find('/', i);
    if (j == std::string_view::npos) j = path.size();
    if (j > i) out.push_back(percent_decode(path.substr(i, j - i)));
    i = j + 1;
  }
  return out;
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownMemory:
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Backpressure: return 429;
    case ErrorCode::BadConfig:
    case ErrorCode::BadFrame:
    case ErrorCode::InvalidArgument:
    case ErrorCode::DuplicateId:
    case ErrorCode::MalformedLine:
    case ErrorCode::SessionClosed: return 400;
    default: return 500;
  }
}

RestResponse json_response(int status, const nlohmann::json& body) { return {status, "application/json", body.dump()}; }

RestResponse error_response(ErrorCode code, const std::string& message) {
  return json_response(status_for(code), {{"error", {{"code", std::string(to_string(code))}, {"message", message}}}});
}

std::uint64_t parse_seq(const std::map<std::string, std::string>& q, const std::string& key) {
  auto it = q.find(key);
  if (it == q.end() || it->second.empty()) return 0;
  if (it->second.find_first_not_of("0123456789") != std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, key + " must be a non-negative integer");
  }
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, key + " must be a non-negative integer");
  }
}

nlohmann::json parse_body(const std::string& body) {
  if (text::trim(body).empty()) return nullptr;
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::BadFrame, "request body is not valid JSON");
  return j;
}

RestResponse handle_session(SessionManager& mgr, const RestRequest& req, const std::vector<std::string>& seg,
                            const std::map<std::string, std::string>& query) {
  // seg[0..1] == v1, session
  if (seg.size() == 2) {
    if (req.method == "POST") {
      auto id = mgr.create(parse_create_request(parse_body(req.body)));
      return json_response(201, {{"session_id", id},
                                 {"stream", "/v1/session/" + id + "/stream"},
                                 {"events", "/v1/session/" + id + "/events"},
                                 {"state", mgr.state(id)}});
    }
    if (req.method == "GET") return json_response(200, {{"sessions", mgr.list()}});
    return error_response(ErrorCode::InvalidArgument, "method not allowed");
  }
  const std::string& id = seg[2];
  if (seg.size() == 3) {
    if (req.method == "GET") return json_response(200, mgr.state(id));
    if (req.method == "DELETE") {
      mgr.close(id);
      return json_response(200, mgr.state(id));
    }
  } else if (seg.size() == 4 && seg[3] == "transcript" && req.method == "GET") {
    if (query.count("wait")) mgr.flush(id);
    return json_response(200, nlohmann::json(mgr.transcript(id)));
  } else if (seg.size() == 4 && seg[3] == "frames" && req.method == "GET") {
    if (query.count("wait")) mgr.flush(id);
    return json_response(200, {{"frames", mgr.frames(id, parse_seq(query, "after_seq"))}});
  } else if (seg.size() == 4 && seg[3] == "messages" && req.method == "POST") {
    auto body = parse_body(req.body);
    std::vector<nlohmann::json> frames;
    if (body.is_array()) {
      frames.assign(body.begin(), body.end());
    } else if (body.is_object()) {
      frames.push_back(body);
    } else {
      throw Error(ErrorCode::BadFrame, "messages body must be a frame object or an array of frames");
    }
    std::size_t accepted = 0;
    for (const auto& f : frames) accepted += mgr.submit(id, f.dump()) ? 1 : 0;
    if (query.count("wait")) mgr.flush(id);
    // Any rejection (full queue or closed session) is surfaced as 429 with the counts.
    return json_response(accepted == frames.size() ? 202 : 429,
                         {{"accepted", accepted}, {"rejected", frames.size() - accepted}});
  }
  return error_response(ErrorCode::NotFound, "no route for " + req.method + " " + req.target);
}

RestResponse handle_memory(SessionManager& mgr, const RestRequest& req, const std::vector<std::string>& seg) {
  if (seg.size() == 2 && req.method == "GET") return json_response(200, {{"memories", mgr.memories().list()}});
  if (seg.size() != 3) return error_response(ErrorCode::NotFound, "no route for " + req.target);
  const std::string& id = seg[2];
  if (req.method == "GET") return json_response(200, nlohmann::json(mgr.memories().get(id)));
  if (req.method == "PUT") {
    Memory m;
    if (req.content_type.rfind("text/plain", 0) == 0) {
      m = parse_memory_text(req.body, id);
    } else {
      auto body = parse_body(req.body);
      if (!body.is_object()) throw Error(ErrorCode::InvalidArgument, "memory body must be a JSON object");
      if (!body.contains("memory_id")) body["memory_id"] = id;
      try {
        m = body.get<Memory>();
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("bad memory: ") + e.what());
      }
      if (m.memory_id != id) throw Error(ErrorCode::InvalidArgument, "memory_id does not match the URL");
    }
    mgr.memories().replace(m);
    return json_response(200, nlohmann::json(m));
  }
  return error_response(ErrorCode::InvalidArgument, "method not allowed");
}

}  // namespace

std::pair<std::string, std::map<std::string, std::string>> split_target(std::string_view target) {
  std::map<std::string, std::string> query;
  auto q = target.find('?');
  std::string path(target.substr(0, q));
  if (q != std::string_view::npos) {
    auto rest = target.substr(q + 1);
    std::size_t i = 0;
    while (i <= rest.size()) {
      auto amp = rest.find('&', i);
      if (amp == std::string_view::npos) amp = rest.size();
      auto kv = rest.substr(i, amp - i);
      if (!kv.empty()) {
        auto eq = kv.find('=');
        query[percent_decode(kv.substr(0, eq))] = eq == std::string_view::npos ? "" : percent_decode(kv.substr(eq + 1));
      }
      i = amp + 1;
    }
  }
  return {path, query};
}

RestResponse route_rest(SessionManager& mgr, const RestRequest& req) {
  try {
    auto [path, query] = split_target(req.target);
    auto seg = segments(path);
    if (req.method == "OPTIONS") return {204, "text/plain", ""};
    if (seg.size() == 1 && seg[0] == "healthz" && req.method == "GET") {
      return json_response(200, {{"status", "ok"}, {"sessions", mgr.size()}, {"wire_version", kWireVersion}});
    }
    if (seg.size() >= 2 && seg[0] == "v1" && seg[1] == "session") return handle_session(mgr, req, seg, query);
    if (seg.size() >= 2 && seg[0] == "v1" && seg[1] == "memory") return handle_memory(mgr, req, seg);
    if (seg.size() == 3 && seg[0] == "v1" && seg[1] == "schema" && seg[2] == "wire_frame" && req.method == "GET") {
      return {200, "application/schema+json", std::string(assets::wire_frame_schema)};
    }
    return error_response(ErrorCode::NotFound, "no route for " + req.method + " " + path);
  } catch (const Error& e) {
    return error_response(e.code(), e.what());
  } catch (const std::exception& e) {
    return error_response(ErrorCode::InvalidArgument, e.what());
  }
}

namespace {

void add_cors(http::response<http::string_body>& res) {
  res.set(http::field::access_control_allow_origin, "*");
  res.set(http::field::access_control_allow_methods, "GET, POST, PUT, DELETE, OPTIONS");
  res.set(http::field::access_control_allow_headers, "Content-Type, Last-Event-ID");
}

// Outbound frame queue shared by the WebSocket and SSE connections.
template <class Derived>
class FramePusher : public std::enable_shared_from_this<Derived> {
 protected:
  FramePusher(SessionManager& mgr, std::string id) : mgr_(mgr), id_(std::move(id)) {}

  template <class Executor>
  void attach(Executor ex, std::uint64_t after_seq) {
    std::weak_ptr<Derived> weak = this->shared_from_this();
    sub_ = mgr_.subscribe(
        id_,
        [weak, ex](std::uint64_t seq, const std::string& frame) {
          if (auto self = weak.lock()) {
            net::post(ex, [self, seq, frame] { self->enqueue(seq, frame); });
          }
        },
        after_seq);
    attached_ = true;
  }

  void detach() {
    if (attached_) mgr_.unsubscribe(id_, sub_);
    attached_ = false;
  }

  void enqueue(std::uint64_t seq, const std::string& frame) {
    if (closed_) return;
    outq_.push_back(static_cast<Derived*>(this)->encode(seq, frame));
    if (!writing_) write_next();
  }

  void write_next() {
    writing_ = true;
    static_cast<Derived*>(this)->async_send(outq_.front(), [self = this->shared_from_this()](beast::error_code ec,
                                                                                              std::size_t) {
      auto* me = static_cast<FramePusher*>(self.get());
      me->outq_.pop_front();
      if (ec) {
        me->closed_ = true;
        me->detach();
        return;
      }
      if (me->outq_.empty()) {
        me->writing_ = false;
      } else {
        me->write_next();
      }
    });
  }

  SessionManager& mgr_;
  std::string id_;
  std::uint64_t sub_ = 0;
  bool attached_ = false;
  bool closed_ = false;
  bool writing_ = false;
  std::deque<std::string> outq_;

  template <class> friend class FramePusher;
};

class WsSession : public FramePusher<WsSession> {
 public:
  WsSession(tcp::socket&& socket, SessionManager& mgr, std::string id, std::uint64_t after_seq)
      : FramePusher(mgr, std::move(id)), ws_(std::move(socket)), after_seq_(after_seq) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

  std::string encode(std::uint64_t, const std::string& frame) { return frame; }

  template <class Handler>
  void async_send(const std::string& text, Handler&& h) {
    ws_.text(true);
    ws_.async_write(net::buffer(text), std::forward<Handler>(h));
  }

 private:
  friend class FramePusher<WsSession>;

  void on_accept(beast::error_code ec) {
    if (ec) return;
    try {
      attach(ws_.get_executor(), after_seq_);
    } catch (const Error& e) {
      ws_.async_close(websocket::close_reason(websocket::close_code::policy_error, e.what()),
                      [self = shared_from_this()](beast::error_code) {});
      return;
    }
    read_next();
  }

  void read_next() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      closed_ = true;
      detach();
      return;
    }
    auto text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    try {
      mgr_.submit(id_, std::move(text));
    } catch (const Error&) {
      closed_ = true;
      detach();
      return;
    }
    read_next();
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::uint64_t after_seq_;
};

class SseSession : public FramePusher<SseSession> {
 public:
  SseSession(beast::tcp_stream&& stream, SessionManager& mgr, std::string id, std::uint64_t after_seq)
      : FramePusher(mgr, std::move(id)), stream_(std::move(stream)), after_seq_(after_seq) {}

  void run() {
    stream_.expires_never();
    outq_.push_back(
        "HTTP/1.1 200 OK\r\nContent-Type: text/event-stream\r\nCache-Control: no-cache\r\n"
        "Connection: close\r\nAccess-Control-Allow-Origin: *\r\n\r\n");
    write_next();
    attach(stream_.get_executor(), after_seq_);
    // Any read completion means the client went away.
    stream_.async_read_some(net::buffer(sink_), [self = shared_from_this()](beast::error_code, std::size_t) {
      self->closed_ = true;
      self->detach();
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_both, ignored);
    });
  }

  std::string encode(std::uint64_t seq, const std::string& frame) {
    return "id: " + std::to_string(seq) + "\ndata: " + frame + "\n\n";
  }

  template <class Handler>
  void async_send(const std::string& text, Handler&& h) {
    net::async_write(stream_, net::buffer(text), std::forward<Handler>(h));
  }

 private:
  friend class FramePusher<SseSession>;
  beast::tcp_stream stream_;
  std::uint64_t after_seq_;
  char sink_[256];
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, SessionManager& mgr) : stream_(std::move(socket)), mgr_(mgr) {}

  void run() {
    net::dispatch(stream_.get_executor(), [self = shared_from_this()] { self->read_next(); });
  }

 private:
  void read_next() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    auto [path, query] = split_target(std::string_view(req_.target().data(), req_.target().size()));
    auto seg = segments(path);
    const bool session_route = seg.size() == 4 && seg[0] == "v1" && seg[1] == "session";
    if (session_route && seg[3] == "stream" && websocket::is_upgrade(req_) && mgr_.contains(seg[2])) {
      std::make_shared<WsSession>(stream_.release_socket(), mgr_, seg[2], parse_after(query, ""))->run(std::move(req_));
      return;
    }
    if (session_route && seg[3] == "events" && req_.method() == http::verb::get && mgr_.contains(seg[2])) {
      std::string last_id(req_["Last-Event-ID"]);
      std::make_shared<SseSession>(std::move(stream_), mgr_, seg[2], parse_after(query, last_id))->run();
      return;
    }

    RestRequest rr;
    rr.method = std::string(req_.method_string());
    rr.target = std::string(req_.target());
    rr.body = req_.body();
    rr.content_type = std::string(req_[http::field::content_type]);
    if (session_route && (seg[3] == "stream" || seg[3] == "events") && !mgr_.contains(seg[2])) {
      rr.method = "GET";
      rr.target = "/v1/session/" + seg[2];  // yields the UnknownSession 404
    }
    auto out = route_rest(mgr_, rr);

    auto res = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(out.status),
                                                                  req_.version());
    res->set(http::field::server, "earshot");
    res->set(http::field::content_type, out.content_type);
    add_cors(*res);
    res->keep_alive(req_.keep_alive());
    res->body() = std::move(out.body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec || !res->keep_alive()) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->read_next();
    });
  }

  static std::uint64_t parse_after(const std::map<std::string, std::string>& q, const std::string& fallback) {
    auto it = q.find("after_seq");
    const std::string& v = it != q.end() ? it->second : fallback;
    try {
      return v.empty() ? 0 : std::stoull(v);
    } catch (const std::exception&) {
      return 0;
    }
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  SessionManager& mgr_;
};

}  // namespace

struct Server::Impl {
  SessionManager& mgr;
  ServerOptions opts;
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::vector<std::thread> threads;
  std::optional<net::executor_work_guard<net::io_context::executor_type>> guard;
  bool running = false;

  Impl(SessionManager& m, ServerOptions o) : mgr(m), opts(std::move(o)), ioc(static_cast<int>(std::max(1u, opts.threads))) {}

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (!acceptor.is_open()) return;
      if (!ec) std::make_shared<HttpSession>(std::move(socket), mgr)->run();
      accept();
    });
  }
};

Server::Server(SessionManager& mgr, ServerOptions opts) : impl_(std::make_unique<Impl>(mgr, std::move(opts))) {}

Server::~Server() { stop(); }

unsigned short Server::start() {
  auto& im = *impl_;
  beast::error_code ec;
  tcp::endpoint ep(net::ip::make_address(im.opts.address, ec), im.opts.port);
  if (ec) throw Error(ErrorCode::InvalidArgument, "bad listen address '" + im.opts.address + "'");
  im.acceptor.open(ep.protocol());
  im.acceptor.set_option(net::socket_base::reuse_address(true));
  im.acceptor.bind(ep, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot bind " + im.opts.address + ":" + std::to_string(im.opts.port) + ": " +
                                         ec.message());
  im.acceptor.listen(net::socket_base::max_listen_connections);
  im.accept();
  im.guard.emplace(net::make_work_guard(im.ioc));
  for (unsigned i = 0; i < std::max(1u, im.opts.threads); ++i) im.threads.emplace_back([&im] { im.ioc.run(); });
  im.running = true;
  return im.acceptor.local_endpoint().port();
}

void Server::stop() {
  auto& im = *impl_;
  if (!im.running) return;
  im.running = false;
  net::post(im.ioc, [&im] {
    beast::error_code ignored;
    im.acceptor.close(ignored);
  });
  im.guard.reset();
  im.ioc.stop();
  for (auto& t : im.threads) {
    if (t.joinable()) t.join();
  }
  im.threads.clear();
}

void Server::wait_for_signal() {
  net::io_context sig_ioc;
  net::signal_set signals(sig_ioc, SIGINT, SIGTERM);
  signals.async_wait([](beast::error_code, int) {});
  sig_ioc.run();
  stop();
}

}  // namespace earshot::service
