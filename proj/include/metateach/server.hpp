#pragma once

// Transports for the session protocol: length-prefixed JSON frames over TCP
// (the UI's bidirectional channel) and a one-request-one-reply HTTP endpoint
// for scripted clients. Both hand messages to the same SessionManager.

#include <array>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>

// Eigen first: resolv.h (via asio) defines a `_res` macro that breaks Eigen headers.
#include "metateach/protocol.hpp"

#include <boost/asio.hpp>
#include <httplib.h>

namespace metateach {

namespace asio = boost::asio;
using asio::ip::tcp;

class FrameConnection : public std::enable_shared_from_this<FrameConnection> {
 public:
  FrameConnection(tcp::socket socket, SessionManager& manager) : socket_(std::move(socket)), manager_(manager) {}

  void start() { read_header(); }

 private:
  void read_header() {
    auto self = shared_from_this();
    asio::async_read(socket_, asio::buffer(header_), [self](boost::system::error_code ec, std::size_t) {
      if (ec) return;
      const std::uint32_t n = decode_frame_length(self->header_.data());
      if (n > kMaxFrameBytes) {
        self->reply(error_message("validation", "message too large"), false);
        return;
      }
      self->body_.resize(n);
      self->read_body();
    });
  }

  void read_body() {
    auto self = shared_from_this();
    asio::async_read(socket_, asio::buffer(body_), [self](boost::system::error_code ec, std::size_t) {
      if (ec) return;
      Json request;
      try {
        request = Json::parse(self->body_);
      } catch (const nlohmann::json::parse_error& e) {
        self->reply(error_message("validation", std::string("not JSON: ") + e.what()), true);
        return;
      }
      self->reply(self->manager_.handle(request), true);
    });
  }

  void reply(const Json& message, bool keep_reading) {
    auto self = shared_from_this();
    out_ = encode_frame(message.dump());
    asio::async_write(socket_, asio::buffer(out_), [self, keep_reading](boost::system::error_code ec, std::size_t) {
      if (!ec && keep_reading) self->read_header();
    });
  }

  tcp::socket socket_;
  SessionManager& manager_;
  std::array<unsigned char, 4> header_{};
  std::string body_;
  std::string out_;
};

class FrameServer {
 public:
  // Port 0 picks a free port. Throws if the port cannot be bound.
  FrameServer(SessionManager& manager, const std::string& host, unsigned short port)
      : manager_(manager), acceptor_(io_) {
    const tcp::endpoint endpoint(asio::ip::make_address(host), port);
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(tcp::acceptor::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen();
    accept();
    thread_ = std::thread([this] { io_.run(); });
  }
  ~FrameServer() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void stop() {
    io_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  void accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (!ec) std::make_shared<FrameConnection>(std::move(socket), manager_)->start();
      if (acceptor_.is_open()) accept();
    });
  }

  SessionManager& manager_;
  asio::io_context io_;
  tcp::acceptor acceptor_;
  std::thread thread_;
};

class HttpServer {
 public:
  // Port 0 picks a free port. Throws if the port cannot be bound.
  HttpServer(SessionManager& manager, const std::string& host, int port) : manager_(manager) {
    server_.Post("/api", [this](const httplib::Request& req, httplib::Response& res) {
      Json reply;
      try {
        reply = manager_.handle(Json::parse(req.body));
      } catch (const nlohmann::json::parse_error& e) {
        reply = error_message("validation", std::string("not JSON: ") + e.what());
      }
      res.set_content(reply.dump(), "application/json");
    });
    server_.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(Json{{"protocol", kProtocolVersion}, {"status", "ok"}}.dump(), "application/json");
    });
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
      if (port_ < 0) throw std::runtime_error("cannot bind an HTTP port on " + host);
    } else {
      if (!server_.bind_to_port(host, port)) {
        throw std::runtime_error("cannot bind HTTP port " + std::to_string(port) + " on " + host);
      }
      port_ = port;
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~HttpServer() { stop(); }

  int port() const { return port_; }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  SessionManager& manager_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

// --- clients ---------------------------------------------------------------

class ProtocolClient {
 public:
  virtual ~ProtocolClient() = default;
  virtual Json request(const Json& message) = 0;
};

class HttpProtocolClient : public ProtocolClient {
 public:
  HttpProtocolClient(const std::string& host, int port) : client_(host, port) {
    client_.set_read_timeout(30, 0);
  }

  Json request(const Json& message) override {
    const auto res = client_.Post("/api", message.dump(), "application/json");
    if (!res) throw std::runtime_error("HTTP request failed: " + httplib::to_string(res.error()));
    return Json::parse(res->body);
  }

 private:
  httplib::Client client_;
};

class FrameProtocolClient : public ProtocolClient {
 public:
  FrameProtocolClient(const std::string& host, unsigned short port) : socket_(io_) {
    socket_.connect(tcp::endpoint(asio::ip::make_address(host), port));
  }

  Json request(const Json& message) override {
    asio::write(socket_, asio::buffer(encode_frame(message.dump())));
    std::array<unsigned char, 4> header{};
    asio::read(socket_, asio::buffer(header));
    std::string body(decode_frame_length(header.data()), '\0');
    asio::read(socket_, asio::buffer(body));
    return Json::parse(body);
  }

 private:
  asio::io_context io_;
  tcp::socket socket_;
};

// Drives one whole session through the protocol with a scripted teacher.
// Returns the final state message, or the first error message received.
inline Json run_protocol_session(ProtocolClient& client, Mode mode, Seed seed, TeacherConfig teacher_cfg,
                                 const std::string& session_id = "") {
  Json start{{"type", "start_session"}, {"protocol", kProtocolVersion}, {"mode", to_string(mode)},
             {"seed", seed}};
  if (!session_id.empty()) start["session_id"] = session_id;
  Json state = client.request(start);
  if (state.at("type") == "error") return state;
  const std::string id = state.at("session_id").get<std::string>();

  teacher_cfg.mode = mode;
  teacher_cfg.seed = seed;
  std::optional<ScriptedTeacher> teacher;
  while (state.at("phase") != "finished") {
    const Json pair = client.request({{"type", "get_pair"}, {"session_id", id}});
    if (pair.at("type") == "error") return pair;
    if (!teacher) teacher.emplace(teacher_cfg, course_config_from_json(pair.at("course")));
    const Level exploration(state.at("exploration_level").get<int>());
    const Level speed(state.at("speed_level").get<int>());
    const TrialFeedback fb = teacher->respond(env_outcome_from_json(pair.at("outA")),
                                              env_outcome_from_json(pair.at("outB")),
                                              pair.at("trial_index").get<int>());
    state = client.request(
        {{"type", "feedback"}, {"session_id", id}, {"events", events_to_json(to_events(fb, exploration, speed))}});
    if (state.at("type") == "error") return state;
  }
  return state;
}

}  // namespace metateach
