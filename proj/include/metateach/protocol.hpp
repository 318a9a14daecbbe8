#pragma once

// "metateach/1" message handling. Transport-agnostic: the server feeds each
// decoded JSON request to SessionManager::handle and sends back the reply.
// docs/protocol.md lists every message and field.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>

#include "metateach/errors.hpp"
#include "metateach/json_io.hpp"
#include "metateach/session.hpp"

namespace metateach {

inline Json error_message(const std::string& code, const std::string& message) {
  return {{"type", "error"}, {"protocol", kProtocolVersion}, {"code", code}, {"message", message}};
}

inline Json state_message(const SessionState& s, bool pending_demonstration = false) {
  return {{"type", "state"},
          {"protocol", kProtocolVersion},
          {"session_id", s.session_id},
          {"mode", to_string(s.mode)},
          {"phase", to_string(s.phase)},
          {"trial_index", s.trial_index},
          {"num_trials", s.config.num_trials},
          {"capabilities", capabilities(s.mode)},
          {"exploration_level", s.exploration_level.value()},
          {"speed_level", s.speed_level.value()},
          {"fallback_saved", s.fallback_slot.occupied()},
          {"pending_demonstration", pending_demonstration}};
}

inline Json pair_message(const SessionState& s, const PresentedPair& p) {
  return {{"type", "pair"},
          {"protocol", kProtocolVersion},
          {"session_id", s.session_id},
          {"trial_index", p.trial_index},
          {"trajA", to_json(p.traj_a)},
          {"trajB", to_json(p.traj_b)},
          {"outA", to_json(p.out_a)},
          {"outB", to_json(p.out_b)},
          {"course", to_json(s.config.course)}};
}

struct ServerOptions {
  SessionConfig config;
  std::optional<Mode> mode;  // when set, sessions may only use this mode
  std::optional<std::filesystem::path> log_dir;
  bool wall_clock = true;
};

class SessionManager {
 public:
  explicit SessionManager(ServerOptions options) : options_(std::move(options)) {
    options_.config.validate();
    if (options_.log_dir) std::filesystem::create_directories(*options_.log_dir);
  }

  // Never throws for bad requests; every failure becomes an error message.
  Json handle(const Json& request) {
    try {
      if (!request.is_object()) throw ValidationError("request must be a JSON object");
      if (request.contains("protocol") && request.at("protocol") != kProtocolVersion) {
        throw ValidationError("unsupported protocol version");
      }
      const std::string type = detail::require<std::string>(request, "type");
      if (type == "start_session") return start(request);
      if (type == "get_pair") return with_session(request, [](Entry& e) {
        const PresentedPair& p = e.session->present_pair();
        return pair_message(e.session->state(), p);
      });
      if (type == "feedback") return with_session(request, [&](Entry& e) { return feedback(e, request); });
      if (type == "demo_points") return with_session(request, [&](Entry& e) { return demo_points(e, request); });
      if (type == "get_state") return with_session(request, [](Entry& e) {
        return state_message(e.session->state(), e.pending_demo.has_value());
      });
      throw ValidationError("unknown message type '" + type + "'");
    } catch (const Error& e) {
      return error_message(e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
      return error_message("validation", e.what());
    } catch (const std::exception& e) {
      return error_message("internal", e.what());
    }
  }

  // Appends a truncation marker to every unfinished session log.
  void shutdown(const std::string& reason) {
    std::lock_guard<std::mutex> lock(map_mutex_);
    for (auto& [id, entry] : sessions_) {
      std::lock_guard<std::mutex> session_lock(entry->mutex);
      if (entry->session) entry->session->truncate(reason);
      if (entry->file) entry->file->flush();
    }
  }

  std::optional<SessionLog> log_of(const std::string& id) {
    auto entry = find(id);
    if (!entry) return std::nullopt;
    std::lock_guard<std::mutex> lock(entry->mutex);
    if (!entry->session) return std::nullopt;
    return entry->session->records();
  }

  std::size_t session_count() {
    std::lock_guard<std::mutex> lock(map_mutex_);
    return sessions_.size();
  }

 private:
  struct Entry {
    std::mutex mutex;
    std::unique_ptr<std::ofstream> file;
    std::unique_ptr<Session> session;
    std::optional<Trajectory> pending_demo;
  };

  std::shared_ptr<Entry> find(const std::string& id) {
    std::lock_guard<std::mutex> lock(map_mutex_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  template <typename F>
  Json with_session(const Json& request, F&& body) {
    const auto id = detail::require<std::string>(request, "session_id");
    auto entry = find(id);
    if (!entry) throw UnknownSessionError("no session '" + id + "'");
    std::lock_guard<std::mutex> lock(entry->mutex);
    if (!entry->session) throw UnknownSessionError("session '" + id + "' failed to start");
    return body(*entry);
  }

  Json start(const Json& request) {
    const Mode mode = request.contains("mode") ? mode_from_string(request.at("mode").get<std::string>())
                                               : options_.mode.value_or(Mode::FullModality);
    if (options_.mode && mode != *options_.mode) {
      throw CapabilityError("this server only hosts " + std::string(to_string(*options_.mode)) + " sessions");
    }
    const Seed seed = request.value("seed", Seed{0});
    std::string id = request.value("session_id", std::string());
    if (id.empty()) id = "session-" + std::to_string(++counter_);
    for (char c : id) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') {
        throw ValidationError("session_id may only contain letters, digits, '-' and '_'");
      }
    }

    // The entry is locked before it becomes visible, so no request can see
    // it half built.
    auto entry = std::make_shared<Entry>();
    std::lock_guard<std::mutex> lock(entry->mutex);
    {
      std::lock_guard<std::mutex> map_lock(map_mutex_);
      if (sessions_.count(id)) throw DuplicateSessionError("session '" + id + "' already exists");
      sessions_[id] = entry;
    }
    Session::Sink sink;
    if (options_.log_dir) {
      entry->file = std::make_unique<std::ofstream>(*options_.log_dir / (id + ".jsonl"), std::ios::binary);
      std::ofstream* file = entry->file.get();
      sink = [file](const LogRecord& r) { *file << log_line(r) << '\n' << std::flush; };
    }
    entry->session = std::make_unique<Session>(id, mode, seed, options_.config,
                                               options_.wall_clock ? Session::Clock(Session::wall_clock)
                                                                   : Session::Clock(Session::logical_clock),
                                               std::move(sink));
    return state_message(entry->session->state());
  }

  Json feedback(Entry& e, const Json& request) {
    std::vector<FeedbackEvent> events = events_from_json(detail::require<Json>(request, "events"));
    if (e.pending_demo) {
      const bool has_demo = std::any_of(events.begin(), events.end(), [](const FeedbackEvent& ev) {
        return std::holds_alternative<event::Demonstration>(ev);
      });
      if (!has_demo) events.emplace_back(event::Demonstration{*e.pending_demo});
    }
    e.session->submit_events(events);
    e.pending_demo.reset();
    return state_message(e.session->state());
  }

  // A drawn demonstration is fitted right away so a bad stroke is reported
  // immediately; it is applied with the next feedback of the trial.
  Json demo_points(Entry& e, const Json& request) {
    const SessionState& s = e.session->state();
    if (s.mode != Mode::FullModality) throw CapabilityError("demonstrations need a full-modality session");
    if (s.phase != Phase::AwaitingFeedback) throw PhaseError("demonstrations belong to a presented pair");
    Trajectory demo = trajectory_from_points(detail::require<Json>(request, "points"));
    fit_weights(demo, s.config.basis);
    e.pending_demo = std::move(demo);
    return state_message(s, true);
  }

  ServerOptions options_;
  std::mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::atomic<std::uint64_t> counter_{0};
};

// --- framing ---------------------------------------------------------------

// Socket messages are a 4-byte big-endian length followed by UTF-8 JSON.
inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;

inline std::string encode_frame(const std::string& payload) {
  if (payload.size() > kMaxFrameBytes) throw ValidationError("message too large");
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out{static_cast<char>(n >> 24), static_cast<char>(n >> 16), static_cast<char>(n >> 8),
                  static_cast<char>(n)};
  return out + payload;
}

inline std::uint32_t decode_frame_length(const unsigned char header[4]) {
  return (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) | (std::uint32_t{header[2]} << 8) |
         std::uint32_t{header[3]};
}

}  // namespace metateach
