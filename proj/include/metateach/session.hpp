#pragma once

// The 40-trial teaching loop as an explicit state machine, and its JSONL
// event log. The log is the ground truth: replaying its feedback records
// through a fresh learner must reproduce every stored snapshot exactly.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "metateach/errors.hpp"
#include "metateach/feedback.hpp"
#include "metateach/json_io.hpp"
#include "metateach/minigolf.hpp"
#include "metateach/pibb2.hpp"
#include "metateach/promp.hpp"
#include "metateach/teacher.hpp"

namespace metateach {

inline constexpr const char* kLogSchema = "metateach-log/1";
inline constexpr const char* kProtocolVersion = "metateach/1";

// Names a UI uses to show or hide controls. Fallback save/load share one.
inline constexpr std::array<std::string_view, 6> kMetaCapabilities{
    "guidance", "correction", "demonstration", "exploration", "speed", "fallback"};

inline std::vector<std::string> capabilities(Mode mode) {
  std::vector<std::string> out{"preference"};
  if (mode == Mode::FullModality) out.insert(out.end(), kMetaCapabilities.begin(), kMetaCapabilities.end());
  return out;
}

struct SessionConfig {
  BasisConfig basis;
  CourseConfig course;
  LearnerConstants constants;
  double base_sigma = 0.08;
  int num_trials = 40;

  void validate() const {
    basis.validate();
    course.validate();
    constants.validate();
    if (!(base_sigma > 0.0)) throw ValidationError("base_sigma must be > 0");
    if (num_trials < 1) throw ValidationError("num_trials must be >= 1");
  }
};

enum class Phase { ReadyToSample, AwaitingFeedback, Finished };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::ReadyToSample: return "ready_to_sample";
    case Phase::AwaitingFeedback: return "awaiting_feedback";
    case Phase::Finished: break;
  }
  return "finished";
}

struct PresentedPair {
  int trial_index = 0;
  WeightVector theta_a, theta_b;
  Trajectory traj_a, traj_b;
  EnvOutcome out_a, out_b;
  Eigen::VectorXd effective_sigma;
};

struct SessionState {
  std::string session_id;
  Mode mode = Mode::PreferenceOnly;
  Seed rng_seed = 0;
  SessionConfig config;
  int trial_index = 0;
  Phase phase = Phase::ReadyToSample;
  LearnerState learner;
  FallbackSlot fallback_slot;
  std::optional<PresentedPair> current_pair;
  Level exploration_level;
  Level speed_level;
  std::optional<Eigen::VectorXd> previous_effective_sigma;
};

struct LogRecord {
  std::uint64_t seq = 0;
  double timestamp = 0.0;
  int trial_index = -1;  // -1 for session-level records
  std::string kind;
  Json payload;

  Json to_json() const {
    return {{"seq", seq}, {"timestamp", timestamp}, {"trial_index", trial_index}, {"kind", kind},
            {"payload", payload}};
  }
  static LogRecord from_json(const Json& j) {
    try {
      return {j.at("seq").get<std::uint64_t>(), j.at("timestamp").get<double>(),
              j.at("trial_index").get<int>(), j.at("kind").get<std::string>(), j.at("payload")};
    } catch (const nlohmann::json::exception& e) {
      throw MalformedLogError(std::string("bad log record: ") + e.what());
    }
  }
};

using SessionLog = std::vector<LogRecord>;

// Learner-side effect of one trial's feedback. Shared by the live session
// and by log replay.
struct TrialEffect {
  LearnerState learner;
  FallbackSlot fallback_slot;
};

inline TrialEffect apply_trial_feedback(const LearnerState& learner, const FallbackSlot& slot,
                                        const WeightVector& theta_a, const WeightVector& theta_b,
                                        int trial_index, const TrialFeedback& fb, const BasisConfig& basis) {
  fb.validate();
  TrialEffect out{learner, slot};
  if (fb.fallback_save_target) {
    out.fallback_slot.weights = *fb.fallback_save_target == Target::First ? theta_a : theta_b;
  }
  if (fb.fallback_load && !out.fallback_slot.occupied()) {
    throw NoFallbackError("no fallback movement has been saved");
  }
  std::optional<WeightVector> demo;
  if (fb.demonstration) demo = fit_weights(*fb.demonstration, basis);

  const auto samples = build_samples(fb, theta_a, theta_b, trial_index, learner.constants);
  out.learner = update(learner, samples);
  if (demo) {
    out.learner = apply_demonstration(out.learner, *demo);
  } else if (fb.fallback_load) {
    out.learner = fallback_load(out.learner, out.fallback_slot);
  }
  return out;
}

inline Json fallback_slot_json(const FallbackSlot& slot) {
  return slot.occupied() ? vector_to_json(*slot.weights) : Json(nullptr);
}

inline Json session_config_json(const SessionConfig& c) {
  return {{"basis", to_json(c.basis)}, {"course", to_json(c.course)}, {"base_sigma", c.base_sigma},
          {"num_trials", c.num_trials}};
}

class Session {
 public:
  using Clock = std::function<double(std::uint64_t seq)>;
  using Sink = std::function<void(const LogRecord&)>;

  // Deterministic default: the timestamp is the record's sequence number.
  static double logical_clock(std::uint64_t seq) { return static_cast<double>(seq); }
  static double wall_clock(std::uint64_t) {
    using namespace std::chrono;
    return duration<double>(system_clock::now().time_since_epoch()).count();
  }

  Session(std::string session_id, Mode mode, Seed seed, SessionConfig config, Clock clock = logical_clock,
          Sink sink = {}, Json extra_start = Json::object())
      : clock_(std::move(clock)), sink_(std::move(sink)) {
    config.validate();
    state_.session_id = std::move(session_id);
    state_.mode = mode;
    state_.rng_seed = seed;
    state_.config = config;
    state_.learner = LearnerState::fresh(WeightVector::Zero(config.basis.weight_count()), config.base_sigma,
                                         config.constants);
    Json payload{{"schema", kLogSchema},
                 {"protocol", kProtocolVersion},
                 {"session_id", state_.session_id},
                 {"mode", to_string(mode)},
                 {"seed", seed},
                 {"config", session_config_json(config)},
                 {"constants", to_json(config.constants)},
                 {"exploration_multipliers", kExplorationMultipliers},
                 {"speed_factors", kSpeedFactors},
                 {"capabilities", capabilities(mode)}};
    for (const auto& [k, v] : extra_start.items()) payload[k] = v;
    log("session_start", -1, std::move(payload));
  }

  const SessionState& state() const { return state_; }
  const SessionLog& records() const { return records_; }

  const PresentedPair& present_pair() {
    if (state_.phase != Phase::ReadyToSample) {
      throw PhaseError(std::string("cannot present a pair while ") + std::string(to_string(state_.phase)));
    }
    const int trial = state_.trial_index;
    PresentedPair pair;
    pair.trial_index = trial;
    pair.effective_sigma =
        effective_sigma(state_.learner.dist.sigma, state_.exploration_level, state_.previous_effective_sigma);
    PolicyDistribution dist = state_.learner.dist;
    dist.sigma = pair.effective_sigma;
    pair.theta_a = sample_weights(dist, derive_seed(state_.rng_seed, static_cast<std::uint64_t>(trial), 1));
    pair.theta_b = sample_weights(dist, derive_seed(state_.rng_seed, static_cast<std::uint64_t>(trial), 2));
    const double speed = speed_factor(state_.speed_level);
    pair.traj_a = generate_trajectory(pair.theta_a, state_.config.basis, speed);
    pair.traj_b = generate_trajectory(pair.theta_b, state_.config.basis, speed);
    pair.out_a = simulate(pair.traj_a, state_.config.course);
    pair.out_b = simulate(pair.traj_b, state_.config.course);

    state_.previous_effective_sigma = pair.effective_sigma;
    state_.current_pair = std::move(pair);
    state_.phase = Phase::AwaitingFeedback;

    const PresentedPair& p = *state_.current_pair;
    log("pair_presented", trial,
        {{"theta_a", vector_to_json(p.theta_a)},
         {"theta_b", vector_to_json(p.theta_b)},
         {"effective_sigma", vector_to_json(p.effective_sigma)},
         {"exploration_level", state_.exploration_level.value()},
         {"speed_level", state_.speed_level.value()},
         {"speed_factor", speed}});
    log("outcome", trial, {{"first", to_json(p.out_a)}, {"second", to_json(p.out_b)}});
    return p;
  }

  void submit_feedback(const TrialFeedback& fb) {
    if (state_.phase != Phase::AwaitingFeedback) {
      throw PhaseError(std::string("cannot take feedback while ") + std::string(to_string(state_.phase)));
    }
    fb.validate();
    if (state_.mode == Mode::PreferenceOnly && fb.uses_meta(state_.exploration_level, state_.speed_level)) {
      throw CapabilityError("meta feedback is not available in preference-only mode");
    }
    const PresentedPair& pair = *state_.current_pair;
    const auto events = to_events(fb, state_.exploration_level, state_.speed_level);
    // Computed before any state changes, so a rejected trial leaves the session untouched.
    TrialEffect effect = apply_trial_feedback(state_.learner, state_.fallback_slot, pair.theta_a, pair.theta_b,
                                              pair.trial_index, fb, state_.config.basis);

    const int trial = state_.trial_index;
    state_.learner = std::move(effect.learner);
    state_.fallback_slot = std::move(effect.fallback_slot);
    state_.exploration_level = fb.exploration_level;
    state_.speed_level = fb.speed_level;
    state_.current_pair.reset();
    ++state_.trial_index;
    state_.phase = state_.trial_index >= state_.config.num_trials ? Phase::Finished : Phase::ReadyToSample;

    log("feedback", trial, {{"events", events_to_json(events)}});
    log("learner_snapshot", trial,
        {{"learner", to_json(state_.learner)},
         {"fallback_slot", fallback_slot_json(state_.fallback_slot)},
         {"exploration_level", state_.exploration_level.value()},
         {"speed_level", state_.speed_level.value()}});
    if (state_.phase == Phase::Finished) log("session_end", -1, end_summary());
  }

  void submit_events(const std::vector<FeedbackEvent>& events) {
    submit_feedback(from_events(events, state_.exploration_level, state_.speed_level));
  }

  // Marks an unfinished log as cut short. No-op once finished or truncated.
  void truncate(const std::string& reason) {
    if (state_.phase == Phase::Finished || truncated_) return;
    truncated_ = true;
    log("truncated", state_.trial_index, {{"reason", reason}});
  }
  bool truncated() const { return truncated_; }

 private:
  Json end_summary() const {
    int hits = 0;
    Json first_hit = nullptr;
    for (const LogRecord& r : records_) {
      if (r.kind != "outcome") continue;
      if (r.payload["first"]["hit"].get<bool>() || r.payload["second"]["hit"].get<bool>()) {
        if (first_hit.is_null()) first_hit = r.trial_index + 1;
        ++hits;
      }
    }
    return {{"trials", state_.trial_index}, {"hit_trials", hits}, {"first_hit_trial", first_hit}};
  }

  void log(std::string kind, int trial, Json payload) {
    LogRecord r{next_seq_, clock_(next_seq_), trial, std::move(kind), std::move(payload)};
    ++next_seq_;
    if (sink_) sink_(r);
    records_.push_back(std::move(r));
  }

  SessionState state_;
  SessionLog records_;
  Clock clock_;
  Sink sink_;
  std::uint64_t next_seq_ = 0;
  bool truncated_ = false;
};

// --- scripted runs ---------------------------------------------------------

inline std::string scripted_session_id(Mode mode, Seed seed) {
  return std::string(to_string(mode)) + "-" + std::to_string(seed);
}

inline SessionLog run_scripted_session(Mode mode, TeacherConfig teacher_cfg, const SessionConfig& config,
                                       Seed seed) {
  teacher_cfg.mode = mode;
  teacher_cfg.seed = seed;
  Session session(scripted_session_id(mode, seed), mode, seed, config, Session::logical_clock, {},
                  {{"teacher", to_json(teacher_cfg)}});
  ScriptedTeacher teacher(teacher_cfg, config.course);
  while (session.state().phase != Phase::Finished) {
    const PresentedPair& pair = session.present_pair();
    session.submit_feedback(teacher.respond(pair.out_a, pair.out_b, pair.trial_index));
  }
  return session.records();
}

// --- JSONL -----------------------------------------------------------------

inline std::string log_line(const LogRecord& r) { return r.to_json().dump(); }

inline void write_log(std::ostream& out, const SessionLog& log) {
  for (const LogRecord& r : log) out << log_line(r) << '\n';
}

inline void write_log_file(const std::string& path, const SessionLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_log(out, log);
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline SessionLog read_log(std::istream& in) {
  SessionLog log;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedLogError("line " + std::to_string(line_no) + " is not JSON: " + e.what());
    }
    log.push_back(LogRecord::from_json(j));
  }
  return log;
}

inline SessionLog read_log_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_log(in);
}

// --- log checks ------------------------------------------------------------

struct LogHeader {
  std::string session_id;
  Mode mode = Mode::PreferenceOnly;
  Seed seed = 0;
  SessionConfig config;
};

inline LogHeader parse_log_header(const SessionLog& log) {
  if (log.empty() || log.front().kind != "session_start") {
    throw MalformedLogError("log does not begin with a session_start record");
  }
  const Json& p = log.front().payload;
  try {
    if (p.at("schema").get<std::string>() != kLogSchema) throw MalformedLogError("unknown log schema");
    LogHeader h;
    h.session_id = p.at("session_id").get<std::string>();
    h.mode = mode_from_string(p.at("mode").get<std::string>());
    h.seed = p.at("seed").get<Seed>();
    const Json& c = p.at("config");
    h.config.basis = basis_config_from_json(c.at("basis"));
    h.config.course = course_config_from_json(c.at("course"));
    h.config.base_sigma = c.at("base_sigma").get<double>();
    h.config.num_trials = c.at("num_trials").get<int>();
    h.config.constants = learner_constants_from_json(p.at("constants"));
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedLogError(std::string("bad session_start record: ") + e.what());
  } catch (const ValidationError& e) {
    throw MalformedLogError(std::string("bad session_start record: ") + e.what());
  }
}

inline bool log_finished(const SessionLog& log) { return !log.empty() && log.back().kind == "session_end"; }

// Structural problems with a log; empty when it is well formed. With
// require_finished, a truncated or unfinished log is itself a problem.
inline std::vector<std::string> validate_log(const SessionLog& log, bool require_finished = true) {
  std::vector<std::string> problems;
  LogHeader header;
  try {
    header = parse_log_header(log);
  } catch (const Error& e) {
    return {e.what()};
  }
  static const std::array<std::string_view, 4> kTrialOrder{"pair_presented", "outcome", "feedback",
                                                           "learner_snapshot"};
  int expected_trial = 0;
  std::size_t step = 0;
  int pairs = 0;
  bool ended = false;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const LogRecord& r = log[i];
    const std::string where = "record " + std::to_string(i) + " (" + r.kind + ")";
    if (r.seq != i) problems.push_back(where + ": sequence number " + std::to_string(r.seq));
    if (i > 0 && r.timestamp < log[i - 1].timestamp) problems.push_back(where + ": timestamp goes backwards");
    if (i == 0) continue;
    if (ended) {
      problems.push_back(where + ": record after the end of the session");
      continue;
    }
    if (r.kind == "session_end" || r.kind == "truncated") {
      if (step != 0 && r.kind == "session_end") problems.push_back(where + ": trial left incomplete");
      ended = true;
      continue;
    }
    if (step == 0 && r.kind != "pair_presented") {
      problems.push_back(where + ": expected pair_presented");
      continue;
    }
    if (r.kind != kTrialOrder[step]) {
      problems.push_back(where + ": expected " + std::string(kTrialOrder[step]));
      continue;
    }
    if (r.trial_index != expected_trial) {
      problems.push_back(where + ": trial index " + std::to_string(r.trial_index) + ", expected " +
                         std::to_string(expected_trial));
    }
    try {
      if (r.kind == "pair_presented") {
        ++pairs;
      } else if (r.kind == "outcome") {
        for (const char* key : {"first", "second"}) {
          const EnvOutcome o = env_outcome_from_json(r.payload.at(key));
          if (o.hit && o.distance_to_hole > header.config.course.hole_radius) {
            problems.push_back(where + ": hit with distance beyond the hole radius");
          }
        }
      } else if (r.kind == "feedback") {
        const auto events = events_from_json(r.payload.at("events"));
        int preferences = 0;
        for (const auto& e : events) {
          if (!is_meta(e)) ++preferences;
          if (is_meta(e) && header.mode == Mode::PreferenceOnly) {
            problems.push_back(where + ": meta event in a preference-only session");
          }
        }
        if (preferences != 1) problems.push_back(where + ": expected exactly one preference event");
      }
    } catch (const std::exception& e) {
      problems.push_back(where + ": " + e.what());
    }
    step = (step + 1) % kTrialOrder.size();
    if (step == 0) ++expected_trial;
  }
  if (pairs > header.config.num_trials) problems.push_back("more trials than the session budget");
  if (require_finished) {
    if (!log_finished(log)) {
      problems.push_back(log.back().kind == "truncated" ? "log is truncated" : "log has no session_end record");
    } else if (pairs != header.config.num_trials) {
      problems.push_back("finished log has " + std::to_string(pairs) + " pair_presented records, expected " +
                         std::to_string(header.config.num_trials));
    }
  }
  return problems;
}

struct ReplayReport {
  int snapshots_checked = 0;
  std::optional<int> first_mismatch_trial;
  bool ok() const { return !first_mismatch_trial; }
};

// Re-applies every feedback record to a fresh learner and compares with the
// stored snapshot, bit for bit.
inline ReplayReport replay_log(const SessionLog& log) {
  const LogHeader header = parse_log_header(log);
  LearnerState learner = LearnerState::fresh(WeightVector::Zero(header.config.basis.weight_count()),
                                             header.config.base_sigma, header.config.constants);
  FallbackSlot slot;
  Level exploration, speed;
  std::optional<WeightVector> theta_a, theta_b;
  ReplayReport report;
  try {
    for (const LogRecord& r : log) {
      if (r.kind == "pair_presented") {
        theta_a = vector_from_json(r.payload.at("theta_a"));
        theta_b = vector_from_json(r.payload.at("theta_b"));
      } else if (r.kind == "feedback") {
        if (!theta_a) throw MalformedLogError("feedback without a presented pair");
        const TrialFeedback fb = from_events(events_from_json(r.payload.at("events")), exploration, speed);
        TrialEffect effect =
            apply_trial_feedback(learner, slot, *theta_a, *theta_b, r.trial_index, fb, header.config.basis);
        learner = std::move(effect.learner);
        slot = std::move(effect.fallback_slot);
        exploration = fb.exploration_level;
        speed = fb.speed_level;
        theta_a.reset();
        theta_b.reset();
      } else if (r.kind == "learner_snapshot") {
        const LearnerState stored = learner_state_from_json(r.payload.at("learner"));
        FallbackSlot stored_slot;
        if (!r.payload.at("fallback_slot").is_null()) {
          stored_slot.weights = vector_from_json(r.payload.at("fallback_slot"));
        }
        ++report.snapshots_checked;
        if (!(stored == learner) || !(stored_slot == slot)) {
          report.first_mismatch_trial = r.trial_index;
          return report;
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedLogError(std::string("bad record during replay: ") + e.what());
  }
  return report;
}

}  // namespace metateach
