// metateach: scripted experiment runner, log analysis and protocol server.
//
// Exit codes: 0 success, 1 runtime/I-O failure, 2 bad command line.

#include <algorithm>
#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "metateach/analysis.hpp"
#include "metateach/config.hpp"
#include "metateach/server.hpp"
#include "metateach/session.hpp"

namespace fs = std::filesystem;
using namespace metateach;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::map<std::string, Mode> kModes{{"preference-only", Mode::PreferenceOnly}, {"full", Mode::FullModality}};

ExperimentConfig load_experiment(const std::string& path) {
  if (path.empty()) return {};
  if (!fs::exists(path)) throw std::runtime_error("config file not found: " + path);
  try {
    return load_config(path);
  } catch (const ConfigError& e) {
    throw UsageError(std::string("bad config: ") + e.what());
  }
}

TeacherConfig teacher_for(const ExperimentConfig& cfg, const std::string& kind) {
  TeacherConfig t = cfg.teacher;
  if (kind == "noisy" && t.noise_temperature == 0.0) t.noise_temperature = TeacherConfig::kHumanLikeNoise;
  if (kind == "oracle") t.noise_temperature = 0.0;
  return t;
}

void ensure_writable_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".write-test";
  std::ofstream(probe).put('x');
  if (!fs::exists(probe)) throw std::runtime_error("output directory is not writable: " + dir.string());
  fs::remove(probe);
}

std::vector<fs::path> list_logs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".jsonl") out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// --- run -------------------------------------------------------------------

struct RunOptions {
  std::string mode;
  int seeds = 30;
  Seed first_seed = 1;
  int trials = 40;
  std::string config;
  std::string out;
  std::string teacher = "oracle";
  int jobs = 1;
};

int cmd_run(const RunOptions& o) {
  ExperimentConfig cfg = load_experiment(o.config);
  cfg.session.num_trials = o.trials;
  cfg.session.validate();
  const Mode mode = kModes.at(o.mode);
  const TeacherConfig teacher = teacher_for(cfg, o.teacher);
  ensure_writable_dir(o.out);

  std::vector<Seed> seeds;
  for (int i = 0; i < o.seeds; ++i) seeds.push_back(o.first_seed + static_cast<Seed>(i));
  std::vector<std::string> files(seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::optional<std::string> error;

  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        const SessionLog log = run_scripted_session(mode, teacher, cfg.session, seeds[i]);
        files[i] = scripted_session_id(mode, seeds[i]) + ".jsonl";
        write_log_file((fs::path(o.out) / files[i]).string(), log);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 1; j < std::max(1, o.jobs); ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) throw std::runtime_error(*error);

  Json manifest{{"log_schema", kLogSchema},
                {"protocol", kProtocolVersion},
                {"mode", to_string(mode)},
                {"teacher", o.teacher},
                {"teacher_config", to_json(teacher)},
                {"seeds", seeds},
                {"session_config", session_config_json(cfg.session)},
                {"constants", to_json(cfg.session.constants)},
                {"files", files}};
  std::ofstream out(fs::path(o.out) / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write manifest.json");
  std::cout << "wrote " << files.size() << " session logs to " << o.out << '\n';
  return 0;
}

// --- analyze ---------------------------------------------------------------

struct AnalyzeOptions {
  std::string group_a, group_b, out;
  std::string label_a = "A", label_b = "B";
};

std::vector<SessionLog> load_group(const std::string& dir) {
  const auto files = list_logs(dir);
  if (files.empty()) throw std::runtime_error("no session logs (*.jsonl) in " + dir);
  std::vector<SessionLog> logs;
  for (const auto& f : files) {
    try {
      logs.push_back(read_log_file(f.string()));
    } catch (const std::exception& e) {
      throw std::runtime_error(f.string() + ": " + e.what());
    }
  }
  return logs;
}

int cmd_analyze(const AnalyzeOptions& o) {
  const GroupReport report = group_report(load_group(o.group_a), load_group(o.group_b), o.label_a, o.label_b);
  ensure_writable_dir(o.out);
  auto write = [&](const char* name, auto&& fn) {
    std::ofstream out(fs::path(o.out) / name);
    fn(out);
    if (!out) throw std::runtime_error(std::string("cannot write ") + name);
  };
  write("summary.csv", [&](std::ostream& s) { write_summary_csv(s, report); });
  write("hit_rate.csv", [&](std::ostream& s) { write_hit_rate_csv(s, report); });
  write("tests.csv", [&](std::ostream& s) { write_tests_csv(s, report); });
  write("spearman.csv", [&](std::ostream& s) { write_spearman_csv(s, report); });
  const std::string text = summary_text(report);
  write("summary.txt", [&](std::ostream& s) { s << text; });
  std::cout << text;
  return 0;
}

// --- serve -----------------------------------------------------------------

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8640;
  std::optional<int> frame_port;
  std::string config;
  std::string mode;
  std::string out = "serve-logs";
};

int cmd_serve(const ServeOptions& o) {
  // Signals are taken synchronously by this thread; block them before any
  // server thread starts so the workers inherit the mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ServerOptions options;
  options.config = load_experiment(o.config).session;
  if (!o.mode.empty()) options.mode = kModes.at(o.mode);
  ensure_writable_dir(o.out);
  options.log_dir = o.out;
  SessionManager manager(options);

  HttpServer http(manager, o.host, o.port);
  std::optional<FrameServer> frames;
  if (o.frame_port) frames.emplace(manager, o.host, static_cast<unsigned short>(*o.frame_port));
  std::cout << "listening http=" << http.port();
  if (frames) std::cout << " frame=" << frames->port();
  std::cout << " protocol=" << kProtocolVersion << std::endl;

  int sig = 0;
  sigwait(&signals, &sig);
  http.stop();
  if (frames) frames->stop();
  manager.shutdown(sig == SIGINT ? "SIGINT" : "SIGTERM");
  std::cout << "stopped, logs flushed to " << o.out << std::endl;
  return 0;
}

// --- client ----------------------------------------------------------------

struct ClientOptions {
  std::string host = "127.0.0.1";
  int port = 8640;
  bool frames = false;
  std::string mode = "full";
  Seed seed = 1;
  std::string session_id;
  std::string config;
  std::string teacher = "oracle";
};

int cmd_client(const ClientOptions& o) {
  const ExperimentConfig cfg = load_experiment(o.config);
  std::unique_ptr<ProtocolClient> client;
  if (o.frames) {
    client = std::make_unique<FrameProtocolClient>(o.host, static_cast<unsigned short>(o.port));
  } else {
    client = std::make_unique<HttpProtocolClient>(o.host, o.port);
  }
  const Json result =
      run_protocol_session(*client, kModes.at(o.mode), o.seed, teacher_for(cfg, o.teacher), o.session_id);
  std::cout << result.dump() << '\n';
  return result.at("type") == "error" ? kExitFailure : 0;
}

// --- validate --------------------------------------------------------------

int cmd_validate(const std::vector<std::string>& paths) {
  bool all_ok = true;
  for (const auto& path : paths) {
    std::vector<std::string> problems;
    try {
      const SessionLog log = read_log_file(path);
      problems = validate_log(log);
      if (problems.empty()) {
        const ReplayReport replay = replay_log(log);
        if (!replay.ok()) {
          problems.push_back("replay diverges at trial " + std::to_string(*replay.first_mismatch_trial));
        }
      }
    } catch (const std::exception& e) {
      problems.push_back(e.what());
    }
    std::cout << (problems.empty() ? "ok   " : "FAIL ") << path << '\n';
    for (const auto& p : problems) std::cout << "  " << p << '\n';
    all_ok = all_ok && problems.empty();
  }
  return all_ok ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive robot-teaching simulator: scripted runs, analysis, protocol server"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run scripted teaching sessions and write JSONL logs");
  run_cmd->add_option("--mode", run.mode, "Feedback mode")->required()->check(CLI::IsMember(kModes));
  run_cmd->add_option("--seeds", run.seeds, "Number of sessions (seeds first-seed, first-seed+1, ...)")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--first-seed", run.first_seed, "First seed");
  run_cmd->add_option("--trials", run.trials, "Trials per session")->check(CLI::PositiveNumber);
  run_cmd->add_option("--config", run.config, "INI config file");
  run_cmd->add_option("--out", run.out, "Output directory")->required();
  run_cmd->add_option("--teacher", run.teacher, "Scripted teacher")->check(CLI::IsMember({"oracle", "noisy"}));
  run_cmd->add_option("--jobs", run.jobs, "Sessions run in parallel")->check(CLI::PositiveNumber);

  AnalyzeOptions analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Compare two groups of session logs");
  analyze_cmd->add_option("--group-a", analyze.group_a, "Directory of group A logs")->required();
  analyze_cmd->add_option("--group-b", analyze.group_b, "Directory of group B logs")->required();
  analyze_cmd->add_option("--out", analyze.out, "Report directory")->required();
  analyze_cmd->add_option("--label-a", analyze.label_a, "Name of group A in the report");
  analyze_cmd->add_option("--label-b", analyze.label_b, "Name of group B in the report");

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Host the session protocol for UI clients");
  serve_cmd->add_option("--host", serve.host, "Bind address");
  serve_cmd->add_option("--port", serve.port, "HTTP port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--frame-port", serve.frame_port, "Length-prefixed TCP port (0 picks a free one)")
      ->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--config", serve.config, "INI config file");
  serve_cmd->add_option("--mode", serve.mode, "Restrict sessions to one mode")->check(CLI::IsMember(kModes));
  serve_cmd->add_option("--out", serve.out, "Directory for session logs");

  ClientOptions client;
  auto* client_cmd = app.add_subcommand("client", "Drive one session against a server with a scripted teacher");
  client_cmd->add_option("--host", client.host, "Server address");
  client_cmd->add_option("--port", client.port, "Server port")->check(CLI::Range(1, 65535));
  client_cmd->add_flag("--frames", client.frames, "Use the length-prefixed TCP transport instead of HTTP");
  client_cmd->add_option("--mode", client.mode, "Feedback mode")->check(CLI::IsMember(kModes));
  client_cmd->add_option("--seed", client.seed, "Session seed");
  client_cmd->add_option("--session-id", client.session_id, "Session id (server picks one if empty)");
  client_cmd->add_option("--config", client.config, "INI config file (teacher thresholds)");
  client_cmd->add_option("--teacher", client.teacher, "Scripted teacher")
      ->check(CLI::IsMember({"oracle", "noisy"}));

  std::vector<std::string> validate_paths;
  auto* validate_cmd = app.add_subcommand("validate", "Check log structure and replay every learner snapshot");
  validate_cmd->add_option("logs", validate_paths, "Session log files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run);
    if (analyze_cmd->parsed()) return cmd_analyze(analyze);
    if (serve_cmd->parsed()) return cmd_serve(serve);
    if (client_cmd->parsed()) return cmd_client(client);
    if (validate_cmd->parsed()) return cmd_validate(validate_paths);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
