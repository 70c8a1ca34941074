#pragma once

// Competition scoring and batch evaluation: per-trial score, suite runner
// over a worker pool, JSON/CSV reports, trajectory logs and SVG figures.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "barn/config.hpp"
#include "barn/environment_io.hpp"
#include "barn/mpc_planner.hpp"
#include "barn/safety_layer.hpp"
#include "barn/sampling_planner.hpp"
#include "barn/simulator.hpp"
#include "json.hpp"

namespace barn {

/// OT / clip(AT, 2 OT, 8 OT) on success, zero otherwise.
inline double trial_score(bool success, double actual_time, double optimal_time) {
  if (!(optimal_time > 0.0)) throw std::invalid_argument("optimal time must be positive");
  if (!(actual_time >= 0.0)) throw std::invalid_argument("actual time must be nonnegative");
  if (!success) return 0.0;
  return optimal_time / std::clamp(actual_time, 2.0 * optimal_time, 8.0 * optimal_time);
}

inline const std::vector<std::string>& planner_names() {
  static const std::vector<std::string> names = {"mpc", "dwa", "straight", "null"};
  return names;
}

/// Fresh planner instance; `safety` wraps it in the certification filter.
inline std::unique_ptr<Planner> make_planner(const std::string& name, const BenchmarkConfig& config,
                                             bool safety) {
  std::unique_ptr<Planner> p;
  if (name == "mpc") {
    MpcParams m = config.mpc;
    m.wheel_separation = config.robot.wheel_separation;
    p = std::make_unique<MpcPlanner>(m, config.global_planner, config.robot);
  } else if (name == "dwa") {
    SamplingParams s = config.dwa;
    s.wheel_separation = config.robot.wheel_separation;
    s.max_wheel_speed = config.robot.max_speed;
    p = std::make_unique<SamplingPlanner>(s, config.global_planner, config.robot);
  } else if (name == "straight") {
    p = std::make_unique<ConstantPlanner>(VelocityCommand{config.robot.max_speed, 0.0});
  } else if (name == "null") {
    p = std::make_unique<ConstantPlanner>(VelocityCommand{0.0, 0.0});
  } else {
    throw FormatError("unknown planner '" + name + "'");
  }
  if (safety) p = std::make_unique<SafetyFilter>(std::move(p), config.safety, config.robot);
  return p;
}

struct NamedEnvironment {
  std::string id;
  EnvironmentSpec env;
};

/// Every *.json file in `dir`, ordered by file name; the id is the stem.
inline std::vector<NamedEnvironment> load_environment_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw FormatError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<NamedEnvironment> out;
  for (const auto& f : files) out.push_back({f.stem().string(), load_environment(f)});
  return out;
}

/// Courses generated from consecutive seeds derived from `seed`.
inline std::vector<NamedEnvironment> generate_suite(std::uint64_t seed, int count,
                                                    GeneratorParams params = {}) {
  std::vector<NamedEnvironment> out;
  for (int i = 0; i < count; ++i) {
    params.seed = hash_combine(seed, static_cast<std::uint64_t>(i));
    char id[32];
    std::snprintf(id, sizeof id, "env_%03d", i);
    out.push_back({id, generate_environment(params)});
  }
  return out;
}

inline std::uint64_t trial_seed(std::uint64_t suite_seed, const std::string& env_id, int trial) {
  return hash_combine(hash_combine(suite_seed, fnv1a(env_id)), static_cast<std::uint64_t>(trial));
}

struct TrialResult {
  int trial{0};
  std::uint64_t seed{0};
  TrialOutcome outcome{TrialOutcome::timeout};
  double actual_time{0.0};
  double score{0.0};
  std::string diagnostic;

  bool success() const { return outcome == TrialOutcome::success; }
};

struct EnvironmentResult {
  std::string id;
  double optimal_time{0.0};
  double path_length{0.0};
  std::vector<TrialResult> trials;
};

struct ScoreReport {
  std::string planner;
  bool safety{false};
  std::uint64_t seed{0};
  int trials_per_env{0};
  std::uint64_t config_hash{0};
  double goal_tolerance{0.0};
  double path_clearance{0.0};
  std::vector<EnvironmentResult> environments;
  double mean_score{0.0};
  double success_rate{0.0};
  /// Wall-clock creation time; not part of the report body.
  std::string created;

  std::size_t trial_count() const {
    std::size_t n = 0;
    for (const auto& e : environments) n += e.trials.size();
    return n;
  }
};

/// Called (under a lock) with each finished trial's full record.
using TrialObserver =
    std::function<void(const NamedEnvironment&, const TrialResult&, const TrialRecord&)>;

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Runs `trials_per_env` trials on every course across a worker pool. A
/// trial that throws is recorded as an error outcome (score zero).
inline ScoreReport evaluate_suite(const std::string& planner, bool safety,
                                  const std::vector<NamedEnvironment>& envs, int trials_per_env,
                                  std::uint64_t seed, const BenchmarkConfig& config,
                                  const TrialObserver& observer = {}) {
  if (envs.empty()) throw std::invalid_argument("environment suite is empty");
  if (trials_per_env < 1) throw std::invalid_argument("trials_per_env must be positive");
  make_planner(planner, config, safety);  // reject unknown names before spawning workers

  ScoreReport report;
  report.planner = planner;
  report.safety = safety;
  report.seed = seed;
  report.trials_per_env = trials_per_env;
  report.config_hash = config_hash(config);
  report.goal_tolerance = config.harness.goal_tolerance;
  report.path_clearance = config.generator.path_clearance;
  report.created = utc_timestamp();
  for (const auto& e : envs) {
    EnvironmentResult r;
    r.id = e.id;
    r.optimal_time = e.env.optimal_time;
    r.path_length = e.env.path_length;
    r.trials.resize(static_cast<std::size_t>(trials_per_env));
    report.environments.push_back(std::move(r));
  }

  const TrialLimits limits{config.harness.timeout, config.harness.goal_tolerance};
  const std::size_t total = envs.size() * static_cast<std::size_t>(trials_per_env);
  std::atomic<std::size_t> next{0};
  std::mutex observer_mutex;
  auto work = [&] {
    for (std::size_t job = next++; job < total; job = next++) {
      const std::size_t ei = job / static_cast<std::size_t>(trials_per_env);
      const int trial = static_cast<int>(job % static_cast<std::size_t>(trials_per_env));
      const NamedEnvironment& ne = envs[ei];
      TrialResult& res = report.environments[ei].trials[static_cast<std::size_t>(trial)];
      res.trial = trial;
      res.seed = trial_seed(seed, ne.id, trial);
      TrialRecord record;
      try {
        auto p = make_planner(planner, config, safety);
        record = run_trial(ne.env, *p, config.robot, config.lidar, limits, res.seed);
      } catch (const std::exception& ex) {
        record.outcome = TrialOutcome::error;
        record.actual_time = 0.0;
        record.diagnostic = ex.what();
      }
      res.outcome = record.outcome;
      res.actual_time = record.actual_time;
      res.diagnostic = record.diagnostic;
      res.score = trial_score(record.success(), record.actual_time, ne.env.optimal_time);
      if (observer) {
        std::lock_guard<std::mutex> lock(observer_mutex);
        observer(ne, res, record);
      }
    }
  };
  int workers = config.harness.workers > 0
                    ? config.harness.workers
                    : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), total));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  double sum = 0.0;
  std::size_t successes = 0;
  for (const auto& e : report.environments) {
    for (const auto& t : e.trials) {
      sum += t.score;
      successes += t.success() ? 1 : 0;
    }
  }
  report.mean_score = sum / static_cast<double>(total);
  report.success_rate = static_cast<double>(successes) / static_cast<double>(total);
  return report;
}

inline TrialOutcome outcome_from_string(const std::string& s) {
  for (auto o : {TrialOutcome::success, TrialOutcome::collision, TrialOutcome::timeout,
                 TrialOutcome::error}) {
    if (s == to_string(o)) return o;
  }
  throw FormatError("unknown outcome '" + s + "'");
}

/// Report content that is a function of the inputs only (no timestamp).
inline nlohmann::json report_body(const ScoreReport& r) {
  nlohmann::json envs = nlohmann::json::array();
  for (const auto& e : r.environments) {
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : e.trials) {
      nlohmann::json jt = {{"trial", t.trial},
                           {"seed", t.seed},
                           {"outcome", to_string(t.outcome)},
                           {"success", t.success()},
                           {"actual_time", t.actual_time},
                           {"score", t.score}};
      if (!t.diagnostic.empty()) jt["diagnostic"] = t.diagnostic;
      trials.push_back(std::move(jt));
    }
    envs.push_back({{"id", e.id},
                    {"optimal_time", e.optimal_time},
                    {"path_length", e.path_length},
                    {"trials", std::move(trials)}});
  }
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.config_hash));
  return {{"planner", r.planner},
          {"safety", r.safety},
          {"seed", r.seed},
          {"trials_per_env", r.trials_per_env},
          {"config_hash", hash},
          {"goal_tolerance", r.goal_tolerance},
          {"path_clearance", r.path_clearance},
          {"environments", std::move(envs)},
          {"aggregate",
           {{"mean_score", r.mean_score},
            {"success_rate", r.success_rate},
            {"trials", r.trial_count()}}}};
}

inline nlohmann::json report_to_json(const ScoreReport& r) {
  nlohmann::json j = report_body(r);
  j["created"] = r.created;
  return j;
}

inline ScoreReport report_from_json(const nlohmann::json& j) {
  try {
    ScoreReport r;
    r.planner = j.at("planner").get<std::string>();
    r.safety = j.at("safety").get<bool>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.trials_per_env = j.at("trials_per_env").get<int>();
    r.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    r.goal_tolerance = j.at("goal_tolerance").get<double>();
    r.path_clearance = j.at("path_clearance").get<double>();
    for (const auto& je : j.at("environments")) {
      EnvironmentResult e;
      e.id = je.at("id").get<std::string>();
      e.optimal_time = je.at("optimal_time").get<double>();
      e.path_length = je.at("path_length").get<double>();
      for (const auto& jt : je.at("trials")) {
        TrialResult t;
        t.trial = jt.at("trial").get<int>();
        t.seed = jt.at("seed").get<std::uint64_t>();
        t.outcome = outcome_from_string(jt.at("outcome").get<std::string>());
        t.actual_time = jt.at("actual_time").get<double>();
        t.score = jt.at("score").get<double>();
        t.diagnostic = jt.value("diagnostic", "");
        e.trials.push_back(std::move(t));
      }
      r.environments.push_back(std::move(e));
    }
    r.mean_score = j.at("aggregate").at("mean_score").get<double>();
    r.success_rate = j.at("aggregate").at("success_rate").get<double>();
    r.created = j.value("created", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw FormatError("malformed report: bad config_hash");
  }
}

inline void save_report(const ScoreReport& r, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw FormatError("cannot write " + file.string());
  out << report_to_json(r).dump(2) << '\n';
}

inline ScoreReport load_report(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot read " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("report " + file.string() + ": " + e.what());
  }
  return report_from_json(j);
}

/// One row per trial.
inline std::string report_csv(const ScoreReport& r) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "planner,env,optimal_time,trial,outcome,actual_time,score\n";
  for (const auto& e : r.environments) {
    for (const auto& t : e.trials) {
      out << r.planner << ',' << e.id << ',' << e.optimal_time << ',' << t.trial << ','
          << to_string(t.outcome) << ',' << t.actual_time << ',' << t.score << '\n';
    }
  }
  return out.str();
}

/// Human-readable per-environment summary.
inline std::string report_table(const ScoreReport& r) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %10s %10s\n", "env", "OT[s]", "success",
                "mean AT", "mean score");
  out << line;
  for (const auto& e : r.environments) {
    int ok = 0;
    double at = 0.0, score = 0.0;
    for (const auto& t : e.trials) {
      ok += t.success() ? 1 : 0;
      at += t.actual_time;
      score += t.score;
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, e.trials.size()));
    std::snprintf(line, sizeof line, "%-16s %8.3f %5d/%-2zu %10.3f %10.4f\n", e.id.c_str(),
                  e.optimal_time, ok, e.trials.size(), at / n, score / n);
    out << line;
  }
  std::snprintf(line, sizeof line, "planner %s%s: %zu trials, success %.1f%%, mean score %.4f\n",
                r.planner.c_str(), r.safety ? " +safety" : "", r.trial_count(),
                100.0 * r.success_rate, r.mean_score);
  out << line;
  return out.str();
}

// ---------------------------------------------------------------------------
// Trajectory logs: one JSON object per control tick, then a summary line
// carrying "outcome".

inline void write_trajectory_log(const TrialRecord& record, std::ostream& out) {
  for (const auto& s : record.trajectory) {
    nlohmann::json j = {{"t", s.t},         {"x", s.pose.x},        {"y", s.pose.y},
                        {"theta", s.pose.theta}, {"v", s.cmd.v},   {"omega", s.cmd.omega},
                        {"mode", s.mode},   {"reversing", s.reversing}};
    if (s.nearest_obstacle) j["nearest_d"] = *s.nearest_obstacle;
    out << j.dump() << '\n';
  }
  nlohmann::json summary = {{"outcome", to_string(record.outcome)},
                            {"actual_time", record.actual_time}};
  if (record.collision_pose) {
    summary["collision"] = {{"x", record.collision_pose->x},
                            {"y", record.collision_pose->y},
                            {"theta", record.collision_pose->theta}};
  }
  if (!record.diagnostic.empty()) summary["diagnostic"] = record.diagnostic;
  out << summary.dump() << '\n';
}

inline TrialRecord read_trajectory_log(std::istream& in) {
  TrialRecord record;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      if (j.contains("outcome")) {
        record.outcome = outcome_from_string(j.at("outcome").get<std::string>());
        record.actual_time = j.value("actual_time", 0.0);
        if (j.contains("collision")) {
          const auto& c = j.at("collision");
          record.collision_pose =
              Pose2{c.at("x").get<double>(), c.at("y").get<double>(), c.at("theta").get<double>()};
        }
        record.diagnostic = j.value("diagnostic", "");
        continue;
      }
      TrajectorySample s;
      s.t = j.at("t").get<double>();
      s.pose = {j.at("x").get<double>(), j.at("y").get<double>(), j.at("theta").get<double>()};
      s.cmd = {j.value("v", 0.0), j.value("omega", 0.0)};
      s.mode = j.value("mode", "");
      s.reversing = j.value("reversing", false);
      if (j.contains("nearest_d")) s.nearest_obstacle = j.at("nearest_d").get<double>();
      record.trajectory.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("trajectory log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return record;
}

inline void save_trajectory_log(const TrialRecord& record, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw FormatError("cannot write " + file.string());
  write_trajectory_log(record, out);
}

inline TrialRecord load_trajectory_log(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot read " + file.string());
  return read_trajectory_log(in);
}

// ---------------------------------------------------------------------------
// SVG rendering. Drawing happens in world metres inside a group that flips y,
// so every coordinate written for the trajectory equals the logged pose.

struct RenderOptions {
  double pixels_per_meter{100.0};
  /// Shade free cells closer than this to an obstacle; zero disables.
  double inflation_radius{0.0};
  const GlobalPath* global_path{nullptr};
  double goal_tolerance{0.3};
  Footprint footprint{};
};

inline std::string mode_color(const std::string& mode) {
  if (mode.rfind("Safe", 0) == 0 || mode.rfind("forward", 0) == 0) return "#1f77b4";
  if (mode.rfind("ObstaclePresent", 0) == 0) return "#ff7f0e";
  if (mode.rfind("CloseObstacle", 0) == 0) return "#d62728";
  if (mode.rfind("backward", 0) == 0) return "#9467bd";
  if (mode.rfind("rotate", 0) == 0) return "#8c564b";
  return "#2ca02c";
}

inline std::string render_trial(const EnvironmentSpec& env, const TrialRecord& record,
                                const RenderOptions& opt = {}) {
  const OccupancyGrid& g = env.grid;
  const Vec2 ext{g.width * g.resolution, g.height * g.resolution};
  const double s = opt.pixels_per_meter;
  std::ostringstream out;
  out << std::setprecision(17);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << ext.x * s << "\" height=\""
      << ext.y * s << "\" viewBox=\"0 0 " << ext.x * s << ' ' << ext.y * s << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<g id=\"world\" transform=\"translate(0," << ext.y * s << ") scale(" << s << ',' << -s
      << ") translate(" << -g.origin.x << ',' << -g.origin.y << ")\">\n";

  if (opt.inflation_radius > 0.0) {
    const DistanceField f = distance_field(g);
    out << "<g id=\"inflation\" fill=\"#f3d9a4\">\n";
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        if (g.occupied(c, r) || f.at(c, r) >= opt.inflation_radius) continue;
        out << "<rect x=\"" << g.origin.x + c * g.resolution << "\" y=\""
            << g.origin.y + r * g.resolution << "\" width=\"" << g.resolution << "\" height=\""
            << g.resolution << "\"/>\n";
      }
    }
    out << "</g>\n";
  }

  // Occupied cells merged into horizontal runs.
  out << "<g id=\"obstacles\" fill=\"#333333\">\n";
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width;) {
      if (!g.occupied(c, r)) {
        ++c;
        continue;
      }
      int end = c;
      while (end < g.width && g.occupied(end, r)) ++end;
      out << "<rect x=\"" << g.origin.x + c * g.resolution << "\" y=\""
          << g.origin.y + r * g.resolution << "\" width=\"" << (end - c) * g.resolution
          << "\" height=\"" << g.resolution << "\"/>\n";
      c = end;
    }
  }
  out << "</g>\n";

  out << "<circle id=\"goal\" cx=\"" << env.goal.x << "\" cy=\"" << env.goal.y << "\" r=\""
      << opt.goal_tolerance << "\" fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"0.02\"/>\n";
  out << "<circle id=\"start\" cx=\"" << env.start.x << "\" cy=\"" << env.start.y
      << "\" r=\"0.05\" fill=\"#1f77b4\"/>\n";

  if (opt.global_path != nullptr && !opt.global_path->empty()) {
    out << "<polyline id=\"global-path\" fill=\"none\" stroke=\"#7f7f7f\" stroke-width=\"0.02\" "
           "stroke-dasharray=\"0.05 0.05\" points=\"";
    for (const auto& p : opt.global_path->waypoints) out << p.x << ',' << p.y << ' ';
    out << "\"/>\n";
  }

  const auto& traj = record.trajectory;
  if (!traj.empty()) {
    out << "<g id=\"trajectory\" fill=\"none\" stroke-width=\"0.03\">\n";
    std::size_t i = 0;
    while (i + 1 < traj.size()) {
      std::size_t j = i + 1;
      while (j + 1 < traj.size() && traj[j].mode == traj[i].mode) ++j;
      out << "<polyline class=\"segment\" data-mode=\"" << traj[i].mode << "\" stroke=\""
          << mode_color(traj[i].mode) << "\" points=\"";
      for (std::size_t k = i; k <= j; ++k) out << traj[k].pose.x << ',' << traj[k].pose.y << ' ';
      out << "\"/>\n";
      i = j;
    }
    out << "</g>\n";
    const Pose2& last = traj.back().pose;
    out << "<circle id=\"final-pose\" cx=\"" << last.x << "\" cy=\"" << last.y
        << "\" r=\"0.04\" fill=\"#000000\"/>\n";
  }

  if (record.collision_pose) {
    const Pose2& c = *record.collision_pose;
    out << "<polygon id=\"collision-footprint\" fill=\"none\" stroke=\"#d62728\" "
           "stroke-width=\"0.02\" points=\"";
    for (const auto& p : opt.footprint.corners(c)) out << p.x << ',' << p.y << ' ';
    out << "\"/>\n";
    out << "<circle id=\"collision\" cx=\"" << c.x << "\" cy=\"" << c.y
        << "\" r=\"0.06\" fill=\"#d62728\"/>\n";
  }
  out << "</g>\n</svg>\n";
  return out.str();
}

}  // namespace barn
