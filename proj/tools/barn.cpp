// Command-line front end: generate courses, run planners over a suite,
// print score tables and render trial figures.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "barn/barn.hpp"

namespace fs = std::filesystem;

namespace {

int cmd_gen(std::uint64_t seed, int count, const fs::path& out_dir, const std::string& config) {
  barn::BenchmarkConfig c = config.empty() ? barn::BenchmarkConfig{} : barn::load_config(config);
  fs::create_directories(out_dir);
  for (const auto& e : barn::generate_suite(seed, count, c.generator)) {
    barn::save_environment(e.env, out_dir / (e.id + ".json"));
  }
  std::printf("wrote %d environments to %s\n", count, out_dir.string().c_str());
  return 0;
}

int cmd_run(const std::string& planner, const fs::path& envs, int trials, std::uint64_t seed,
            const std::string& config, const fs::path& out, const std::string& safety,
            const std::string& logs, const std::string& csv) {
  barn::BenchmarkConfig c = config.empty() ? barn::BenchmarkConfig{} : barn::load_config(config);
  bool use_safety = c.safety_enabled;
  if (safety == "on") use_safety = true;
  if (safety == "off") use_safety = false;
  if (trials <= 0) trials = c.harness.trials_per_env;
  const auto suite = barn::load_environment_dir(envs);
  if (suite.empty()) throw barn::FormatError("no environments in " + envs.string());

  barn::TrialObserver observer;
  if (!logs.empty()) {
    fs::create_directories(logs);
    observer = [&](const barn::NamedEnvironment& e, const barn::TrialResult& t,
                   const barn::TrialRecord& record) {
      barn::save_trajectory_log(record,
                                fs::path(logs) / (e.id + "_" + std::to_string(t.trial) + ".jsonl"));
    };
  }
  const barn::ScoreReport r =
      barn::evaluate_suite(planner, use_safety, suite, trials, seed, c, observer);
  barn::save_report(r, out);
  if (!csv.empty()) {
    std::ofstream f(csv);
    if (!f) throw barn::FormatError("cannot write " + csv);
    f << barn::report_csv(r);
  }
  std::printf("planner %s%s: %zu trials, success %.1f%%, mean score %.4f -> %s\n",
              planner.c_str(), use_safety ? " +safety" : "", r.trial_count(),
              100.0 * r.success_rate, r.mean_score, out.string().c_str());
  return 0;
}

int cmd_score(const fs::path& report) {
  std::fputs(barn::report_table(barn::load_report(report)).c_str(), stdout);
  return 0;
}

int cmd_render(const fs::path& env_file, const fs::path& log, const fs::path& out,
               double inflation, const std::string& config) {
  barn::BenchmarkConfig c = config.empty() ? barn::BenchmarkConfig{} : barn::load_config(config);
  const barn::EnvironmentSpec env = barn::load_environment(env_file);
  const barn::TrialRecord record =
      log.empty() ? barn::TrialRecord{} : barn::load_trajectory_log(log);
  barn::RenderOptions opt;
  opt.inflation_radius = inflation;
  opt.goal_tolerance = c.harness.goal_tolerance;
  opt.footprint = c.robot.footprint;
  std::optional<barn::GlobalPath> path;
  try {
    path = barn::plan_global(env.grid, env.start.position(), env.goal, c.global_planner.inflation.r_min,
                             c.global_planner.soft_weight, c.global_planner.soft_radius);
    opt.global_path = &*path;
  } catch (const barn::NoPathError&) {
  }
  std::ofstream f(out);
  if (!f) throw barn::FormatError("cannot write " + out.string());
  f << barn::render_trial(env, record, opt);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained-space navigation benchmark"};
  app.require_subcommand(1);

  std::string config;
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("gen", "Generate obstacle courses");
  int count = 50;
  std::string gen_out;
  gen->add_option("--seed", seed, "Suite seed")->required();
  gen->add_option("--count", count, "Number of courses")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--config", config, "JSON config file");

  auto* run = app.add_subcommand("run", "Evaluate a planner over a course directory");
  std::string planner = "dwa", envs, out = "report.json", safety = "config", logs, csv;
  int trials = 0;
  run->add_option("--planner", planner, "Planner")
      ->check(CLI::IsMember(barn::planner_names()));
  run->add_option("--envs", envs, "Directory of course JSON files")->required();
  run->add_option("--trials", trials, "Trials per course (default from config)");
  run->add_option("--seed", seed, "Suite seed");
  run->add_option("--config", config, "JSON config file");
  run->add_option("--out", out, "Report JSON path");
  run->add_option("--safety", safety, "Certification layer")
      ->check(CLI::IsMember({"on", "off", "config"}));
  run->add_option("--logs", logs, "Directory for per-trial trajectory logs");
  run->add_option("--csv", csv, "Optional CSV summary path");

  auto* score = app.add_subcommand("score", "Print a report as a table");
  std::string report;
  score->add_option("--report", report, "Report JSON path")->required();

  auto* render = app.add_subcommand("render", "Draw a course and trial as SVG");
  std::string env_file, log, fig = "fig.svg";
  double inflation = 0.0;
  render->add_option("--env", env_file, "Course JSON")->required();
  render->add_option("--trial-log", log, "Trajectory log (JSON lines)");
  render->add_option("--out", fig, "Output SVG");
  render->add_option("--inflation", inflation, "Shade cells within this clearance");
  render->add_option("--config", config, "JSON config file");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen(seed, count, gen_out, config);
    if (*run) return cmd_run(planner, envs, trials, seed, config, out, safety, logs, csv);
    if (*score) return cmd_score(report);
    if (*render) return cmd_render(env_file, log, fig, inflation, config);
  } catch (const barn::FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
