#pragma once

// Benchmark configuration: every tunable grouped by section and mapped to a
// JSON document. Unknown keys are rejected so typos surface as errors.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "barn/common.hpp"
#include "barn/global_planner.hpp"
#include "barn/grid_world.hpp"
#include "barn/mpc_planner.hpp"
#include "barn/safety_layer.hpp"
#include "barn/sampling_planner.hpp"
#include "barn/simulator.hpp"
#include "json.hpp"

namespace barn {

struct HarnessParams {
  int trials_per_env{10};
  double timeout{100.0};
  double goal_tolerance{0.3};
  /// Worker threads; zero picks the hardware concurrency.
  int workers{0};
};

struct BenchmarkConfig {
  RobotParams robot;
  LidarParams lidar;
  GeneratorParams generator;
  GlobalPlannerParams global_planner;
  SafetyParams safety;
  bool safety_enabled{false};
  MpcParams mpc;
  SamplingParams dwa;
  HarnessParams harness;
};

// Field lists shared by reading and writing.

template <typename V>
void visit_fields(V& v, RobotParams& p) {
  v("footprint_length", p.footprint.length);
  v("footprint_width", p.footprint.width);
  v("wheel_separation", p.wheel_separation);
  v("max_speed", p.max_speed);
  v("max_wheel_accel", p.max_wheel_accel);
  v("control_period", p.control_period);
  v("sim_substep", p.sim_substep);
}

template <typename V>
void visit_fields(V& v, LidarParams& p) {
  v("num_beams", p.num_beams);
  v("field_of_view", p.field_of_view);
  v("max_range", p.max_range);
  v("noise_sigma", p.noise_sigma);
}

template <typename V>
void visit_fields(V& v, GeneratorParams& p) {
  v("fill_probability", p.fill_probability);
  v("smoothing_iterations", p.smoothing_iterations);
  v("birth_threshold", p.birth_threshold);
  v("survival_threshold", p.survival_threshold);
  v("world_size", p.world_size);
  v("resolution", p.resolution);
  v("corridor_clearance", p.corridor_clearance);
  v("path_clearance", p.path_clearance);
  v("max_speed", p.max_speed);
  v("start_margin", p.start_margin);
  v("goal_margin", p.goal_margin);
  v("clearing_radius", p.clearing_radius);
  v("max_attempts", p.max_attempts);
}

template <typename V>
void visit_fields(V& v, GlobalPlannerParams& p) {
  v("r_min", p.inflation.r_min);
  v("r_max", p.inflation.r_max);
  v("v_max", p.inflation.v_max);
  v("soft_weight", p.soft_weight);
  v("soft_radius", p.soft_radius);
  v("lookahead", p.lookahead);
  v("replan_period", p.replan_period);
  v("backoff_halvings", p.backoff_halvings);
  v("sensed_only_costmap", p.sensed_only_costmap);
  v("snap_distance", p.snap_distance);
}

template <typename V>
void visit_fields(V& v, SafetyParams& p) {
  v("margin", p.margin);
  v("horizon", p.horizon);
  v("arc_step", p.arc_step);
  v("backup_speed", p.backup_speed);
  v("rotate_speed", p.rotate_speed);
  v("blind_spot_extra", p.blind_spot_extra);
}

template <typename V>
void visit_fields(V& v, MpcParams& p) {
  v("horizon", p.horizon);
  v("dt", p.dt);
  v("w_v", p.w_v);
  v("w_x", p.w_x);
  v("w_a", p.w_a);
  v("w_obs", p.w_obs);
  v("w_heading", p.w_heading);
  v("d_obs", p.d_obs);
  v("max_wheel_speed", p.max_wheel_speed);
  v("max_wheel_accel", p.max_wheel_accel);
  v("max_iterations", p.max_iterations);
  v("tolerance", p.tolerance);
  v("v_ref_safe", p.v_ref_safe);
  v("v_ref_obstacle", p.v_ref_obstacle);
  v("v_ref_close", p.v_ref_close);
  v("close_obs_factor", p.close_obs_factor);
  v("safe_distance", p.safe_distance);
  v("close_distance", p.close_distance);
  v("hysteresis", p.hysteresis);
  v("lidar_stride", p.lidar_stride);
  v("blind_spot_extra", p.blind_spot_extra);
}

template <typename V>
void visit_fields(V& v, SamplingParams& p) {
  v("curvature_samples", p.curvature_samples);
  v("max_curvature", p.max_curvature);
  v("max_speed", p.max_speed);
  v("speed_fractions", p.speed_fractions);
  v("duration", p.duration);
  v("backward_duration", p.backward_duration);
  v("backward_speeds", p.backward_speeds);
  v("backward_guard", p.backward_guard);
  v("margin", p.margin);
  v("max_segment", p.max_segment);
  v("lookahead", p.lookahead);
  v("align_angle", p.align_angle);
  v("rotate_speed", p.rotate_speed);
  v("blind_spot_extra", p.blind_spot_extra);
}

template <typename V>
void visit_fields(V& v, HarnessParams& p) {
  v("trials_per_env", p.trials_per_env);
  v("timeout", p.timeout);
  v("goal_tolerance", p.goal_tolerance);
  v("workers", p.workers);
}

namespace detail {

class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw FormatError("config section '" + section_ + "' must be an object");
  }

  template <typename T>
  void operator()(const char* key, T& field) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw FormatError("config key '" + section_ + "." + key + "' has the wrong type");
    }
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!known_.count(item.key())) {
        throw FormatError("unknown config key '" + section_ + "." + item.key() + "'");
      }
    }
  }

 private:
  const nlohmann::json& j_;
  std::string section_;
  std::set<std::string> known_;
};

class FieldWriter {
 public:
  template <typename T>
  void operator()(const char* key, T& field) {
    j[key] = field;
  }
  nlohmann::json j = nlohmann::json::object();
};

template <typename P>
void read_section(const nlohmann::json& root, const char* name, P& params) {
  if (!root.contains(name)) return;
  FieldReader r(root.at(name), name);
  visit_fields(r, params);
  r.finish();
}

template <typename P>
nlohmann::json write_section(P params) {
  FieldWriter w;
  visit_fields(w, params);
  return w.j;
}

}  // namespace detail

inline BenchmarkConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  static const std::set<std::string> sections = {"robot",  "lidar", "generator", "global_planner",
                                                 "safety", "mpc",   "dwa",       "harness"};
  for (const auto& item : j.items()) {
    if (!sections.count(item.key())) throw FormatError("unknown config section '" + item.key() + "'");
  }
  BenchmarkConfig c;
  detail::read_section(j, "robot", c.robot);
  detail::read_section(j, "lidar", c.lidar);
  detail::read_section(j, "generator", c.generator);
  detail::read_section(j, "global_planner", c.global_planner);
  if (j.contains("safety")) {
    nlohmann::json s = j.at("safety");
    if (s.is_object() && s.contains("enabled")) {
      try {
        c.safety_enabled = s.at("enabled").get<bool>();
      } catch (const nlohmann::json::exception&) {
        throw FormatError("config key 'safety.enabled' has the wrong type");
      }
      s.erase("enabled");
    }
    detail::read_section(nlohmann::json{{"safety", s}}, "safety", c.safety);
  }
  detail::read_section(j, "mpc", c.mpc);
  detail::read_section(j, "dwa", c.dwa);
  detail::read_section(j, "harness", c.harness);
  return c;
}

inline nlohmann::json config_to_json(const BenchmarkConfig& c) {
  nlohmann::json safety = detail::write_section(c.safety);
  safety["enabled"] = c.safety_enabled;
  return {{"robot", detail::write_section(c.robot)},
          {"lidar", detail::write_section(c.lidar)},
          {"generator", detail::write_section(c.generator)},
          {"global_planner", detail::write_section(c.global_planner)},
          {"safety", safety},
          {"mpc", detail::write_section(c.mpc)},
          {"dwa", detail::write_section(c.dwa)},
          {"harness", detail::write_section(c.harness)}};
}

/// Checks the cross-field constraints of every section.
inline void validate(const BenchmarkConfig& c) {
  if (!(c.robot.max_speed > 0.0) || !(c.robot.wheel_separation > 0.0) ||
      !(c.robot.control_period > 0.0) || !(c.robot.sim_substep > 0.0)) {
    throw FormatError("robot speeds, separation and periods must be positive");
  }
  if (c.lidar.num_beams < 1 || !(c.lidar.max_range > 0.0)) {
    throw FormatError("lidar needs at least one beam and a positive range");
  }
  if (c.harness.trials_per_env < 1 || !(c.harness.timeout > 0.0) ||
      !(c.harness.goal_tolerance > 0.0)) {
    throw FormatError("harness trials, timeout and goal tolerance must be positive");
  }
  if (!(c.safety.horizon > 0.0)) throw FormatError("safety horizon must be positive");
  try {
    c.generator.validate();
    c.global_planner.inflation.validate();
    c.mpc.validate();
    c.dwa.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
}

inline BenchmarkConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot read config " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config " + file.string() + ": " + e.what());
  }
  BenchmarkConfig c = config_from_json(j);
  validate(c);
  return c;
}

/// FNV-1a of the canonical (key-sorted) JSON form.
inline std::uint64_t config_hash(const BenchmarkConfig& c) {
  return fnv1a(config_to_json(c).dump());
}

}  // namespace barn
