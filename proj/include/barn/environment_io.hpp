#pragma once

// JSON persistence for generated courses. Cells are run-length encoded as
// [value, count] pairs over the row-major raster.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "barn/grid_world.hpp"
#include "json.hpp"

namespace barn {

inline nlohmann::json encode_cells(const OccupancyGrid& grid) {
  nlohmann::json runs = nlohmann::json::array();
  std::size_t i = 0;
  while (i < grid.cells.size()) {
    std::size_t j = i;
    while (j < grid.cells.size() && grid.cells[j] == grid.cells[i]) ++j;
    runs.push_back({static_cast<int>(grid.cells[i]), j - i});
    i = j;
  }
  return runs;
}

inline nlohmann::json environment_to_json(const EnvironmentSpec& env) {
  const auto& g = env.grid;
  return {{"resolution", g.resolution},
          {"width", g.width},
          {"height", g.height},
          {"origin", {g.origin.x, g.origin.y}},
          {"cells", encode_cells(g)},
          {"start", {env.start.x, env.start.y, env.start.theta}},
          {"goal", {env.goal.x, env.goal.y}},
          {"path_length", env.path_length},
          {"optimal_time", env.optimal_time},
          {"seed", env.seed}};
}

inline EnvironmentSpec environment_from_json(const nlohmann::json& j) {
  try {
    EnvironmentSpec env;
    auto& g = env.grid;
    g = OccupancyGrid(j.at("width").get<int>(), j.at("height").get<int>(),
                      j.at("resolution").get<double>());
    if (j.contains("origin")) g.origin = {j["origin"][0].get<double>(), j["origin"][1].get<double>()};
    std::size_t pos = 0;
    for (const auto& run : j.at("cells")) {
      const int value = run.at(0).get<int>();
      const auto count = run.at(1).get<std::size_t>();
      if ((value != 0 && value != 1) || pos + count > g.cells.size()) {
        throw FormatError("invalid cell run");
      }
      std::fill_n(g.cells.begin() + static_cast<std::ptrdiff_t>(pos), count,
                  static_cast<std::uint8_t>(value));
      pos += count;
    }
    if (pos != g.cells.size()) throw FormatError("cell runs do not cover the grid");
    const auto& s = j.at("start");
    env.start = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
    env.goal = {j.at("goal").at(0).get<double>(), j.at("goal").at(1).get<double>()};
    env.path_length = j.at("path_length").get<double>();
    env.optimal_time = j.at("optimal_time").get<double>();
    env.seed = j.value("seed", std::uint64_t{0});
    return env;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed environment: ") + e.what());
  }
}

inline void save_environment(const EnvironmentSpec& env, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw FormatError("cannot write " + file.string());
  out << environment_to_json(env).dump() << '\n';
}

inline EnvironmentSpec load_environment(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot read " + file.string());
  try {
    return environment_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

}  // namespace barn
