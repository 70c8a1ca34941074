#pragma once

#include "barn/common.hpp"
#include "barn/config.hpp"
#include "barn/environment_io.hpp"
#include "barn/geometry.hpp"
#include "barn/global_planner.hpp"
#include "barn/grid_world.hpp"
#include "barn/harness.hpp"
#include "barn/mpc_planner.hpp"
#include "barn/perception.hpp"
#include "barn/safety_layer.hpp"
#include "barn/sampling_planner.hpp"
#include "barn/simulator.hpp"
