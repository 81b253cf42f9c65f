#pragma once

#include "spatialgen/camera.hpp"
#include "spatialgen/layout.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace spatialgen {

enum class TrajectoryPattern { Forward, InwardOrbit, OutwardOrbit, RandomWalk };
const char* to_string(TrajectoryPattern p);
TrajectoryPattern parse_pattern(std::string_view name);

struct Trajectory {
    TrajectoryPattern pattern = TrajectoryPattern::Forward;
    std::vector<CameraView> views;
};

struct TrajectoryParams {
    int count = 8;
    double spacing = 0.5;        // meters between forward / random-walk views
    double clearance = 0.3;      // meters from walls and box footprints
    std::uint64_t seed = 0;
    double fov = kPi / 2;        // horizontal
    int width = 64;
    int height = 64;
    double camera_height = 1.2;  // above the room floor
    int room = 0;
    int max_attempts = 4000;
};

// Position is inside the room polygon and at least `clearance` away from
// every wall edge and every box footprint.
bool position_clear(const SceneLayout& layout, int room, const Vec2& p, double clearance);

// Throws PlacementFailure (naming the pattern) when no valid placement is
// found within the attempt budget.
Trajectory gen_trajectory(const SceneLayout& layout, TrajectoryPattern pattern, const TrajectoryParams& params);

// {pattern, views:[{fx,fy,cx,cy,width,height, rotation:[9] row-major, translation:[3]}]}
std::string save_trajectory(const Trajectory& t, int indent = 2);
Trajectory load_trajectory(std::string_view document);

}  // namespace spatialgen
