#pragma once

#include "spatialgen/view_maps.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace spatialgen {

struct Light {
    Vec3 direction = Vec3(0.3, 0.5, 0.81).normalized();  // toward the light
    double intensity = 1.0;
    double ambient = 0.3;
    double diffuse = 0.7;
};

struct SynthScene {
    SceneLayout layout;
    Light light;
};

enum class Difficulty { Empty, Sparse, Cluttered };
const char* to_string(Difficulty d);
Difficulty parse_difficulty(std::string_view name);

// Boxes keep out of a disk of this radius around the room center so every
// scene admits orbit and random-walk trajectories.
inline constexpr double kWalkwayRadius = 0.9;

// Rectangular room 3-6 m per side centered on the origin, with a door and a
// window; 0 / 3-5 / 8-15 floor-standing boxes with non-overlapping footprints
// and edges in [0.1, 1.8] m. Seed-deterministic.
SynthScene gen_scene(std::uint64_t seed, Difficulty difficulty);
// Same draws with a square room of the given side in meters, in [3, 10].
SynthScene gen_scene(std::uint64_t seed, Difficulty difficulty, double room_side);

// Ray-cast ground truth: analytic slab / plane intersections per pixel,
// Lambertian shading albedo * intensity * (ambient + diffuse * max(0, n.L))
// with n facing the viewer. Confidence is filled with 2 (raw logit 0).
ViewMaps render_gt(const SynthScene& scene, const CameraView& view, Exec exec = Exec::Parallel);

// Equirectangular color rendering from `position`; width = 2 * height.
ColorImage render_panorama(const SynthScene& scene, const Vec3& position, int height);

// Layout-JSON plus a "lighting" block.
std::string save_scene(const SynthScene& scene, int indent = 2);
SynthScene load_scene(std::string_view document);

}  // namespace spatialgen
