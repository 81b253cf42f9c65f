#pragma once

#include "spatialgen/camera.hpp"
#include "spatialgen/layout.hpp"

#include <filesystem>
#include <string>

namespace spatialgen::testing {

// Axis-aligned rectangular room [x0, x1] x [y0, y1], floor 0.
inline RoomPolygon rect_room(double x0, double y0, double x1, double y1, double ceiling = 2.8) {
    RoomPolygon r;
    r.vertices = {Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)};
    r.floor_z = 0.0;
    r.ceiling_z = ceiling;
    return r;
}

inline SemanticBox make_box(int id, Vec3 center, Vec3 size, double yaw = 0.0,
                            CategoryId cat = category::kFirstObject) {
    SemanticBox b;
    b.id = id;
    b.center = center;
    b.size = size;
    b.yaw = yaw;
    b.category = cat;
    return b;
}

inline CameraView make_view(const Vec3& position, double yaw, double pitch, int size, double fov = kPi / 2) {
    return CameraView{Intrinsics::from_fov(fov, size, size), Pose::from_yaw_pitch(position, yaw, pitch)};
}

// Per-test scratch directory under the system temp dir, recreated empty.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("spatialgen_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace spatialgen::testing
