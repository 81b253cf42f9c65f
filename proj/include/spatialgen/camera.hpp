#pragma once

#include "spatialgen/common.hpp"

#include <optional>

namespace spatialgen {

// Pinhole intrinsics in pixels. Pixel (i, j) has its center at (i + 0.5, j + 0.5)
// in the continuous image plane that K maps to.
struct Intrinsics {
    double fx = 1, fy = 1, cx = 0.5, cy = 0.5;
    int width = 1, height = 1;

    void validate() const;
    // Square pixels, horizontal field of view `fov` (radians), principal point at the image center.
    static Intrinsics from_fov(double fov, int width, int height);
};

// Camera-to-world rigid transform. Camera axes follow the usual vision
// convention: +x right, +y down, +z forward.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    void validate() const;
    Vec3 to_world(const Vec3& p_cam) const { return rotation * p_cam + translation; }
    Vec3 to_camera(const Vec3& p_world) const { return rotation.transpose() * (p_world - translation); }
    Vec3 forward() const { return rotation.col(2); }

    // World is +Z up. `yaw` is counterclockwise from +X, `pitch` positive upward.
    static Pose from_yaw_pitch(const Vec3& position, double yaw, double pitch = 0.0);
    static Pose look_at(const Vec3& position, const Vec3& target);
    double yaw() const;
};

struct CameraView {
    Intrinsics intrinsics;
    Pose pose;

    void validate() const {
        intrinsics.validate();
        pose.validate();
    }
    int width() const { return intrinsics.width; }
    int height() const { return intrinsics.height; }

    // Camera-frame direction (z = 1) through continuous image point (u, v).
    Vec3 camera_ray(double u, double v) const {
        return {(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0};
    }
    // Same for the center of pixel (x, y).
    Vec3 pixel_ray(int x, int y) const { return camera_ray(x + 0.5, y + 0.5); }
};

// Pixel coordinates use the integer-index convention: pixel (x, y) <-> value (x, y).
// depth is camera-frame z, not ray length. Throws InvalidInput on depth <= 0
// or an out-of-bounds pixel.
Vec3 unproject(const CameraView& view, const Vec2& pixel, double depth);

struct Projection {
    Vec2 pixel;   // integer-index convention, see unproject
    double depth; // camera-frame z
};
// Empty when the point is at or behind the camera plane.
std::optional<Projection> project(const CameraView& view, const Vec3& world);

// H x W x 6: unit world ray direction d, then moment m = o x d.
Image<double> plucker_map(const CameraView& view);

}  // namespace spatialgen
