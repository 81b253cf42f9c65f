#include "spatialgen/camera.hpp"

#include <cmath>

namespace spatialgen {

void Intrinsics::validate() const {
    if (!(fx > 0 && fy > 0)) throw Error(ErrorKind::InvalidInput, "focal lengths must be positive", "intrinsics");
    if (width <= 0 || height <= 0) throw Error(ErrorKind::InvalidInput, "image size must be positive", "intrinsics");
    if (!(cx > 0 && cx < width && cy > 0 && cy < height)) {
        throw Error(ErrorKind::InvalidInput, "principal point outside the image", "intrinsics");
    }
}

Intrinsics Intrinsics::from_fov(double fov, int width, int height) {
    if (!(fov > 0 && fov < kPi)) throw Error(ErrorKind::InvalidInput, "fov must be in (0, pi)", "fov");
    Intrinsics k;
    k.width = width;
    k.height = height;
    k.fx = 0.5 * width / std::tan(0.5 * fov);
    k.fy = k.fx;
    k.cx = 0.5 * width;
    k.cy = 0.5 * height;
    k.validate();
    return k;
}

void Pose::validate() const {
    if (!rotation.allFinite() || !translation.allFinite()) {
        throw Error(ErrorKind::InvalidInput, "pose has non-finite entries", "pose");
    }
    if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
        throw Error(ErrorKind::InvalidInput, "rotation is not orthonormal", "pose.rotation");
    }
    if (rotation.determinant() < 0) throw Error(ErrorKind::InvalidInput, "rotation has determinant -1", "pose.rotation");
}

Pose Pose::from_yaw_pitch(const Vec3& position, double yaw, double pitch) {
    const Vec3 f(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch));
    // Right vector stays horizontal; pitch never reaches +-pi/2 for our cameras.
    const Vec3 r(std::sin(yaw), -std::cos(yaw), 0.0);
    const Vec3 d = f.cross(r);
    Pose p;
    p.rotation.col(0) = r;
    p.rotation.col(1) = d;
    p.rotation.col(2) = f;
    p.translation = position;
    return p;
}

Pose Pose::look_at(const Vec3& position, const Vec3& target) {
    const Vec3 dir = target - position;
    const double horiz = std::hypot(dir.x(), dir.y());
    return from_yaw_pitch(position, std::atan2(dir.y(), dir.x()), std::atan2(dir.z(), horiz));
}

double Pose::yaw() const {
    const Vec3 f = forward();
    return std::atan2(f.y(), f.x());
}

Vec3 unproject(const CameraView& view, const Vec2& pixel, double depth) {
    if (!(depth > 0) || !std::isfinite(depth)) {
        throw Error(ErrorKind::InvalidInput, "depth must be positive", "depth");
    }
    if (pixel.x() < -0.5 || pixel.y() < -0.5 || pixel.x() > view.width() - 0.5 || pixel.y() > view.height() - 0.5) {
        throw Error(ErrorKind::InvalidInput, "pixel outside the image", "pixel");
    }
    const Vec3 p_cam = depth * view.camera_ray(pixel.x() + 0.5, pixel.y() + 0.5);
    return view.pose.to_world(p_cam);
}

std::optional<Projection> project(const CameraView& view, const Vec3& world) {
    const Vec3 p = view.pose.to_camera(world);
    if (!(p.z() > 0)) return std::nullopt;
    const auto& k = view.intrinsics;
    const double u = k.fx * p.x() / p.z() + k.cx - 0.5;
    const double v = k.fy * p.y() / p.z() + k.cy - 0.5;
    return Projection{Vec2(u, v), p.z()};
}

Image<double> plucker_map(const CameraView& view) {
    view.validate();
    Image<double> out(view.width(), view.height(), 6);
    const Vec3 o = view.pose.translation;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < view.height(); ++y) {
        for (int x = 0; x < view.width(); ++x) {
            const Vec3 d = (view.pose.rotation * view.pixel_ray(x, y)).normalized();
            const Vec3 m = o.cross(d);
            auto px = out.pixel(x, y);
            for (int c = 0; c < 3; ++c) {
                px[c] = d[c];
                px[3 + c] = m[c];
            }
        }
    }
    return out;
}

}  // namespace spatialgen
