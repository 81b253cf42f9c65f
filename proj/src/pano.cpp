#include "spatialgen/pano.hpp"

#include <algorithm>
#include <cmath>

namespace spatialgen {

Vec3 equirect_direction(double x, double y, int width, int height) {
    const double lon = x / width * 2.0 * kPi - kPi;
    const double lat = 0.5 * kPi - y / height * kPi;
    return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

Vec2 equirect_coords(const Vec3& d, int width, int height) {
    const double lon = std::atan2(d.y(), d.x());
    const double lat = std::asin(std::clamp(d.z() / d.norm(), -1.0, 1.0));
    return {(lon + kPi) / (2.0 * kPi) * width, (0.5 * kPi - lat) / kPi * height};
}

void sample_equirect(const Image<float>& img, double x, double y, std::span<float> out) {
    const int w = img.width;
    const int h = img.height;
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const double ax = x - fx;
    const double ay = y - fy;
    const int x0 = ((static_cast<int>(fx) % w) + w) % w;
    const int x1 = (x0 + 1) % w;
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    for (int c = 0; c < img.channels; ++c) {
        const double top = (1 - ax) * img.at(x0, y0, c) + ax * img.at(x1, y0, c);
        const double bot = (1 - ax) * img.at(x0, y1, c) + ax * img.at(x1, y1, c);
        out[static_cast<std::size_t>(c)] = static_cast<float>((1 - ay) * top + ay * bot);
    }
}

CameraView persp_camera(double yaw, double pitch, double fov, int out_size) {
    CameraView v;
    v.intrinsics = Intrinsics::from_fov(fov, out_size, out_size);
    v.pose = Pose::from_yaw_pitch(Vec3::Zero(), yaw, pitch);
    return v;
}

Image<float> pano_to_persp(const Image<float>& equirect, double yaw, double pitch, double fov, int out_size) {
    if (equirect.height <= 0 || equirect.width != 2 * equirect.height) {
        throw Error(ErrorKind::InvalidInput, "equirect width must be twice its height", "equirect");
    }
    if (!(fov > 0 && fov < kPi)) throw Error(ErrorKind::InvalidInput, "fov must be in (0, pi)", "fov");
    if (out_size <= 0) throw Error(ErrorKind::InvalidInput, "out_size must be positive", "out_size");
    const CameraView cam = persp_camera(yaw, pitch, fov, out_size);
    Image<float> out(out_size, out_size, equirect.channels);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < out_size; ++y) {
        for (int x = 0; x < out_size; ++x) {
            const Vec3 d = cam.pose.rotation * cam.pixel_ray(x, y);
            const Vec2 e = equirect_coords(d, equirect.width, equirect.height);
            sample_equirect(equirect, e.x(), e.y(), out.pixel(x, y));
        }
    }
    return out;
}

}  // namespace spatialgen
