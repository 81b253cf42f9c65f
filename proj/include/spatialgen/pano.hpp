#pragma once

#include "spatialgen/camera.hpp"

namespace spatialgen {

// Equirectangular convention (width = 2 * height, world +Z up):
//   column x = (lon + pi) / (2 pi) * W,  row y = (pi/2 - lat) / pi * H
// with pixel centers at integer (x, y). Longitude 0 points along +X and
// longitude pi/2 along +Y.
Vec3 equirect_direction(double x, double y, int width, int height);
Vec2 equirect_coords(const Vec3& direction, int width, int height);

// Bilinear sample with horizontal wrap-around and vertical clamping.
void sample_equirect(const Image<float>& equirect, double x, double y, std::span<float> out);

// Perspective crop looking along (yaw, pitch) with horizontal fov, square
// out_size x out_size output. Throws InvalidInput for a malformed aspect or fov.
Image<float> pano_to_persp(const Image<float>& equirect, double yaw, double pitch, double fov, int out_size);

// The camera pano_to_persp renders with, placed at the origin.
CameraView persp_camera(double yaw, double pitch, double fov, int out_size);

}  // namespace spatialgen
