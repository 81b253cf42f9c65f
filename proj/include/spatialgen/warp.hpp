#pragma once

#include "spatialgen/parallel.hpp"
#include "spatialgen/view_maps.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace spatialgen {

struct CloudPoint {
    Vec3 position = Vec3::Zero();
    std::array<float, 3> color{};
    CategoryId semantic = category::kVoid;
    float confidence = 2.0f;  // > 1
    int source_view = 0;
};

struct GlobalPointCloud {
    std::vector<CloudPoint> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    // Throws Invariant on confidence <= 1 or a non-finite position.
    void validate() const;
};

struct WarpedImage {
    ColorImage color;  // (0,0,0) where uncovered
    Mask coverage;
};

inline constexpr double kDefaultSplatRadius = 1.0;
inline constexpr double kSplatDepthTie = 1e-9;
inline constexpr double kDefaultConfidenceTau = 1.5;

// Square splats: a point projecting to (u, v) covers pixel (x, y) when
// |x - u| <= radius and |y - v| <= radius (integer-index pixel coordinates).
// The winner per pixel is the lowest index among points within kSplatDepthTie
// of the nearest covering depth, so the result does not depend on point order
// within equal depths or on the thread count.
WarpedImage splat(const GlobalPointCloud& cloud, const CameraView& view,
                  double radius_px = kDefaultSplatRadius, Exec exec = Exec::Parallel);

// Per-pixel brute force over every point with the same winner rule.
WarpedImage splat_reference(const GlobalPointCloud& cloud, const CameraView& view,
                            double radius_px = kDefaultSplatRadius);

// Keeps points with confidence >= tau, order preserved. Requires tau >= 1.
GlobalPointCloud filter_by_confidence(const GlobalPointCloud& cloud, double tau);

// Appends one point per valid SCM pixel.
void insert_scm(GlobalPointCloud& cloud, const ViewMaps& maps, int view_index);

// Binary little-endian PLY: double x,y,z; uchar red,green,blue; ushort
// semantic; float confidence; int source_view. Colors are quantized to 8 bits.
void write_ply(const std::filesystem::path& path, const GlobalPointCloud& cloud);
GlobalPointCloud read_ply(const std::filesystem::path& path);

}  // namespace spatialgen
