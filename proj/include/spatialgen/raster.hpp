#pragma once

#include "spatialgen/camera.hpp"
#include "spatialgen/layout.hpp"
#include "spatialgen/parallel.hpp"

#include <array>
#include <vector>

namespace spatialgen {

struct SceneCoordMap {
    Image<double> xyz;  // 3 channels, world meters; (0,0,0) where invalid
    Mask valid;

    int width() const { return xyz.width; }
    int height() const { return xyz.height; }
    std::size_t valid_count() const;
};

// Surfaces closer than this camera-z are ignored by every renderer.
inline constexpr double kNearPlane = 1e-3;
// Fragments within this depth of the nearest one compete on priority.
inline constexpr double kTieEpsilon = 1e-5;

// Overlay priority for coincident surfaces: door > window > object > shell.
int surface_priority(CategoryId category);

struct Fragment {
    double depth = 0.0;
    int priority = 0;
    int order = 0;
    CategoryId category = category::kVoid;
};

// True when `a` should replace `b` once both are known to be within
// kTieEpsilon of the nearest depth.
inline bool outranks(const Fragment& a, const Fragment& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.order < b.order;
}

struct SurfaceTriangle {
    std::array<Vec3, 3> v;
    CategoryId category = category::kVoid;
    int priority = 0;
    int order = 0;
};

// 12 triangles per box, 2 per arch quad, and the room shell (walls from
// polygon edges, ear-clipped floor and ceiling).
std::vector<SurfaceTriangle> layout_triangles(const SceneLayout& layout);

// Canonical element ordering shared by every renderer so that exact depth
// ties resolve identically: boxes (layout order), then arch quads, then for
// each room its walls (edge order), floor, ceiling.
struct ElementOrder {
    int boxes = 0;
    int arch = 0;
    std::vector<int> room_base;
    std::vector<int> room_edges;

    explicit ElementOrder(const SceneLayout& layout);
    int box(std::size_t i) const { return static_cast<int>(i); }
    int arch_quad(std::size_t i) const { return boxes + static_cast<int>(i); }
    int wall(std::size_t room, std::size_t edge) const { return room_base[room] + static_cast<int>(edge); }
    int floor(std::size_t room) const { return room_base[room] + room_edges[room]; }
    int ceiling(std::size_t room) const { return room_base[room] + room_edges[room] + 1; }
};

// Triangulates a simple polygon; returns index triples.
std::vector<std::array<int, 3>> ear_clip(const std::vector<Vec2>& polygon);

struct LayoutRaster {
    SemanticMap semantic;
    DepthMap depth;
};

// Z-buffered scanline rasterization, parallel over rows.
LayoutRaster rasterize_layout(const SceneLayout& layout, const CameraView& view, Exec exec = Exec::Parallel);

// Brute-force reference: per pixel, intersect the center ray with every
// triangle of layout_triangles and apply the same winner rule.
LayoutRaster raycast_layout_reference(const SceneLayout& layout, const CameraView& view);

SceneCoordMap depth_to_scm(const DepthMap& depth, const CameraView& view);

struct DepthFromScm {
    DepthMap depth;
    int inconsistent = 0;  // valid pixels whose point reprojects > 0.5 px away
};
DepthFromScm scm_to_depth(const SceneCoordMap& scm, const CameraView& view);

}  // namespace spatialgen
