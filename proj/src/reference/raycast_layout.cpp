// Serial brute-force references are kept next to the fast kernels they check.
#include "spatialgen/raster.hpp"

#include <cmath>
#include <limits>

namespace spatialgen {
namespace {

// Moller-Trumbore with the ray origin at the camera center. Returns the ray
// parameter, which equals camera-z because the direction has z = 1.
std::optional<double> intersect(const Vec3& dir, const std::array<Vec3, 3>& tri) {
    const Vec3 e1 = tri[1] - tri[0];
    const Vec3 e2 = tri[2] - tri[0];
    const Vec3 p = dir.cross(e2);
    const double det = e1.dot(p);
    if (std::fabs(det) < 1e-14) return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3 s = -tri[0];
    const double u = s.dot(p) * inv;
    if (u < 0.0 || u > 1.0) return std::nullopt;
    const Vec3 q = s.cross(e1);
    const double v = dir.dot(q) * inv;
    if (v < 0.0 || u + v > 1.0) return std::nullopt;
    return e2.dot(q) * inv;
}

}  // namespace

LayoutRaster raycast_layout_reference(const SceneLayout& layout, const CameraView& view) {
    view.validate();
    const int w = view.width(), h = view.height();
    LayoutRaster out{SemanticMap(w, h, 1, category::kVoid), DepthMap(w, h, 1, 0.0)};
    std::vector<SurfaceTriangle> tris = layout_triangles(layout);
    for (auto& t : tris) {
        for (auto& v : t.v) v = view.pose.to_camera(v);
    }
    std::vector<Fragment> hits;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec3 dir = view.pixel_ray(x, y);
            hits.clear();
            double nearest = std::numeric_limits<double>::infinity();
            for (const auto& t : tris) {
                const auto depth = intersect(dir, t.v);
                if (!depth || !(*depth > kNearPlane)) continue;
                hits.push_back({*depth, t.priority, t.order, t.category});
                nearest = std::min(nearest, *depth);
            }
            const Fragment* best = nullptr;
            for (const auto& f : hits) {
                if (f.depth > nearest + kTieEpsilon) continue;
                if (!best || outranks(f, *best)) best = &f;
            }
            if (best) {
                out.semantic.at(x, y) = best->category;
                out.depth.at(x, y) = best->depth;
            }
        }
    }
    return out;
}

}  // namespace spatialgen
