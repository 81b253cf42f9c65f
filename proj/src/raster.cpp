#include "spatialgen/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spatialgen {
namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Triangle prepared for one view: near-clipped convex polygon in continuous
// image coordinates plus its supporting plane in camera space.
struct ScreenTriangle {
    std::array<Vec2, 4> poly;
    int n = 0;
    double orient = 1.0;
    Vec3 plane_n;
    double plane_d = 0.0;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
    Fragment frag;

    bool covers(const Vec2& p) const {
        for (int i = 0; i < n; ++i) {
            const Vec2& a = poly[i];
            const Vec2& b = poly[(i + 1) % n];
            if (orient * cross2(b - a, p - a) < 0) return false;
        }
        return true;
    }
};

std::vector<ScreenTriangle> prepare(const std::vector<SurfaceTriangle>& tris, const CameraView& view) {
    const auto& k = view.intrinsics;
    std::vector<ScreenTriangle> out;
    out.reserve(tris.size());
    for (const auto& t : tris) {
        std::array<Vec3, 3> c;
        for (int i = 0; i < 3; ++i) c[i] = view.pose.to_camera(t.v[i]);
        if (c[0].z() <= kNearPlane && c[1].z() <= kNearPlane && c[2].z() <= kNearPlane) continue;

        // Sutherland-Hodgman against z = near.
        std::array<Vec3, 4> clipped;
        int m = 0;
        for (int i = 0; i < 3; ++i) {
            const Vec3& a = c[i];
            const Vec3& b = c[(i + 1) % 3];
            const bool ain = a.z() > kNearPlane;
            const bool bin = b.z() > kNearPlane;
            if (ain) clipped[m++] = a;
            if (ain != bin) {
                const double s = (kNearPlane - a.z()) / (b.z() - a.z());
                clipped[m++] = a + s * (b - a);
            }
        }
        ScreenTriangle st;
        st.n = m;
        double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
        for (int i = 0; i < m; ++i) {
            const Vec3& p = clipped[i];
            st.poly[i] = Vec2(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
            xmin = std::min(xmin, st.poly[i].x());
            xmax = std::max(xmax, st.poly[i].x());
            ymin = std::min(ymin, st.poly[i].y());
            ymax = std::max(ymax, st.poly[i].y());
        }
        double area = 0.0;
        for (int i = 0; i < m; ++i) area += cross2(st.poly[i], st.poly[(i + 1) % m]);
        if (std::fabs(area) < 1e-12) continue;  // edge-on
        st.orient = area > 0 ? 1.0 : -1.0;
        st.plane_n = (c[1] - c[0]).cross(c[2] - c[0]);
        st.plane_d = st.plane_n.dot(c[0]);
        // Pixel x covers centers x + 0.5 in [xmin, xmax].
        st.x0 = std::max(0, static_cast<int>(std::ceil(xmin - 0.5)));
        st.x1 = std::min(k.width - 1, static_cast<int>(std::floor(xmax - 0.5)));
        st.y0 = std::max(0, static_cast<int>(std::ceil(ymin - 0.5)));
        st.y1 = std::min(k.height - 1, static_cast<int>(std::floor(ymax - 0.5)));
        if (st.x0 > st.x1 || st.y0 > st.y1) continue;
        st.frag = Fragment{0.0, t.priority, t.order, t.category};
        out.push_back(st);
    }
    return out;
}

void add_quad(std::vector<SurfaceTriangle>& out, const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d,
              CategoryId cat, int order) {
    const int pr = surface_priority(cat);
    out.push_back({{a, b, c}, cat, pr, order});
    out.push_back({{a, c, d}, cat, pr, order});
}

}  // namespace

std::size_t SceneCoordMap::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.data.begin(), valid.data.end(), std::uint8_t{1}));
}

int surface_priority(CategoryId cat) {
    if (cat == category::kDoor) return 3;
    if (cat == category::kWindow) return 2;
    if (cat >= category::kFirstObject) return 1;
    return 0;
}

ElementOrder::ElementOrder(const SceneLayout& layout)
    : boxes(static_cast<int>(layout.boxes.size())), arch(static_cast<int>(layout.arch.size())) {
    int base = boxes + arch;
    for (const auto& r : layout.rooms) {
        room_base.push_back(base);
        room_edges.push_back(static_cast<int>(r.vertices.size()));
        base += static_cast<int>(r.vertices.size()) + 2;
    }
}

std::vector<std::array<int, 3>> ear_clip(const std::vector<Vec2>& polygon) {
    const int n = static_cast<int>(polygon.size());
    std::vector<std::array<int, 3>> tris;
    if (n < 3) return tris;
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    double area = 0.0;
    for (int i = 0; i < n; ++i) area += cross2(polygon[static_cast<std::size_t>(i)], polygon[static_cast<std::size_t>((i + 1) % n)]);
    if (area < 0) std::reverse(idx.begin(), idx.end());

    auto pt = [&](int i) -> const Vec2& { return polygon[static_cast<std::size_t>(i)]; };
    auto inside_tri = [&](const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
        return cross2(b - a, p - a) >= 0 && cross2(c - b, p - b) >= 0 && cross2(a - c, p - c) >= 0;
    };
    int guard = 0;
    while (idx.size() > 3 && guard < 10 * n * n) {
        ++guard;
        bool clipped = false;
        const std::size_t m = idx.size();
        for (std::size_t i = 0; i < m; ++i) {
            const int ia = idx[(i + m - 1) % m], ib = idx[i], ic = idx[(i + 1) % m];
            const Vec2 &a = pt(ia), &b = pt(ib), &c = pt(ic);
            if (cross2(b - a, c - b) <= 0) continue;  // reflex
            bool ear = true;
            for (std::size_t j = 0; j < m && ear; ++j) {
                const int ij = idx[j];
                if (ij == ia || ij == ib || ij == ic) continue;
                if (inside_tri(pt(ij), a, b, c)) ear = false;
            }
            if (!ear) continue;
            tris.push_back({ia, ib, ic});
            idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(i));
            clipped = true;
            break;
        }
        if (!clipped) break;  // numerically degenerate remainder
    }
    if (idx.size() == 3) tris.push_back({idx[0], idx[1], idx[2]});
    return tris;
}

std::vector<SurfaceTriangle> layout_triangles(const SceneLayout& layout) {
    const ElementOrder order(layout);
    std::vector<SurfaceTriangle> out;
    for (std::size_t b = 0; b < layout.boxes.size(); ++b) {
        const auto c = box_corners(layout.boxes[b]);
        const CategoryId cat = layout.boxes[b].category;
        const int o = order.box(b);
        // Faces by corner bit pattern (bit0 = x, bit1 = y, bit2 = z).
        add_quad(out, c[0], c[2], c[3], c[1], cat, o);  // z-
        add_quad(out, c[4], c[5], c[7], c[6], cat, o);  // z+
        add_quad(out, c[0], c[1], c[5], c[4], cat, o);  // y-
        add_quad(out, c[2], c[6], c[7], c[3], cat, o);  // y+
        add_quad(out, c[0], c[4], c[6], c[2], cat, o);  // x-
        add_quad(out, c[1], c[3], c[7], c[5], cat, o);  // x+
    }
    for (std::size_t a = 0; a < layout.arch.size(); ++a) {
        const auto& q = layout.arch[a];
        add_quad(out, q.corners[0], q.corners[1], q.corners[2], q.corners[3], q.category(), order.arch_quad(a));
    }
    for (std::size_t r = 0; r < layout.rooms.size(); ++r) {
        const auto& room = layout.rooms[r];
        const auto& v = room.vertices;
        for (std::size_t e = 0; e < v.size(); ++e) {
            const Vec2& a = v[e];
            const Vec2& b = v[(e + 1) % v.size()];
            add_quad(out, Vec3(a.x(), a.y(), room.floor_z), Vec3(b.x(), b.y(), room.floor_z),
                     Vec3(b.x(), b.y(), room.ceiling_z), Vec3(a.x(), a.y(), room.ceiling_z), category::kWall,
                     order.wall(r, e));
        }
        for (const auto& t : ear_clip(v)) {
            std::array<Vec3, 3> fl, ce;
            for (int i = 0; i < 3; ++i) {
                const Vec2& p = v[static_cast<std::size_t>(t[static_cast<std::size_t>(i)])];
                fl[static_cast<std::size_t>(i)] = Vec3(p.x(), p.y(), room.floor_z);
                ce[static_cast<std::size_t>(i)] = Vec3(p.x(), p.y(), room.ceiling_z);
            }
            out.push_back({fl, category::kFloor, surface_priority(category::kFloor), order.floor(r)});
            out.push_back({ce, category::kCeiling, surface_priority(category::kCeiling), order.ceiling(r)});
        }
    }
    return out;
}

LayoutRaster rasterize_layout(const SceneLayout& layout, const CameraView& view, Exec exec) {
    view.validate();
    const int w = view.width(), h = view.height();
    LayoutRaster out{SemanticMap(w, h, 1, category::kVoid), DepthMap(w, h, 1, 0.0)};
    const auto tris = prepare(layout_triangles(layout), view);
    const auto& k = view.intrinsics;

#pragma omp parallel for schedule(dynamic, 4) if (exec == Exec::Parallel)
    for (int y = 0; y < h; ++y) {
        std::vector<double> nearest(static_cast<std::size_t>(w), std::numeric_limits<double>::infinity());
        std::vector<Fragment> best(static_cast<std::size_t>(w));
        std::vector<char> has(static_cast<std::size_t>(w), 0);
        const double py = y + 0.5;
        const double ry = (py - k.cy) / k.fy;
        auto for_each_hit = [&](auto&& fn) {
            for (const auto& t : tris) {
                if (y < t.y0 || y > t.y1) continue;
                for (int x = t.x0; x <= t.x1; ++x) {
                    const Vec2 p(x + 0.5, py);
                    if (!t.covers(p)) continue;
                    const Vec3 ray((p.x() - k.cx) / k.fx, ry, 1.0);
                    const double den = t.plane_n.dot(ray);
                    if (den == 0.0) continue;
                    const double depth = t.plane_d / den;
                    if (!(depth > kNearPlane)) continue;
                    fn(x, t, depth);
                }
            }
        };
        for_each_hit([&](int x, const ScreenTriangle&, double depth) {
            auto& n = nearest[static_cast<std::size_t>(x)];
            n = std::min(n, depth);
        });
        for_each_hit([&](int x, const ScreenTriangle& t, double depth) {
            const auto xs = static_cast<std::size_t>(x);
            if (depth > nearest[xs] + kTieEpsilon) return;
            Fragment f = t.frag;
            f.depth = depth;
            if (!has[xs] || outranks(f, best[xs])) {
                best[xs] = f;
                has[xs] = 1;
            }
        });
        for (int x = 0; x < w; ++x) {
            const auto xs = static_cast<std::size_t>(x);
            if (!has[xs]) continue;
            out.semantic.at(x, y) = best[xs].category;
            out.depth.at(x, y) = best[xs].depth;
        }
    }
    return out;
}

SceneCoordMap depth_to_scm(const DepthMap& depth, const CameraView& view) {
    view.validate();
    if (depth.width != view.width() || depth.height != view.height() || depth.channels != 1) {
        throw Error(ErrorKind::InvalidInput, "depth map does not match the view", "depth");
    }
    SceneCoordMap scm{Image<double>(depth.width, depth.height, 3, 0.0), Mask(depth.width, depth.height, 1, 0)};
#pragma omp parallel for schedule(static)
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            const double d = depth.at(x, y);
            if (!(d > 0) || !std::isfinite(d)) continue;
            const Vec3 p = unproject(view, Vec2(x, y), d);
            for (int c = 0; c < 3; ++c) scm.xyz.at(x, y, c) = p[c];
            scm.valid.at(x, y) = 1;
        }
    }
    return scm;
}

DepthFromScm scm_to_depth(const SceneCoordMap& scm, const CameraView& view) {
    view.validate();
    if (scm.xyz.width != view.width() || scm.xyz.height != view.height() || scm.xyz.channels != 3 ||
        !scm.valid.same_shape(scm.xyz.width, scm.xyz.height, 1)) {
        throw Error(ErrorKind::InvalidInput, "scene coordinate map does not match the view", "scm");
    }
    DepthFromScm out{DepthMap(scm.width(), scm.height(), 1, 0.0), 0};
    int inconsistent = 0;
#pragma omp parallel for schedule(static) reduction(+ : inconsistent)
    for (int y = 0; y < scm.height(); ++y) {
        for (int x = 0; x < scm.width(); ++x) {
            if (!scm.valid.at(x, y)) continue;
            const Vec3 p(scm.xyz.at(x, y, 0), scm.xyz.at(x, y, 1), scm.xyz.at(x, y, 2));
            const auto proj = project(view, p);
            if (!proj) continue;
            out.depth.at(x, y) = proj->depth;
            if ((proj->pixel - Vec2(x, y)).norm() > 0.5) ++inconsistent;
        }
    }
    out.inconsistent = inconsistent;
    return out;
}

}  // namespace spatialgen
