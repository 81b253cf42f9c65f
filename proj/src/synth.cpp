#include "spatialgen/synth.hpp"
#include "spatialgen/pano.hpp"
#include "spatialgen/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace spatialgen {
namespace {

struct Hit {
    Fragment frag;
    Vec3 normal;
};

// Winner selection identical to the rasterizer: nearest depth, then priority
// and element order among fragments within kTieEpsilon.
class HitSet {
public:
    void add(double t, CategoryId cat, int order, const Vec3& n) {
        if (!(t > kNearPlane) || !std::isfinite(t)) return;
        hits_.push_back({Fragment{t, surface_priority(cat), order, cat}, n});
        nearest_ = std::min(nearest_, t);
    }
    const Hit* winner() const {
        const Hit* best = nullptr;
        for (const auto& h : hits_) {
            if (h.frag.depth > nearest_ + kTieEpsilon) continue;
            if (!best || outranks(h.frag, best->frag)) best = &h;
        }
        return best;
    }

private:
    std::vector<Hit> hits_;
    double nearest_ = std::numeric_limits<double>::infinity();
};

bool quad_contains(const ArchQuad& q, const Vec3& p, const Vec3& n) {
    // Drop the dominant normal axis and run an even-odd test in 2D.
    int drop = 0;
    n.cwiseAbs().maxCoeff(&drop);
    const int a = (drop + 1) % 3, b = (drop + 2) % 3;
    bool inside = false;
    for (int i = 0, j = 3; i < 4; j = i++) {
        const Vec3& ci = q.corners[static_cast<std::size_t>(i)];
        const Vec3& cj = q.corners[static_cast<std::size_t>(j)];
        if ((ci[b] > p[b]) != (cj[b] > p[b])) {
            const double x = (cj[a] - ci[a]) * (p[b] - ci[b]) / (cj[b] - ci[b]) + ci[a];
            if (p[a] < x) inside = !inside;
        }
    }
    return inside;
}

// Collects every surface crossing of the ray o + t * dir. With dir = R * K^-1
// [u, v, 1], t is camera-z; with a unit dir, t is distance.
HitSet trace(const SceneLayout& layout, const ElementOrder& order, const Vec3& o, const Vec3& dir) {
    HitSet hits;
    for (std::size_t i = 0; i < layout.boxes.size(); ++i) {
        const auto& box = layout.boxes[i];
        const Mat3 r = box.rotation();
        const Vec3 ol = r.transpose() * (o - box.center);
        const Vec3 dl = r.transpose() * dir;
        double tmin = -std::numeric_limits<double>::infinity(), tmax = std::numeric_limits<double>::infinity();
        int amin = 0, amax = 0;
        bool miss = false;
        for (int a = 0; a < 3 && !miss; ++a) {
            const double h = box.size[a] / 2;
            if (dl[a] == 0.0) {
                miss = std::fabs(ol[a]) > h;
                continue;
            }
            double t1 = (-h - ol[a]) / dl[a];
            double t2 = (h - ol[a]) / dl[a];
            if (t1 > t2) std::swap(t1, t2);
            if (t1 > tmin) { tmin = t1; amin = a; }
            if (t2 < tmax) { tmax = t2; amax = a; }
        }
        if (miss || tmax < tmin) continue;
        const int axis = tmin > kNearPlane ? amin : amax;
        const double t = tmin > kNearPlane ? tmin : tmax;
        hits.add(t, box.category, order.box(i), r.col(axis));
    }
    for (std::size_t i = 0; i < layout.arch.size(); ++i) {
        const auto& q = layout.arch[i];
        const Vec3 n = q.normal();
        const double den = n.dot(dir);
        if (den == 0.0) continue;
        const double t = n.dot(q.corners[0] - o) / den;
        if (quad_contains(q, o + t * dir, n)) hits.add(t, q.category(), order.arch_quad(i), n);
    }
    for (std::size_t r = 0; r < layout.rooms.size(); ++r) {
        const auto& room = layout.rooms[r];
        const auto& v = room.vertices;
        for (std::size_t e = 0; e < v.size(); ++e) {
            const Vec2& a = v[e];
            const Vec2& b = v[(e + 1) % v.size()];
            const Vec2 edge = b - a;
            const Vec3 n(edge.y(), -edge.x(), 0.0);
            const double den = n.dot(dir);
            if (den == 0.0) continue;
            const double t = (n.x() * (a.x() - o.x()) + n.y() * (a.y() - o.y())) / den;
            const Vec3 p = o + t * dir;
            const double s = (Vec2(p.x(), p.y()) - a).dot(edge) / edge.squaredNorm();
            if (s < 0.0 || s > 1.0 || p.z() < room.floor_z || p.z() > room.ceiling_z) continue;
            hits.add(t, category::kWall, order.wall(r, e), n.normalized());
        }
        if (dir.z() != 0.0) {
            const double tf = (room.floor_z - o.z()) / dir.z();
            const Vec3 pf = o + tf * dir;
            if (room.contains(Vec2(pf.x(), pf.y()))) hits.add(tf, category::kFloor, order.floor(r), Vec3::UnitZ());
            const double tc = (room.ceiling_z - o.z()) / dir.z();
            const Vec3 pc = o + tc * dir;
            if (room.contains(Vec2(pc.x(), pc.y()))) hits.add(tc, category::kCeiling, order.ceiling(r), -Vec3::UnitZ());
        }
    }
    return hits;
}

std::array<float, 3> shade(const SynthScene& scene, const Hit& hit, const Vec3& dir) {
    Vec3 n = hit.normal;
    if (n.dot(dir) > 0) n = -n;
    const double lambert = std::max(0.0, n.dot(scene.light.direction));
    const double k = scene.light.intensity * (scene.light.ambient + scene.light.diffuse * lambert);
    const auto albedo = CategoryPalette::standard().albedo(hit.frag.category);
    return {static_cast<float>(std::clamp(albedo[0] * k, 0.0, 1.0)),
            static_cast<float>(std::clamp(albedo[1] * k, 0.0, 1.0)),
            static_cast<float>(std::clamp(albedo[2] * k, 0.0, 1.0))};
}

bool footprints_overlap(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b, double gap) {
    // Separating axis test on the four edge normals, with a small gap.
    auto separated = [&](const std::array<Vec2, 4>& p, const std::array<Vec2, 4>& q) {
        for (int i = 0; i < 4; ++i) {
            const Vec2 e = p[(i + 1) % 4] - p[i];
            const Vec2 axis = Vec2(-e.y(), e.x()).normalized();
            double pmin = 1e300, pmax = -1e300, qmin = 1e300, qmax = -1e300;
            for (int k = 0; k < 4; ++k) {
                pmin = std::min(pmin, axis.dot(p[k]));
                pmax = std::max(pmax, axis.dot(p[k]));
                qmin = std::min(qmin, axis.dot(q[k]));
                qmax = std::max(qmax, axis.dot(q[k]));
            }
            if (pmax + gap < qmin || qmax + gap < pmin) return true;
        }
        return false;
    };
    return !separated(a, b) && !separated(b, a);
}

// Distance in the floor plane from p to the box footprint (0 inside).
double footprint_distance(const SemanticBox& b, const Vec2& p) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const Vec2 d = p - Vec2(b.center.x(), b.center.y());
    const double ex = std::max(std::fabs(c * d.x() + s * d.y()) - b.size.x() / 2, 0.0);
    const double ey = std::max(std::fabs(-s * d.x() + c * d.y()) - b.size.y() / 2, 0.0);
    return std::hypot(ex, ey);
}

std::optional<SynthScene> try_gen(Rng& rng, Difficulty difficulty, double side) {
    SynthScene scene;
    auto& layout = scene.layout;
    double w = rng.uniform(3.0, 6.0);
    double d = rng.uniform(3.0, 6.0);
    if (side > 0) w = d = side;
    const double ceiling = rng.uniform(2.6, 3.0);
    RoomPolygon room;
    room.vertices = {Vec2(-w / 2, -d / 2), Vec2(w / 2, -d / 2), Vec2(w / 2, d / 2), Vec2(-w / 2, d / 2)};
    room.floor_z = 0.0;
    room.ceiling_z = ceiling;
    layout.rooms.push_back(room);
    layout.room_type = "synthetic";

    // Door on the y = -d/2 wall, window on the x = +w/2 wall; both coplanar overlays.
    const double door_x = rng.uniform(-w / 2 + 0.6, w / 2 - 1.5);
    ArchQuad door;
    door.kind = ArchKind::Door;
    door.corners = {Vec3(door_x, -d / 2, 0.0), Vec3(door_x + 0.9, -d / 2, 0.0), Vec3(door_x + 0.9, -d / 2, 2.05),
                    Vec3(door_x, -d / 2, 2.05)};
    layout.arch.push_back(door);
    const double win_y = rng.uniform(-d / 2 + 0.5, d / 2 - 1.7);
    ArchQuad window;
    window.kind = ArchKind::Window;
    window.corners = {Vec3(w / 2, win_y, 0.9), Vec3(w / 2, win_y + 1.2, 0.9), Vec3(w / 2, win_y + 1.2, 2.1),
                      Vec3(w / 2, win_y, 2.1)};
    layout.arch.push_back(window);

    int count = 0;
    double max_side = 1.6;
    switch (difficulty) {
        case Difficulty::Empty: count = 0; break;
        case Difficulty::Sparse: count = 3 + static_cast<int>(rng.below(3)); break;
        case Difficulty::Cluttered:
            count = 8 + static_cast<int>(rng.below(8));
            max_side = 1.0;
            break;
    }
    for (int i = 0; i < count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
            SemanticBox b;
            b.id = i;
            b.category = static_cast<CategoryId>(category::kFirstObject + rng.below(category::kObjectCount));
            b.size = Vec3(rng.uniform(0.2, max_side), rng.uniform(0.2, max_side), rng.uniform(0.2, 1.6));
            b.yaw = rng.uniform(-kPi, kPi);
            b.center = Vec3(rng.uniform(-w / 2, w / 2), rng.uniform(-d / 2, d / 2), b.size.z() / 2);
            const auto fp = b.footprint();
            bool ok = true;
            for (const auto& c : fp) ok = ok && room.contains(c) && room.edge_distance(c) > 0.05;
            ok = ok && footprint_distance(b, Vec2::Zero()) > kWalkwayRadius;
            for (const auto& other : layout.boxes) ok = ok && !footprints_overlap(fp, other.footprint(), 0.05);
            if (ok) {
                layout.boxes.push_back(b);
                placed = true;
            }
        }
        if (!placed) return std::nullopt;
    }
    return scene;
}

}  // namespace

const char* to_string(Difficulty d) {
    switch (d) {
        case Difficulty::Empty: return "empty";
        case Difficulty::Sparse: return "sparse";
        case Difficulty::Cluttered: return "cluttered";
    }
    return "empty";
}

Difficulty parse_difficulty(std::string_view name) {
    if (name == "empty") return Difficulty::Empty;
    if (name == "sparse") return Difficulty::Sparse;
    if (name == "cluttered") return Difficulty::Cluttered;
    throw Error(ErrorKind::InvalidInput, "unknown difficulty '" + std::string(name) + "'", "difficulty");
}

SynthScene gen_scene(std::uint64_t seed, Difficulty difficulty) { return gen_scene(seed, difficulty, 0.0); }

SynthScene gen_scene(std::uint64_t seed, Difficulty difficulty, double room_side) {
    if (room_side != 0.0 && !(room_side >= 3.0 && room_side <= 10.0)) {
        throw Error(ErrorKind::InvalidInput, "room side must lie in [3, 10] m", "room_side");
    }
    const Rng base(seed);
    for (std::uint64_t reseed = 0; reseed < 32; ++reseed) {
        Rng rng = base.fork(reseed);
        if (auto scene = try_gen(rng, difficulty, room_side)) return *scene;
    }
    throw Error(ErrorKind::PlacementFailure, "could not place boxes after 32 reseeds", "seed " + std::to_string(seed));
}

ViewMaps render_gt(const SynthScene& scene, const CameraView& view, Exec exec) {
    view.validate();
    const int w = view.width(), h = view.height();
    ViewMaps maps;
    maps.color = ColorImage(w, h, 3, 0.0f);
    maps.semantic = SemanticMap(w, h, 1, category::kVoid);
    maps.depth = DepthMap(w, h, 1, 0.0);
    maps.confidence = Image<float>(w, h, 1, 0.0f);
    const ElementOrder order(scene.layout);
    const Vec3 o = view.pose.translation;

#pragma omp parallel for schedule(dynamic, 4) if (exec == Exec::Parallel)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec3 dir = view.pose.rotation * view.pixel_ray(x, y);
            const HitSet hits = trace(scene.layout, order, o, dir);
            const Hit* hit = hits.winner();
            if (!hit) continue;
            maps.semantic.at(x, y) = hit->frag.category;
            maps.depth.at(x, y) = hit->frag.depth;
            const auto rgb = shade(scene, *hit, dir);
            for (int c = 0; c < 3; ++c) maps.color.at(x, y, c) = rgb[static_cast<std::size_t>(c)];
            maps.confidence.at(x, y) = 2.0f;
        }
    }
    maps.scm = depth_to_scm(maps.depth, view);
    return maps;
}

ColorImage render_panorama(const SynthScene& scene, const Vec3& position, int height) {
    if (height <= 0) throw Error(ErrorKind::InvalidInput, "panorama height must be positive", "height");
    const int width = 2 * height;
    ColorImage out(width, height, 3, 0.0f);
    const ElementOrder order(scene.layout);
#pragma omp parallel for schedule(dynamic, 4)
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Vec3 dir = equirect_direction(x, y, width, height);
            const HitSet hits = trace(scene.layout, order, position, dir);
            if (const Hit* hit = hits.winner()) {
                const auto rgb = shade(scene, *hit, dir);
                for (int c = 0; c < 3; ++c) out.at(x, y, c) = rgb[static_cast<std::size_t>(c)];
            }
        }
    }
    return out;
}

std::string save_scene(const SynthScene& scene, int indent) {
    auto doc = nlohmann::ordered_json::parse(save_layout(scene.layout));
    const auto& l = scene.light;
    doc["lighting"] = {{"direction", {l.direction.x(), l.direction.y(), l.direction.z()}},
                       {"intensity", l.intensity},
                       {"ambient", l.ambient},
                       {"diffuse", l.diffuse}};
    return doc.dump(indent);
}

SynthScene load_scene(std::string_view document) {
    SynthScene scene;
    scene.layout = load_layout(document);
    const auto doc = nlohmann::json::parse(document);
    if (doc.contains("lighting")) {
        try {
            const auto& jl = doc["lighting"];
            const auto& d = jl.at("direction");
            scene.light.direction = Vec3(d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>());
            if (!(scene.light.direction.norm() > 0)) {
                throw Error(ErrorKind::Schema, "light direction must be non-zero", "$.lighting.direction");
            }
            scene.light.direction.normalize();
            scene.light.intensity = jl.value("intensity", 1.0);
            scene.light.ambient = jl.value("ambient", 0.3);
            scene.light.diffuse = jl.value("diffuse", 0.7);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Schema, std::string("lighting block: ") + e.what(), "$.lighting");
        }
    }
    return scene;
}

}  // namespace spatialgen
