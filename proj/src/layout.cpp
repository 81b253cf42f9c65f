#include "spatialgen/layout.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace spatialgen {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

int orientation(const Vec2& a, const Vec2& b, const Vec2& c) {
    const double v = cross2(b - a, c - a);
    if (v > 1e-12) return 1;
    if (v < -1e-12) return -1;
    return 0;
}

bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
    return std::min(a.x(), b.x()) - 1e-12 <= p.x() && p.x() <= std::max(a.x(), b.x()) + 1e-12 &&
           std::min(a.y(), b.y()) - 1e-12 <= p.y() && p.y() <= std::max(a.y(), b.y()) + 1e-12;
}

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
    const int o1 = orientation(p1, p2, q1);
    const int o2 = orientation(p1, p2, q2);
    const int o3 = orientation(q1, q2, p1);
    const int o4 = orientation(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(p1, p2, q1)) return true;
    if (o2 == 0 && on_segment(p1, p2, q2)) return true;
    if (o3 == 0 && on_segment(q1, q2, p1)) return true;
    if (o4 == 0 && on_segment(q1, q2, p2)) return true;
    return false;
}

// --- JSON field readers that report the offending path ------------------

const json& require(const json& obj, const char* key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw Error(ErrorKind::Schema, std::string("missing field '") + key + "'", path + "." + key);
    }
    return obj[key];
}

double read_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw Error(ErrorKind::Schema, "expected a number", path);
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw Error(ErrorKind::Schema, "non-finite number", path);
    return d;
}

std::int64_t read_integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw Error(ErrorKind::Schema, "expected an integer", path);
    return v.get<std::int64_t>();
}

template <int N>
Eigen::Matrix<double, N, 1> read_vec(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != N) {
        throw Error(ErrorKind::Schema, "expected an array of " + std::to_string(N) + " numbers", path);
    }
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) out[i] = read_number(v[static_cast<std::size_t>(i)], path + "[" + std::to_string(i) + "]");
    return out;
}

const json& require_array(const json& obj, const char* key, const std::string& path) {
    const json& v = require(obj, key, path);
    if (!v.is_array()) throw Error(ErrorKind::Schema, "expected an array", path + "." + key);
    return v;
}

ArchKind parse_kind(const json& v, const std::string& path) {
    if (!v.is_string()) throw Error(ErrorKind::Schema, "expected a string", path);
    const auto s = v.get<std::string>();
    if (s == "wall") return ArchKind::Wall;
    if (s == "door") return ArchKind::Door;
    if (s == "window") return ArchKind::Window;
    throw Error(ErrorKind::Schema, "unknown arch kind '" + s + "'", path);
}

}  // namespace

double normalize_yaw(double yaw) {
    if (yaw >= -kPi && yaw < kPi) return yaw;
    double y = std::fmod(yaw + kPi, 2.0 * kPi);
    if (y < 0) y += 2.0 * kPi;
    y -= kPi;
    if (y >= kPi) y -= 2.0 * kPi;
    return y;
}

Mat3 SemanticBox::rotation() const { return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(); }

std::array<Vec2, 4> SemanticBox::footprint() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double hx = size.x() / 2, hy = size.y() / 2;
    const std::array<Vec2, 4> local = {Vec2(-hx, -hy), Vec2(hx, -hy), Vec2(hx, hy), Vec2(-hx, hy)};
    std::array<Vec2, 4> out;
    for (int i = 0; i < 4; ++i) {
        out[i] = Vec2(center.x() + c * local[i].x() - s * local[i].y(), center.y() + s * local[i].x() + c * local[i].y());
    }
    return out;
}

std::array<Vec3, 8> box_corners(const SemanticBox& box) {
    const Mat3 r = box.rotation();
    std::array<Vec3, 8> out;
    for (int i = 0; i < 8; ++i) {
        const Vec3 local((i & 1 ? 0.5 : -0.5) * box.size.x(), (i & 2 ? 0.5 : -0.5) * box.size.y(),
                         (i & 4 ? 0.5 : -0.5) * box.size.z());
        out[i] = box.center + r * local;
    }
    return out;
}

const char* to_string(ArchKind kind) {
    switch (kind) {
        case ArchKind::Wall: return "wall";
        case ArchKind::Door: return "door";
        case ArchKind::Window: return "window";
    }
    return "wall";
}

CategoryId arch_category(ArchKind kind) {
    switch (kind) {
        case ArchKind::Wall: return category::kWall;
        case ArchKind::Door: return category::kDoor;
        case ArchKind::Window: return category::kWindow;
    }
    return category::kWall;
}

Vec3 ArchQuad::normal() const {
    // Newell's method, robust for slightly non-planar input.
    Vec3 n = Vec3::Zero();
    for (int i = 0; i < 4; ++i) {
        const Vec3& a = corners[i];
        const Vec3& b = corners[(i + 1) % 4];
        n.x() += (a.y() - b.y()) * (a.z() + b.z());
        n.y() += (a.z() - b.z()) * (a.x() + b.x());
        n.z() += (a.x() - b.x()) * (a.y() + b.y());
    }
    const double len = n.norm();
    return len > 0 ? Vec3(n / len) : Vec3::Zero();
}

double ArchQuad::area() const {
    return 0.5 * ((corners[2] - corners[0]).cross(corners[3] - corners[1])).norm();
}

double RoomPolygon::signed_area() const {
    double a = 0.0;
    const std::size_t n = vertices.size();
    for (std::size_t i = 0; i < n; ++i) a += cross2(vertices[i], vertices[(i + 1) % n]);
    return 0.5 * a;
}

double RoomPolygon::area() const { return std::fabs(signed_area()); }

Vec2 RoomPolygon::centroid() const {
    const double a = signed_area();
    const std::size_t n = vertices.size();
    if (std::fabs(a) < 1e-15) {
        Vec2 m = Vec2::Zero();
        for (const auto& v : vertices) m += v;
        return n ? Vec2(m / static_cast<double>(n)) : m;
    }
    Vec2 c = Vec2::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& p = vertices[i];
        const Vec2& q = vertices[(i + 1) % n];
        c += (p + q) * cross2(p, q);
    }
    return c / (6.0 * a);
}

bool RoomPolygon::contains(const Vec2& p) const {
    bool inside = false;
    const std::size_t n = vertices.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = vertices[i];
        const Vec2& b = vertices[j];
        if ((a.y() > p.y()) != (b.y() > p.y())) {
            const double x = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
            if (p.x() < x) inside = !inside;
        }
    }
    return inside;
}

bool RoomPolygon::is_simple() const {
    const std::size_t n = vertices.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        if ((vertices[i] - vertices[(i + 1) % n]).norm() < 1e-12) return false;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent) continue;
            if (segments_intersect(vertices[i], vertices[(i + 1) % n], vertices[j], vertices[(j + 1) % n])) {
                return false;
            }
        }
    }
    return true;
}

double RoomPolygon::edge_distance(const Vec2& p) const {
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = vertices.size();
    for (std::size_t i = 0; i < n; ++i) best = std::min(best, segment_distance(p, vertices[i], vertices[(i + 1) % n]));
    return best;
}

int SceneLayout::room_of(const SemanticBox& box) const {
    const Vec2 c(box.center.x(), box.center.y());
    for (std::size_t r = 0; r < rooms.size(); ++r) {
        if (rooms[r].contains(c)) return static_cast<int>(r);
    }
    return -1;
}

double SceneLayout::floor_area() const {
    double a = 0.0;
    for (const auto& r : rooms) a += r.area();
    return a;
}

SceneLayout load_layout(std::string_view document, const CategoryPalette& palette) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Schema, std::string("layout parse error: ") + e.what(), "$");
    }
    if (!doc.is_object()) throw Error(ErrorKind::Schema, "layout must be an object", "$");
    const auto version = read_integer(require(doc, "version", "$"), "$.version");
    if (version != kLayoutSchemaVersion) {
        throw Error(ErrorKind::Schema, "unsupported schema version " + std::to_string(version), "$.version");
    }

    SceneLayout layout;
    const json& rooms = require_array(doc, "rooms", "$");
    for (std::size_t i = 0; i < rooms.size(); ++i) {
        const std::string path = "$.rooms[" + std::to_string(i) + "]";
        const json& jr = rooms[i];
        RoomPolygon room;
        const json& verts = require_array(jr, "vertices", path);
        for (std::size_t k = 0; k < verts.size(); ++k) {
            room.vertices.push_back(read_vec<2>(verts[k], path + ".vertices[" + std::to_string(k) + "]"));
        }
        room.floor_z = read_number(require(jr, "floor_z", path), path + ".floor_z");
        room.ceiling_z = read_number(require(jr, "ceiling_z", path), path + ".ceiling_z");
        if (!(room.ceiling_z > room.floor_z)) throw Error(ErrorKind::Invariant, "ceiling_z must exceed floor_z", path);
        if (!room.is_simple()) throw Error(ErrorKind::Invariant, "room polygon is not simple", path + ".vertices");
        if (!(room.area() > 0)) throw Error(ErrorKind::Invariant, "room polygon has zero area", path + ".vertices");
        layout.rooms.push_back(std::move(room));
    }

    std::set<int> ids;
    const json& boxes = require_array(doc, "boxes", "$");
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const std::string path = "$.boxes[" + std::to_string(i) + "]";
        const json& jb = boxes[i];
        SemanticBox box;
        const auto id = read_integer(require(jb, "id", path), path + ".id");
        if (id < std::numeric_limits<int>::min() || id > std::numeric_limits<int>::max()) {
            throw Error(ErrorKind::Schema, "id out of range", path + ".id");
        }
        box.id = static_cast<int>(id);
        box.center = read_vec<3>(require(jb, "center", path), path + ".center");
        box.size = read_vec<3>(require(jb, "size", path), path + ".size");
        box.yaw = normalize_yaw(read_number(require(jb, "yaw", path), path + ".yaw"));
        const auto cat = read_integer(require(jb, "category", path), path + ".category");
        const std::string who = "box " + std::to_string(box.id);
        for (int a = 0; a < 3; ++a) {
            if (!(box.size[a] > 0)) {
                throw Error(ErrorKind::Invariant, who + ": size component " + std::to_string(a) + " must be > 0", who);
            }
        }
        if (cat < 0 || cat > 0xFFFF || !palette.is_object(static_cast<CategoryId>(cat))) {
            throw Error(ErrorKind::Invariant, who + ": category " + std::to_string(cat) + " is not an object category",
                        who);
        }
        box.category = static_cast<CategoryId>(cat);
        if (!ids.insert(box.id).second) throw Error(ErrorKind::Invariant, who + ": duplicate id", who);
        layout.boxes.push_back(box);
    }

    if (doc.contains("arch")) {
        const json& arch = require_array(doc, "arch", "$");
        for (std::size_t i = 0; i < arch.size(); ++i) {
            const std::string path = "$.arch[" + std::to_string(i) + "]";
            const json& ja = arch[i];
            ArchQuad q;
            q.kind = parse_kind(require(ja, "kind", path), path + ".kind");
            const json& cs = require_array(ja, "corners", path);
            if (cs.size() != 4) throw Error(ErrorKind::Schema, "expected 4 corners", path + ".corners");
            for (std::size_t k = 0; k < 4; ++k) {
                q.corners[k] = read_vec<3>(cs[k], path + ".corners[" + std::to_string(k) + "]");
            }
            if (!(q.area() > 0)) throw Error(ErrorKind::Invariant, "degenerate arch quad", path);
            const Vec3 n = q.normal();
            const Vec3 mid = (q.corners[0] + q.corners[1] + q.corners[2] + q.corners[3]) / 4.0;
            for (const auto& c : q.corners) {
                if (std::fabs(n.dot(c - mid)) > 1e-6) throw Error(ErrorKind::Invariant, "arch quad not coplanar", path);
            }
            layout.arch.push_back(q);
        }
    }

    if (doc.contains("room_type")) {
        if (!doc["room_type"].is_string()) throw Error(ErrorKind::Schema, "expected a string", "$.room_type");
        layout.room_type = doc["room_type"].get<std::string>();
    }
    return layout;
}

std::string save_layout(const SceneLayout& layout, int indent) {
    ordered_json doc;
    doc["version"] = kLayoutSchemaVersion;
    doc["rooms"] = ordered_json::array();
    for (const auto& r : layout.rooms) {
        ordered_json jr;
        jr["vertices"] = ordered_json::array();
        for (const auto& v : r.vertices) jr["vertices"].push_back({v.x(), v.y()});
        jr["floor_z"] = r.floor_z;
        jr["ceiling_z"] = r.ceiling_z;
        doc["rooms"].push_back(std::move(jr));
    }
    doc["boxes"] = ordered_json::array();
    for (const auto& b : layout.boxes) {
        ordered_json jb;
        jb["id"] = b.id;
        jb["center"] = {b.center.x(), b.center.y(), b.center.z()};
        jb["size"] = {b.size.x(), b.size.y(), b.size.z()};
        jb["yaw"] = normalize_yaw(b.yaw);
        jb["category"] = b.category;
        doc["boxes"].push_back(std::move(jb));
    }
    doc["arch"] = ordered_json::array();
    for (const auto& q : layout.arch) {
        ordered_json ja;
        ja["kind"] = to_string(q.kind);
        ja["corners"] = ordered_json::array();
        for (const auto& c : q.corners) ja["corners"].push_back({c.x(), c.y(), c.z()});
        doc["arch"].push_back(std::move(ja));
    }
    doc["room_type"] = layout.room_type;
    return doc.dump(indent);
}

SceneLayout filter_objects(const SceneLayout& layout) {
    SceneLayout out = layout;
    out.boxes.clear();
    for (const auto& b : layout.boxes) {
        bool ok = true;
        for (int a = 0; a < 3; ++a) {
            ok = ok && b.size[a] >= kMinObjectEdge && b.size[a] <= kMaxObjectEdge;
        }
        if (ok && layout.room_of(b) >= 0) out.boxes.push_back(b);
    }
    return out;
}

CurationDecision curate(const SceneLayout& scene, int panorama_count) {
    CurationDecision d;
    const SceneLayout kept = filter_objects(scene);
    d.objects = static_cast<int>(kept.boxes.size());
    d.objects_removed = static_cast<int>(scene.boxes.size() - kept.boxes.size());
    d.floor_area = kept.floor_area();

    if (!(d.floor_area > kMinSceneArea)) {
        d.reasons.push_back("floor area " + std::to_string(d.floor_area) + " m^2 not above 20 m^2");
    }
    if (!(d.objects > kMinSceneObjects)) {
        d.reasons.push_back("object count " + std::to_string(d.objects) + " not above 35");
    }
    if (panorama_count < 1) d.reasons.push_back("no renderings");

    std::vector<int> per_room(kept.rooms.size(), 0);
    for (const auto& b : kept.boxes) {
        const int r = kept.room_of(b);
        if (r >= 0) ++per_room[static_cast<std::size_t>(r)];
    }
    int retained = 0;
    for (std::size_t r = 0; r < kept.rooms.size(); ++r) {
        RoomDecision rd;
        rd.room = static_cast<int>(r);
        rd.area = kept.rooms[r].area();
        rd.objects = per_room[r];
        if (!(rd.area > kMinRoomArea)) rd.reasons.push_back("room floor area not above 8 m^2");
        if (!(rd.objects > kMinRoomObjects)) rd.reasons.push_back("room object count not above 3");
        rd.retained = rd.reasons.empty();
        retained += rd.retained ? 1 : 0;
        d.rooms.push_back(std::move(rd));
    }
    if (retained == 0) d.reasons.push_back("no room retained");
    d.accepted = d.reasons.empty();
    return d;
}

}  // namespace spatialgen
