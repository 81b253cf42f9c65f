#pragma once

#include "spatialgen/common.hpp"
#include "spatialgen/palette.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace spatialgen {

// Yaw is counterclockwise about +Z seen from above, in [-pi, pi).
double normalize_yaw(double yaw);

struct SemanticBox {
    int id = 0;
    Vec3 center = Vec3::Zero();
    Vec3 size = Vec3::Ones();  // full extents along the local axes
    double yaw = 0.0;
    CategoryId category = category::kFirstObject;

    Mat3 rotation() const;
    // Footprint corners (counterclockwise) in the floor plane.
    std::array<Vec2, 4> footprint() const;
};

// Corner i has local offset ((bit0 ? +1 : -1) sx/2, (bit1 ? +1 : -1) sy/2, (bit2 ? +1 : -1) sz/2).
std::array<Vec3, 8> box_corners(const SemanticBox& box);

enum class ArchKind { Wall, Door, Window };
const char* to_string(ArchKind kind);
CategoryId arch_category(ArchKind kind);

struct ArchQuad {
    ArchKind kind = ArchKind::Wall;
    std::array<Vec3, 4> corners;

    CategoryId category() const { return arch_category(kind); }
    Vec3 normal() const;  // from the counterclockwise corner order
    double area() const;
};

struct RoomPolygon {
    std::vector<Vec2> vertices;
    double floor_z = 0.0;
    double ceiling_z = 2.8;

    double area() const;          // absolute shoelace area
    double signed_area() const;   // > 0 for counterclockwise
    Vec2 centroid() const;
    bool contains(const Vec2& p) const;
    bool is_simple() const;
    // Distance from p to the nearest polygon edge.
    double edge_distance(const Vec2& p) const;
};

struct SceneLayout {
    std::vector<RoomPolygon> rooms;
    std::vector<SemanticBox> boxes;
    std::vector<ArchQuad> arch;
    std::string room_type;

    // Index of the room containing the box footprint centroid (first match),
    // or -1 when the box lies outside every room.
    int room_of(const SemanticBox& box) const;
    double floor_area() const;
};

inline constexpr int kLayoutSchemaVersion = 1;

// Parses and validates layout-JSON. Schema errors carry the JSON field path in
// Error::where(); invariant errors carry "box <id>" (or the room/arch path).
SceneLayout load_layout(std::string_view document,
                        const CategoryPalette& palette = CategoryPalette::standard());
// Canonical form: fixed key order, yaw normalized.
std::string save_layout(const SceneLayout& layout, int indent = 2);

// Keeps boxes whose three edges lie in [0.1, 1.8] m and whose footprint
// centroid is inside a room polygon. Order is preserved.
SceneLayout filter_objects(const SceneLayout& layout);

inline constexpr double kMinObjectEdge = 0.1;
inline constexpr double kMaxObjectEdge = 1.8;
inline constexpr double kMinSceneArea = 20.0;
inline constexpr int kMinSceneObjects = 35;
inline constexpr double kMinRoomArea = 8.0;
inline constexpr int kMinRoomObjects = 3;

struct RoomDecision {
    int room = 0;
    double area = 0.0;
    int objects = 0;
    bool retained = false;
    std::vector<std::string> reasons;
};

struct CurationDecision {
    bool accepted = false;
    double floor_area = 0.0;
    int objects = 0;          // after filter_objects
    int objects_removed = 0;  // by filter_objects
    std::vector<std::string> reasons;
    std::vector<RoomDecision> rooms;
};

// Scene-level: floor area > 20 m^2, more than 35 objects, at least one
// rendering. Room-level: area > 8 m^2 and more than 3 objects. Objects are
// counted after filter_objects. All thresholds are strict.
CurationDecision curate(const SceneLayout& scene, int panorama_count);

}  // namespace spatialgen
