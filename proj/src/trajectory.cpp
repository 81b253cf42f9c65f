#include "spatialgen/trajectory.hpp"
#include "spatialgen/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace spatialgen {
namespace {

double footprint_distance(const SemanticBox& box, const Vec2& p) {
    // Work in the box frame: distance to an axis-aligned rectangle.
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const Vec2 d(p.x() - box.center.x(), p.y() - box.center.y());
    const Vec2 local(c * d.x() + s * d.y(), -s * d.x() + c * d.y());
    const double ex = std::max(std::fabs(local.x()) - box.size.x() / 2, 0.0);
    const double ey = std::max(std::fabs(local.y()) - box.size.y() / 2, 0.0);
    return std::hypot(ex, ey);
}

const RoomPolygon& room_at(const SceneLayout& layout, int room) {
    if (room < 0 || room >= static_cast<int>(layout.rooms.size())) {
        throw Error(ErrorKind::InvalidInput, "layout has no room " + std::to_string(room), "room");
    }
    return layout.rooms[static_cast<std::size_t>(room)];
}

struct Bounds2 {
    Vec2 lo, hi;
};

Bounds2 bounds(const RoomPolygon& r) {
    Bounds2 b{Vec2::Constant(std::numeric_limits<double>::infinity()),
              Vec2::Constant(-std::numeric_limits<double>::infinity())};
    for (const auto& v : r.vertices) {
        b.lo = b.lo.cwiseMin(v);
        b.hi = b.hi.cwiseMax(v);
    }
    return b;
}

Vec2 random_point(Rng& rng, const Bounds2& b) {
    return {rng.uniform(b.lo.x(), b.hi.x()), rng.uniform(b.lo.y(), b.hi.y())};
}

CameraView make_view(const TrajectoryParams& p, const Pose& pose) {
    CameraView v;
    v.intrinsics = Intrinsics::from_fov(p.fov, p.width, p.height);
    v.pose = pose;
    return v;
}

[[noreturn]] void placement_failure(TrajectoryPattern pattern, const std::string& detail) {
    throw Error(ErrorKind::PlacementFailure,
                std::string("cannot place a ") + to_string(pattern) + " trajectory: " + detail, to_string(pattern));
}

}  // namespace

const char* to_string(TrajectoryPattern p) {
    switch (p) {
        case TrajectoryPattern::Forward: return "forward";
        case TrajectoryPattern::InwardOrbit: return "inward_orbit";
        case TrajectoryPattern::OutwardOrbit: return "outward_orbit";
        case TrajectoryPattern::RandomWalk: return "random_walk";
    }
    return "forward";
}

TrajectoryPattern parse_pattern(std::string_view name) {
    if (name == "forward") return TrajectoryPattern::Forward;
    if (name == "inward_orbit") return TrajectoryPattern::InwardOrbit;
    if (name == "outward_orbit") return TrajectoryPattern::OutwardOrbit;
    if (name == "random_walk") return TrajectoryPattern::RandomWalk;
    throw Error(ErrorKind::InvalidInput, "unknown trajectory pattern '" + std::string(name) + "'", "pattern");
}

bool position_clear(const SceneLayout& layout, int room, const Vec2& p, double clearance) {
    const RoomPolygon& r = room_at(layout, room);
    if (!r.contains(p) || r.edge_distance(p) < clearance) return false;
    for (const auto& b : layout.boxes) {
        if (footprint_distance(b, p) < clearance) return false;
    }
    return true;
}

Trajectory gen_trajectory(const SceneLayout& layout, TrajectoryPattern pattern, const TrajectoryParams& params) {
    if (params.count < 2) throw Error(ErrorKind::InvalidInput, "a trajectory needs at least 2 views", "count");
    if (!(params.spacing > 0)) throw Error(ErrorKind::InvalidInput, "spacing must be positive", "spacing");
    const RoomPolygon& room = room_at(layout, params.room);
    const double z = room.floor_z + params.camera_height;
    if (!(z < room.ceiling_z)) throw Error(ErrorKind::InvalidInput, "camera above the ceiling", "camera_height");
    const Bounds2 bb = bounds(room);
    const Vec2 centroid = room.centroid();
    auto clear = [&](const Vec2& p) { return position_clear(layout, params.room, p, params.clearance); };
    Rng rng(params.seed);

    Trajectory traj;
    traj.pattern = pattern;
    const int n = params.count;

    switch (pattern) {
        case TrajectoryPattern::Forward: {
            for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
                const Vec2 start = random_point(rng, bb);
                const double heading = rng.uniform(-kPi, kPi);
                const Vec2 dir(std::cos(heading), std::sin(heading));
                bool ok = true;
                for (int i = 0; i < n && ok; ++i) ok = clear(start + (i * params.spacing) * dir);
                if (!ok) continue;
                for (int i = 0; i < n; ++i) {
                    const Vec2 p = start + (i * params.spacing) * dir;
                    traj.views.push_back(make_view(params, Pose::from_yaw_pitch(Vec3(p.x(), p.y(), z), heading)));
                }
                return traj;
            }
            placement_failure(pattern, std::to_string(n) + " collinear views at " + std::to_string(params.spacing) + " m");
        }
        case TrajectoryPattern::InwardOrbit: {
            const double r_max = room.edge_distance(centroid) - params.clearance;
            if (!room.contains(centroid) || r_max <= 0) placement_failure(pattern, "room too small for an orbit");
            const double r_min = std::min(0.5, r_max);
            for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
                const double radius = rng.uniform(r_min, r_max);
                const double phase = rng.uniform(-kPi, kPi);
                std::vector<Vec2> pos;
                bool ok = true;
                for (int i = 0; i < n && ok; ++i) {
                    const double a = phase + 2.0 * kPi * i / n;
                    pos.emplace_back(centroid + radius * Vec2(std::cos(a), std::sin(a)));
                    ok = clear(pos.back());
                }
                if (!ok) continue;
                const Vec3 target(centroid.x(), centroid.y(), z);
                for (const auto& p : pos) {
                    traj.views.push_back(make_view(params, Pose::look_at(Vec3(p.x(), p.y(), z), target)));
                }
                return traj;
            }
            placement_failure(pattern, "no collision-free circle about the room centroid");
        }
        case TrajectoryPattern::OutwardOrbit: {
            // Nearest clear point to the centroid on a polar search grid.
            std::optional<Vec2> center;
            const double reach = (bb.hi - bb.lo).norm();
            for (double rad = 0.0; rad <= reach && !center; rad += 0.05) {
                const int steps = rad == 0.0 ? 1 : 32;
                for (int k = 0; k < steps; ++k) {
                    const double a = 2.0 * kPi * k / steps;
                    const Vec2 p = centroid + rad * Vec2(std::cos(a), std::sin(a));
                    if (clear(p)) {
                        center = p;
                        break;
                    }
                }
            }
            if (!center) placement_failure(pattern, "no clear standing point");
            const double phase = rng.uniform(-kPi, kPi);
            for (int i = 0; i < n; ++i) {
                const double yaw = phase + 2.0 * kPi * i / n;
                traj.views.push_back(make_view(params, Pose::from_yaw_pitch(Vec3(center->x(), center->y(), z), yaw)));
            }
            return traj;
        }
        case TrajectoryPattern::RandomWalk: {
            constexpr int kStepTries = 64;
            for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
                Vec2 p = random_point(rng, bb);
                if (!clear(p)) continue;
                double heading = rng.uniform(-kPi, kPi);
                std::vector<Vec2> pos{p};
                std::vector<double> yaw;
                bool stuck = false;
                while (static_cast<int>(pos.size()) < n && !stuck) {
                    stuck = true;
                    for (int t = 0; t < kStepTries; ++t) {
                        // Late tries turn freely so the walk can leave dead ends.
                        const double h = t < kStepTries / 2 ? heading + 0.6 * rng.normal() : rng.uniform(-kPi, kPi);
                        const double len = params.spacing * (1.0 - 0.5 * rng.uniform());
                        const Vec2 q = p + len * Vec2(std::cos(h), std::sin(h));
                        if (!clear(q) || !clear(0.5 * (p + q))) continue;
                        heading = std::atan2(q.y() - p.y(), q.x() - p.x());
                        yaw.push_back(heading);
                        pos.push_back(q);
                        p = q;
                        stuck = false;
                        break;
                    }
                }
                if (stuck) continue;
                // The first view looks along the first step.
                yaw.insert(yaw.begin(), yaw.front());
                for (int i = 0; i < n; ++i) {
                    traj.views.push_back(make_view(
                        params, Pose::from_yaw_pitch(Vec3(pos[static_cast<std::size_t>(i)].x(),
                                                          pos[static_cast<std::size_t>(i)].y(), z),
                                                     yaw[static_cast<std::size_t>(i)])));
                }
                return traj;
            }
            placement_failure(pattern, "random walk kept running into obstacles");
        }
    }
    placement_failure(pattern, "unknown pattern");
}

std::string save_trajectory(const Trajectory& t, int indent) {
    nlohmann::ordered_json doc;
    doc["pattern"] = to_string(t.pattern);
    doc["views"] = nlohmann::ordered_json::array();
    for (const auto& v : t.views) {
        nlohmann::ordered_json jv;
        const auto& k = v.intrinsics;
        jv["fx"] = k.fx;
        jv["fy"] = k.fy;
        jv["cx"] = k.cx;
        jv["cy"] = k.cy;
        jv["width"] = k.width;
        jv["height"] = k.height;
        jv["rotation"] = nlohmann::ordered_json::array();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) jv["rotation"].push_back(v.pose.rotation(r, c));
        jv["translation"] = {v.pose.translation.x(), v.pose.translation.y(), v.pose.translation.z()};
        doc["views"].push_back(std::move(jv));
    }
    return doc.dump(indent);
}

Trajectory load_trajectory(std::string_view document) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(document);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Schema, std::string("trajectory parse error: ") + e.what(), "$");
    }
    Trajectory t;
    try {
        t.pattern = parse_pattern(doc.at("pattern").get<std::string>());
        const auto& views = doc.at("views");
        for (std::size_t i = 0; i < views.size(); ++i) {
            const auto& jv = views[i];
            CameraView v;
            v.intrinsics.fx = jv.at("fx").get<double>();
            v.intrinsics.fy = jv.at("fy").get<double>();
            v.intrinsics.cx = jv.at("cx").get<double>();
            v.intrinsics.cy = jv.at("cy").get<double>();
            v.intrinsics.width = jv.at("width").get<int>();
            v.intrinsics.height = jv.at("height").get<int>();
            const auto& rot = jv.at("rotation");
            const auto& tr = jv.at("translation");
            if (rot.size() != 9 || tr.size() != 3) {
                throw Error(ErrorKind::Schema, "rotation needs 9 and translation 3 entries",
                            "$.views[" + std::to_string(i) + "]");
            }
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) v.pose.rotation(r, c) = rot[static_cast<std::size_t>(3 * r + c)].get<double>();
            for (int c = 0; c < 3; ++c) v.pose.translation[c] = tr[static_cast<std::size_t>(c)].get<double>();
            v.validate();
            t.views.push_back(v);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("trajectory schema: ") + e.what(), "$");
    }
    return t;
}

}  // namespace spatialgen
