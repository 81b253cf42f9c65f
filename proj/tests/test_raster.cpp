#include "spatialgen/raster.hpp"
#include "spatialgen/rng.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace spatialgen;
using spatialgen::testing::make_box;
using spatialgen::testing::make_view;
using spatialgen::testing::rect_room;

namespace {

// Random boxes (overlaps allowed), a door and a window, in an L-shaped room.
SceneLayout random_layout(Rng& rng) {
    SceneLayout s;
    RoomPolygon room;
    room.vertices = {Vec2(0, 0), Vec2(5, 0), Vec2(5, 3), Vec2(3, 3), Vec2(3, 5), Vec2(0, 5)};
    room.ceiling_z = 2.7;
    s.rooms.push_back(room);
    const int n = static_cast<int>(rng.below(8));
    for (int i = 0; i < n; ++i) {
        const Vec3 size(rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.8));
        s.boxes.push_back(make_box(i, Vec3(rng.uniform(0.5, 2.5), rng.uniform(0.5, 4.5), rng.uniform(0.1, 1.5)), size,
                                   rng.uniform(-kPi, kPi),
                                   static_cast<CategoryId>(category::kFirstObject + rng.below(category::kObjectCount))));
    }
    ArchQuad door;
    door.kind = ArchKind::Door;
    door.corners = {Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(2, 0, 2), Vec3(1, 0, 2)};
    ArchQuad window;
    window.kind = ArchKind::Window;
    window.corners = {Vec3(0, 1, 1), Vec3(0, 1, 2), Vec3(0, 2.5, 2), Vec3(0, 2.5, 1)};
    s.arch = {door, window};
    return s;
}

CameraView random_view(Rng& rng, int size) {
    const Vec3 pos(rng.uniform(0.3, 2.7), rng.uniform(0.3, 4.7), rng.uniform(0.5, 2.2));
    return make_view(pos, rng.uniform(-kPi, kPi), rng.uniform(-0.6, 0.6), size, rng.uniform(1.0, 2.0));
}

}  // namespace

TEST_CASE("frontal wall: constant depth and wall semantics") {
    SceneLayout s;
    s.rooms.push_back(rect_room(0, 0, 4, 4));
    const auto v = make_view(Vec3(2, 3, 1.4), kPi / 2, 0.0, 16, kPi / 3);
    const auto r = rasterize_layout(s, v);
    for (int i = 0; i < 256; ++i) {
        CHECK(r.semantic.data[static_cast<std::size_t>(i)] == category::kWall);
        CHECK(std::fabs(r.depth.data[static_cast<std::size_t>(i)] - 1.0) < 1e-9);
    }
}

TEST_CASE("empty layout rasterizes to void") {
    const auto r = rasterize_layout(SceneLayout{}, make_view(Vec3::Zero(), 0, 0, 8));
    for (auto id : r.semantic.data) CHECK(id == category::kVoid);
    for (double d : r.depth.data) CHECK(d == 0.0);
}

TEST_CASE("a box in front of the wall overwrites it, matching the ray-cast oracle") {
    SceneLayout s;
    s.rooms.push_back(rect_room(0, 0, 4, 4));
    s.boxes.push_back(make_box(0, Vec3(2, 3.5, 1.4), Vec3(0.4, 0.4, 0.4), 0.3, 20));
    const auto v = make_view(Vec3(2, 1, 1.4), kPi / 2, 0.0, 32, kPi / 3);
    const auto r = rasterize_layout(s, v);
    const auto o = raycast_layout_reference(s, v);
    CHECK(r.semantic == o.semantic);
    int box_pixels = 0;
    for (std::size_t i = 0; i < r.depth.data.size(); ++i) {
        CHECK(std::fabs(r.depth.data[i] - o.depth.data[i]) <= 1e-4);
        box_pixels += r.semantic.data[i] == 20;
    }
    CHECK(box_pixels > 0);
    CHECK(r.semantic.at(16, 16) == 20);
}

TEST_CASE("door overlay wins the coplanar tie with the wall") {
    SceneLayout s;
    s.rooms.push_back(rect_room(0, 0, 4, 4));
    ArchQuad door;
    door.kind = ArchKind::Door;
    door.corners = {Vec3(1.5, 4, 0), Vec3(2.5, 4, 0), Vec3(2.5, 4, 2), Vec3(1.5, 4, 2)};
    s.arch.push_back(door);
    const auto v = make_view(Vec3(2, 3, 1.0), kPi / 2, 0.0, 15, kPi / 3);
    const auto r = rasterize_layout(s, v);
    CHECK(r.semantic.at(7, 7) == category::kDoor);
    CHECK(r.semantic == raycast_layout_reference(s, v).semantic);
}

TEST_CASE("rasterizer agrees with the brute-force ray caster on random layouts") {
    Rng rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const auto s = random_layout(rng);
        const auto v = random_view(rng, 32);
        const auto r = rasterize_layout(s, v);
        const auto o = raycast_layout_reference(s, v);
        int mismatched = 0;
        double worst = 0.0;
        for (std::size_t i = 0; i < r.depth.data.size(); ++i) {
            mismatched += r.semantic.data[i] != o.semantic.data[i];
            worst = std::max(worst, std::fabs(r.depth.data[i] - o.depth.data[i]));
        }
        CHECK(mismatched == 0);
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("parallel and serial rasterization are identical") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const auto s = random_layout(rng);
        const auto v = random_view(rng, 40);
        const auto a = rasterize_layout(s, v, Exec::Parallel);
        const auto b = rasterize_layout(s, v, Exec::Serial);
        CHECK(a.semantic == b.semantic);
        CHECK(a.depth == b.depth);
    }
}

TEST_CASE("void pixels are exactly the zero-depth pixels") {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        auto s = random_layout(rng);
        if (trial % 2) s.rooms.clear();
        const auto r = rasterize_layout(s, random_view(rng, 24));
        for (std::size_t i = 0; i < r.depth.data.size(); ++i) {
            CHECK((r.semantic.data[i] == category::kVoid) == (r.depth.data[i] == 0.0));
        }
    }
}

TEST_CASE("removing a box never decreases depth") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        auto s = random_layout(rng);
        if (s.boxes.empty()) continue;
        const auto v = random_view(rng, 24);
        const auto before = rasterize_layout(s, v);
        s.boxes.erase(s.boxes.begin() + static_cast<std::ptrdiff_t>(rng.below(s.boxes.size())));
        const auto after = rasterize_layout(s, v);
        for (std::size_t i = 0; i < before.depth.data.size(); ++i) {
            if (before.depth.data[i] == 0.0) continue;
            CHECK(after.depth.data[i] >= before.depth.data[i] - 1e-12);
        }
    }
}

TEST_CASE("depth_to_scm examples") {
    CameraView v{Intrinsics{50, 50, 4.5, 4.5, 9, 9}, Pose{}};
    DepthMap d(9, 9, 1, 3.0);
    const auto scm = depth_to_scm(d, v);
    CHECK(scm.xyz.at(4, 4, 0) == 0.0);
    CHECK(scm.xyz.at(4, 4, 1) == 0.0);
    CHECK(scm.xyz.at(4, 4, 2) == 3.0);
    CHECK(scm.valid_count() == 81);
    const auto none = depth_to_scm(DepthMap(9, 9, 1, 0.0), v);
    CHECK(none.valid_count() == 0);
    for (double x : none.xyz.data) CHECK(x == 0.0);
}

TEST_CASE("scm_to_depth inverts depth_to_scm") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        SceneLayout s = random_layout(rng);
        const auto v = random_view(rng, 20);
        const auto r = rasterize_layout(s, v);
        const auto back = scm_to_depth(depth_to_scm(r.depth, v), v);
        CHECK(back.inconsistent == 0);
        for (std::size_t i = 0; i < r.depth.data.size(); ++i) CHECK(std::fabs(back.depth.data[i] - r.depth.data[i]) <= 1e-6);
    }
}

TEST_CASE("scm_to_depth: points behind the camera and misplaced points") {
    CameraView v{Intrinsics{50, 50, 2, 2, 4, 4}, Pose{}};
    auto scm = depth_to_scm(DepthMap(4, 4, 1, 2.0), v);
    scm.xyz.at(1, 1, 2) = -2.0;
    scm.xyz.at(2, 2, 0) += 1.0;  // reprojects far from its own pixel
    const auto r = scm_to_depth(scm, v);
    CHECK(r.depth.at(1, 1) == 0.0);
    CHECK(r.inconsistent == 1);
}

TEST_CASE("translated pose shifts the depth of a world z-plane by the translation") {
    // Camera looking straight down (+z_cam = -Z world) at the plane Z = 0.
    Pose down;
    down.rotation << 1, 0, 0, 0, -1, 0, 0, 0, -1;
    down.translation = Vec3(0.3, -0.2, 2.0);
    CameraView v{Intrinsics::from_fov(1.0, 10, 10), down};
    DepthMap d(10, 10, 1, 2.0);
    const auto scm = depth_to_scm(d, v);
    for (int i = 0; i < 100; ++i) CHECK(std::fabs(scm.xyz.data[3 * static_cast<std::size_t>(i) + 2]) < 1e-12);
    auto raised = v;
    raised.pose.translation.z() = 3.5;
    const auto r = scm_to_depth(scm, raised);
    for (double z : r.depth.data) CHECK(z == doctest::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("ear clipping covers the polygon area") {
    const std::vector<Vec2> poly = {Vec2(0, 0), Vec2(5, 0), Vec2(5, 3), Vec2(3, 3), Vec2(3, 5), Vec2(0, 5)};
    const auto tris = ear_clip(poly);
    CHECK(tris.size() == 4);
    double area = 0;
    for (const auto& t : tris) {
        const Vec2 a = poly[t[0]], b = poly[t[1]], c = poly[t[2]];
        area += 0.5 * std::fabs((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
    }
    CHECK(area == doctest::Approx(21.0));
}
