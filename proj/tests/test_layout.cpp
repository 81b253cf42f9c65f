#include "spatialgen/layout.hpp"
#include "spatialgen/rng.hpp"
#include "support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <sstream>

using namespace spatialgen;
using spatialgen::testing::make_box;
using spatialgen::testing::rect_room;

namespace {

std::string one_box_doc(const std::string& size, double yaw) {
    std::ostringstream y;
    y.precision(17);
    y << yaw;
    return R"({"version":1,"rooms":[{"vertices":[[0,0],[4,0],[4,4],[0,4]],"floor_z":0,"ceiling_z":2.8}],
               "boxes":[{"id":7,"center":[1,1,0.5],"size":)" +
           size + R"(,"yaw":)" + y.str() + R"(,"category":10}],"arch":[],"room_type":"bedroom"})";
}

SceneLayout grid_scene(int rooms_x, double room_side, int boxes_per_room) {
    SceneLayout s;
    int id = 0;
    for (int r = 0; r < rooms_x; ++r) {
        const double x0 = r * room_side;
        s.rooms.push_back(rect_room(x0, 0, x0 + room_side, room_side));
        for (int b = 0; b < boxes_per_room; ++b) {
            const double t = (b + 0.5) / boxes_per_room;
            s.boxes.push_back(make_box(id++, Vec3(x0 + 0.2 + t * (room_side - 0.4), room_side / 2, 0.25), Vec3(0.2, 0.2, 0.5)));
        }
    }
    return s;
}

}  // namespace

TEST_CASE("yaw is normalized into [-pi, pi)") {
    const auto layout = load_layout(one_box_doc("[1,1,1]", 3 * kPi / 2));
    REQUIRE(layout.boxes.size() == 1);
    CHECK(layout.boxes[0].yaw == doctest::Approx(-kPi / 2).epsilon(1e-12));
    CHECK(normalize_yaw(kPi) == doctest::Approx(-kPi));
    CHECK(normalize_yaw(-kPi) == -kPi);
    CHECK(normalize_yaw(0.25) == 0.25);
}

TEST_CASE("degenerate box extent names the box id") {
    try {
        load_layout(one_box_doc("[1,0,1]", 0.0));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Invariant);
        CHECK(e.where() == "box 7");
    }
}

TEST_CASE("schema errors carry the field path") {
    try {
        load_layout(one_box_doc("[1,\"a\",1]", 0.0));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Schema);
        CHECK(e.where() == "$.boxes[0].size[1]");
    }
    CHECK_THROWS_AS(load_layout(R"({"rooms":[],"boxes":[],"arch":[]})"), Error);
    CHECK_THROWS_AS(load_layout("not json"), Error);
}

TEST_CASE("save/load round trip is the identity on the canonical form") {
    const auto once = load_layout(one_box_doc("[1,2,0.5]", 3 * kPi / 2));
    const std::string canon = save_layout(once);
    const auto twice = load_layout(canon);
    CHECK(save_layout(twice) == canon);
    CHECK(twice.boxes[0].yaw == once.boxes[0].yaw);
    CHECK(twice.room_type == "bedroom");
}

TEST_CASE("arch quads must be coplanar and non-degenerate") {
    auto doc = nlohmann::json::parse(one_box_doc("[1,1,1]", 0));
    doc["arch"] = {{{"kind", "door"}, {"corners", {{1, 0, 0}, {2, 0, 0}, {2, 0, 2}, {1, 0.01, 2}}}}};
    CHECK_THROWS_AS(load_layout(doc.dump()), Error);
    doc["arch"] = {{{"kind", "door"}, {"corners", {{1, 0, 0}, {2, 0, 0}, {2, 0, 2}, {1, 0, 2}}}}};
    const auto l = load_layout(doc.dump());
    CHECK(l.arch[0].area() == doctest::Approx(2.0));
    CHECK(l.arch[0].category() == category::kDoor);
}

TEST_CASE("box corners follow the bit pattern and rotate with yaw") {
    const auto unit = box_corners(make_box(0, Vec3::Zero(), Vec3::Ones()));
    for (int i = 0; i < 8; ++i) {
        CHECK(unit[i].x() == ((i & 1) ? 0.5 : -0.5));
        CHECK(unit[i].y() == ((i & 2) ? 0.5 : -0.5));
        CHECK(unit[i].z() == ((i & 4) ? 0.5 : -0.5));
    }
    const auto rot = box_corners(make_box(0, Vec3::Zero(), Vec3(2, 1, 1), kPi / 2));
    double xmax = 0, ymax = 0;
    for (const auto& c : rot) {
        xmax = std::max(xmax, std::fabs(c.x()));
        ymax = std::max(ymax, std::fabs(c.y()));
    }
    CHECK(xmax == doctest::Approx(0.5));
    CHECK(ymax == doctest::Approx(1.0));
}

TEST_CASE("corner centroid equals the center; pairwise distances ignore yaw") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 center(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 2));
        const Vec3 size(rng.uniform(0.1, 2), rng.uniform(0.1, 2), rng.uniform(0.1, 2));
        const auto a = box_corners(make_box(0, center, size, rng.uniform(-kPi, kPi)));
        const auto b = box_corners(make_box(0, center, size, 0.0));
        Vec3 sum = Vec3::Zero();
        for (const auto& c : a) sum += c;
        CHECK((sum / 8 - center).norm() < 1e-9);
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) CHECK(std::fabs((a[i] - a[j]).norm() - (b[i] - b[j]).norm()) < 1e-9);
    }
}

TEST_CASE("filter_objects drops out-of-range edges and outside boxes") {
    SceneLayout s;
    s.rooms.push_back(rect_room(0, 0, 4, 4));
    s.boxes.push_back(make_box(0, Vec3(1, 1, 0.25), Vec3(0.5, 0.5, 0.5)));
    s.boxes.push_back(make_box(1, Vec3(2, 2, 0.25), Vec3(0.05, 0.5, 0.5)));
    s.boxes.push_back(make_box(2, Vec3(3, 3, 0.25), Vec3(0.5, 2.0, 0.5)));
    s.boxes.push_back(make_box(3, Vec3(6, 1, 0.25), Vec3(0.5, 0.5, 0.5)));
    s.boxes.push_back(make_box(4, Vec3(2, 1, 0.25), Vec3(0.1, 1.8, 0.2)));
    const auto f = filter_objects(s);
    REQUIRE(f.boxes.size() == 2);
    CHECK(f.boxes[0].id == 0);
    CHECK(f.boxes[1].id == 4);
    CHECK(save_layout(filter_objects(f)) == save_layout(f));
}

TEST_CASE("filter_objects output is an order-preserving subset and idempotent") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        SceneLayout s;
        s.rooms.push_back(rect_room(0, 0, 5, 5));
        for (int i = 0; i < 30; ++i) {
            s.boxes.push_back(make_box(i, Vec3(rng.uniform(-1, 6), rng.uniform(-1, 6), 0.5),
                                       Vec3(rng.uniform(0.02, 2.2), rng.uniform(0.02, 2.2), rng.uniform(0.02, 2.2))));
        }
        const auto f = filter_objects(s);
        std::size_t j = 0;
        for (const auto& b : f.boxes) {
            while (j < s.boxes.size() && s.boxes[j].id != b.id) ++j;
            REQUIRE(j < s.boxes.size());
        }
        CHECK(filter_objects(f).boxes.size() == f.boxes.size());
    }
}

TEST_CASE("curation thresholds are strict") {
    SUBCASE("scene area 18 is rejected for floor area") {
        auto s = grid_scene(2, 3.0, 20);  // 18 m^2, 40 objects
        const auto d = curate(s, 1);
        CHECK_FALSE(d.accepted);
        bool found = false;
        for (const auto& r : d.reasons) found = found || r.find("floor area") != std::string::npos;
        CHECK(found);
    }
    SUBCASE("35 objects is rejected, 36 accepted") {
        auto s35 = grid_scene(3, 3.0, 0);  // 27 m^2
        auto s36 = s35;
        for (int i = 0; i < 36; ++i) {
            const int room = i % 3;
            s36.boxes.push_back(make_box(i, Vec3(room * 3.0 + 0.3 + 0.2 * (i / 3), 1.5, 0.25), Vec3(0.15, 0.15, 0.5)));
        }
        s35.boxes.assign(s36.boxes.begin(), s36.boxes.end() - 1);
        CHECK_FALSE(curate(s35, 1).accepted);
        CHECK(curate(s36, 1).accepted);
    }
    SUBCASE("room of 9 m^2 with 4 objects is retained") {
        auto s = grid_scene(1, 3.0, 4);
        const auto d = curate(s, 1);
        REQUIRE(d.rooms.size() == 1);
        CHECK(d.rooms[0].retained);
        auto s3 = grid_scene(1, 3.0, 3);
        CHECK_FALSE(curate(s3, 1).rooms[0].retained);
    }
    SUBCASE("a scene needs at least one rendering") {
        auto s = grid_scene(3, 3.0, 13);
        CHECK(curate(s, 1).accepted);
        CHECK_FALSE(curate(s, 0).accepted);
    }
}

TEST_CASE("room geometry helpers") {
    const auto r = rect_room(0, 0, 3, 2);
    CHECK(r.area() == doctest::Approx(6.0));
    CHECK(r.signed_area() > 0);
    CHECK(r.contains(Vec2(1, 1)));
    CHECK_FALSE(r.contains(Vec2(4, 1)));
    CHECK(r.edge_distance(Vec2(1, 1)) == doctest::Approx(1.0));
    CHECK((r.centroid() - Vec2(1.5, 1.0)).norm() < 1e-12);
    RoomPolygon bow;
    bow.vertices = {Vec2(0, 0), Vec2(1, 1), Vec2(1, 0), Vec2(0, 1)};
    CHECK_FALSE(bow.is_simple());
}

TEST_CASE("palette has 62 object categories and round-trips through JSON") {
    const auto& p = CategoryPalette::standard();
    CHECK(p.size() == 68);
    int objects = 0;
    for (CategoryId i = 0; i < p.size(); ++i) objects += p.is_object(i) ? 1 : 0;
    CHECK(objects == 62);
    const auto q = CategoryPalette::from_json(p.to_json());
    for (CategoryId i = 0; i < p.size(); ++i) {
        CHECK(q[i].name == p[i].name);
        CHECK(q[i].rgb == p[i].rgb);
    }
    CHECK(p.find("wall") == category::kWall);
}
