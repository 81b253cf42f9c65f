#include "spatialgen/fusion.hpp"
#include "spatialgen/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace spatialgen;

namespace {

CloudPoint at(Vec3 p, float conf = 2.0f, int view = 0) {
    CloudPoint c;
    c.position = p;
    c.confidence = conf;
    c.source_view = view;
    return c;
}

ColorImage random_image(Rng& rng, int w, int h) {
    ColorImage img(w, h, 3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}

std::vector<Vec3> random_points(Rng& rng, int n, double scale) {
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i) pts.emplace_back(rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(0, scale));
    return pts;
}

}  // namespace

TEST_CASE("fuse: identical points collapse to one") {
    GlobalPointCloud c;
    c.points = {at(Vec3(0.1, 0.1, 0.1)), at(Vec3(0.1, 0.1, 0.1))};
    const auto f = fuse(c, 0.05);
    CHECK(f.cloud.size() == 1);
    CHECK(f.voxel == 0.05);
    CHECK(f.points_per_view.at(0) == 1);
}

TEST_CASE("fuse: voxel below point spacing is the identity") {
    GlobalPointCloud c;
    for (int i = 0; i < 20; ++i) c.points.push_back(at(Vec3(0.1 * i, 0.05 * (i % 3), 0.0)));
    const auto f = fuse(c, 0.01);
    REQUIRE(f.cloud.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(f.cloud.points[i].position == c.points[i].position);
}

TEST_CASE("fuse keeps the max-confidence point per cell, ties to the lowest index") {
    GlobalPointCloud c;
    c.points = {at(Vec3(0.01, 0.01, 0.01), 2.0f, 0), at(Vec3(0.02, 0.02, 0.02), 3.0f, 1),
                at(Vec3(0.03, 0.03, 0.03), 3.0f, 2), at(Vec3(0.51, 0.0, 0.0), 1.5f, 3)};
    const auto f = fuse(c, 0.1);
    REQUIRE(f.cloud.size() == 2);
    CHECK(f.cloud.points[0].source_view == 1);
    CHECK(f.cloud.points[1].source_view == 3);
    CHECK_THROWS_AS(fuse(c, 0.0), Error);
    CHECK(fuse(GlobalPointCloud{}, 0.1).cloud.empty());
}

TEST_CASE("fuse is idempotent and never grows the cloud") {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        GlobalPointCloud c;
        for (const auto& p : random_points(rng, 500, 1.0)) c.points.push_back(at(p, static_cast<float>(rng.uniform(1.1, 3)), trial));
        const auto once = fuse(c, 0.2);
        const auto twice = fuse(once.cloud, 0.2);
        CHECK(once.cloud.size() <= c.size());
        REQUIRE(twice.cloud.size() == once.cloud.size());
        for (std::size_t i = 0; i < once.cloud.size(); ++i) CHECK(twice.cloud.points[i].position == once.cloud.points[i].position);
    }
}

TEST_CASE("psnr examples and symmetry") {
    ColorImage zero(4, 4, 3, 0.0f), half(4, 4, 3, 0.5f);
    CHECK(psnr(zero, half) == doctest::Approx(6.020599913279624).epsilon(1e-12));
    CHECK(std::isinf(psnr(half, half)));
    Rng rng(1);
    const auto a = random_image(rng, 16, 12), b = random_image(rng, 16, 12);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK_THROWS_AS(psnr(a, ColorImage(16, 11, 3)), Error);
}

TEST_CASE("ssim: identical images score 1") {
    Rng rng(2);
    const auto a = random_image(rng, 20, 16);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim: checkerboard vs its inverse is close to -1") {
    ColorImage a(24, 24, 3), b(24, 24, 3);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
            for (int c = 0; c < 3; ++c) {
                a.at(x, y, c) = static_cast<float>((x + y) % 2);
                b.at(x, y, c) = 1.0f - a.at(x, y, c);
            }
    const double ref = ssim_reference(a, b);
    CHECK(ref < -0.95);
    CHECK(ssim(a, b) == doctest::Approx(ref).epsilon(1e-10));
}

TEST_CASE("ssim separable version matches the direct reference and is symmetric") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const int w = 11 + static_cast<int>(rng.below(20)), h = 11 + static_cast<int>(rng.below(20));
        const auto a = random_image(rng, w, h);
        auto b = a;
        for (auto& v : b.data) v = static_cast<float>(std::clamp(v + 0.2 * (rng.uniform() - 0.5), 0.0, 1.0));
        const double s = ssim(a, b);
        CHECK(std::fabs(s - ssim_reference(a, b)) < 1e-12);
        CHECK(std::fabs(s - ssim(b, a)) < 1e-12);
        CHECK(ssim(a, b, Exec::Serial) == s);
        CHECK(s <= 1.0);
        CHECK(s >= -1.0);
    }
    CHECK_THROWS_AS(ssim(ColorImage(10, 10, 3), ColorImage(10, 10, 3)), Error);
}

TEST_CASE("chamfer examples") {
    const std::vector<Vec3> a = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    const std::vector<Vec3> b = {Vec3(0, 0, 0)};
    CHECK(chamfer(a, b, 100, 0) == doctest::Approx(0.5));
    CHECK(chamfer(a, a, 100, 0) == 0.0);
    CHECK_THROWS_AS(chamfer(a, std::vector<Vec3>{}, 10, 0), Error);
}

TEST_CASE("chamfer: grid mode equals brute force and the metric is symmetric") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_points(rng, 50 + static_cast<int>(rng.below(400)), rng.uniform(0.1, 5));
        auto b = random_points(rng, 50 + static_cast<int>(rng.below(400)), rng.uniform(0.1, 5));
        if (trial % 4 == 0) {
            for (auto& p : b) p += Vec3(20, 0, 0);  // far apart clouds
        }
        const std::size_t n = trial % 2 ? 100 : 10000;
        const double grid = chamfer(a, b, n, trial, ChamferMode::Grid);
        const double brute = chamfer(a, b, n, trial, ChamferMode::BruteForce);
        CHECK(std::fabs(grid - brute) <= 1e-9);
        CHECK(chamfer(b, a, n, trial) == grid);
    }
}

TEST_CASE("metrics csv round trip keeps the infinity sentinel") {
    std::vector<ViewMetrics> rows = {{0, std::numeric_limits<double>::infinity(), 1.0}, {1, 23.5, 0.875}};
    const auto csv = metrics_csv(rows);
    CHECK(csv.find("0,inf,1") != std::string::npos);
    const auto back = parse_metrics_csv(csv);
    REQUIRE(back.size() == 2);
    CHECK(std::isinf(back[0].psnr));
    CHECK(back[1].psnr == 23.5);
    const auto summary = metrics_summary_json(rows, 0.01);
    CHECK(summary.find("\"exact_views\": 1") != std::string::npos);
}
