#include "spatialgen/fusion.hpp"
#include "spatialgen/nn.hpp"
#include "spatialgen/raster.hpp"
#include "spatialgen/rng.hpp"
#include "spatialgen/synth.hpp"
#include "spatialgen/trajectory.hpp"
#include "spatialgen/warp.hpp"

#include <benchmark/benchmark.h>

using namespace spatialgen;

namespace {

// Range 0 selects the kernel: 0 serial, 1 OpenMP.
Exec exec_of(const benchmark::State& state) { return state.range(0) == 0 ? Exec::Serial : Exec::Parallel; }

struct Fixture {
    SynthScene scene = gen_scene(4, Difficulty::Cluttered);
    std::vector<CameraView> views;
    GlobalPointCloud cloud;

    Fixture() {
        TrajectoryParams p;
        p.count = 4;
        p.width = p.height = 128;
        p.seed = 4;
        views = gen_trajectory(scene.layout, TrajectoryPattern::InwardOrbit, p).views;
        for (int v = 0; v < 3; ++v) insert_scm(cloud, render_gt(scene, views[static_cast<std::size_t>(v)]), v);
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

void BM_Rasterize(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(rasterize_layout(f.scene.layout, f.views[3], exec_of(state)));
}
BENCHMARK(BM_Rasterize)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_RenderGroundTruth(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(render_gt(f.scene, f.views[3], exec_of(state)));
}
BENCHMARK(BM_RenderGroundTruth)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Splat(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(splat(f.cloud, f.views[3], kDefaultSplatRadius, exec_of(state)));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.cloud.size()));
}
BENCHMARK(BM_Splat)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
    const auto& f = fixture();
    const auto a = render_gt(f.scene, f.views[2]).color;
    const auto b = render_gt(f.scene, f.views[3]).color;
    for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b, exec_of(state)));
}
BENCHMARK(BM_Ssim)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// Range 0: 0 brute force, 1 uniform grid.
void BM_Chamfer(benchmark::State& state) {
    const auto& f = fixture();
    // The same surfaces with 5 mm jitter, as when scoring a generated cloud.
    GlobalPointCloud other = f.cloud;
    Rng rng(8);
    for (auto& p : other.points) p.position += 0.005 * Vec3(rng.normal(), rng.normal(), rng.normal());
    const auto mode = state.range(0) == 0 ? ChamferMode::BruteForce : ChamferMode::Grid;
    for (auto _ : state) benchmark::DoNotOptimize(chamfer(f.cloud, other, 2000, 1, mode));
}
BENCHMARK(BM_Chamfer)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// Eight views of 64 tokens, width 64, four heads, grouped by view.
// Range 0: 0 per-query double reference, 1 tape kernel.
void BM_Attention(benchmark::State& state) {
    constexpr int views = 8, tokens = 64, width = 64, heads = 4;
    Rng rng(3);
    nn::Mat<double> q(views * tokens, width), k(views * tokens, width), v(views * tokens, width);
    for (auto* m : {&q, &k, &v})
        for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.normal();
    nn::Groups groups(views);
    for (int g = 0; g < views; ++g)
        for (int t = 0; t < tokens; ++t) groups[static_cast<std::size_t>(g)].push_back(g * tokens + t);
    const nn::Mat<float> qf = q.cast<float>(), kf = k.cast<float>(), vf = v.cast<float>();
    for (auto _ : state) {
        if (state.range(0) == 0) {
            benchmark::DoNotOptimize(nn::attention_reference(q, k, v, groups, heads));
        } else {
            nn::Tape<float> tape;
            const auto out = tape.attention(tape.constant(qf), tape.constant(kf), tape.constant(vf), groups, heads);
            benchmark::DoNotOptimize(tape.value(out).data());
        }
    }
}
BENCHMARK(BM_Attention)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
