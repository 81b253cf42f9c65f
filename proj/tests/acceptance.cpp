// Acceptance suite: one PASS/FAIL line per criterion, each at its stated
// tolerance and runtime limit. Arguments select criteria by number.

#include "catalog.hpp"

#include "spatialgen/codec.hpp"
#include "spatialgen/diffusion.hpp"
#include "spatialgen/fusion.hpp"
#include "spatialgen/io.hpp"
#include "spatialgen/pipeline.hpp"
#include "spatialgen/raster.hpp"
#include "spatialgen/rng.hpp"
#include "spatialgen/synth.hpp"
#include "spatialgen/trajectory.hpp"
#include "spatialgen/warp.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

using namespace spatialgen;
using nn::Mat;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0: no runtime limit
    std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double max_abs_diff(const DepthMap& a, const DepthMap& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
    return worst;
}

CameraView random_camera(Rng& rng, const RoomPolygon& room, int size) {
    Vec2 lo = room.vertices[0], hi = room.vertices[0];
    for (const auto& v : room.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const Vec3 pos(rng.uniform(lo.x() + 0.3, hi.x() - 0.3), rng.uniform(lo.y() + 0.3, hi.y() - 0.3),
                   rng.uniform(room.floor_z + 0.4, room.ceiling_z - 0.4));
    const double fov = rng.uniform(60.0, 100.0) * kPi / 180.0;
    return CameraView{Intrinsics::from_fov(fov, size, size),
                      Pose::from_yaw_pitch(pos, rng.uniform(-kPi, kPi), rng.uniform(-0.6, 0.6))};
}

std::vector<CameraView> trajectory(const SceneLayout& layout, TrajectoryPattern pattern, int count, int size,
                                   std::uint64_t seed) {
    TrajectoryParams p;
    p.count = count;
    p.width = p.height = size;
    p.seed = seed;
    return gen_trajectory(layout, pattern, p).views;
}

// 1. Rasterizer against the ray caster.
Outcome geometry_oracle() {
    int views = 0, semantic_mismatch = 0;
    double worst = 0.0;
    const Difficulty levels[] = {Difficulty::Empty, Difficulty::Sparse, Difficulty::Cluttered, Difficulty::Cluttered};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto scene = gen_scene(seed, levels[seed % 4]);
        for (const auto& cam : trajectory(scene.layout, TrajectoryPattern::RandomWalk, 4, 32, seed)) {
            const auto r = rasterize_layout(scene.layout, cam);
            const auto gt = raycast_layout_reference(scene.layout, cam);
            ++views;
            for (std::size_t i = 0; i < r.semantic.data.size(); ++i) semantic_mismatch += r.semantic.data[i] != gt.semantic.data[i];
            worst = std::max(worst, max_abs_diff(r.depth, gt.depth));
        }
    }
    return {semantic_mismatch == 0 && worst <= 1e-4,
            fmt("%d views of 50 scenes, %d semantic mismatches, max depth error %.2e m", views, semantic_mismatch, worst)};
}

// 2. depth -> SCM -> depth.
Outcome scm_round_trip() {
    Rng rng(2024);
    double worst = 0.0;
    int inconsistent = 0, validity_changes = 0;
    std::size_t checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto scene = gen_scene(static_cast<std::uint64_t>(trial % 10), Difficulty::Cluttered);
        const auto cam = random_camera(rng, scene.layout.rooms[0], 32);
        const auto depth = rasterize_layout(scene.layout, cam).depth;
        const auto back = scm_to_depth(depth_to_scm(depth, cam), cam);
        inconsistent += back.inconsistent;
        for (std::size_t i = 0; i < depth.data.size(); ++i) {
            if (depth.data[i] > 0) {
                worst = std::max(worst, std::fabs(back.depth.data[i] - depth.data[i]));
                ++checked;
            } else {
                validity_changes += back.depth.data[i] != 0.0;
            }
        }
    }
    return {worst <= 1e-6 && inconsistent == 0 && validity_changes == 0 && checked > 0,
            fmt("100 poses, %zu valid pixels, max error %.2e m, %d inconsistent, %d validity changes", checked, worst,
                inconsistent, validity_changes)};
}

// 3. Self reprojection and the brute-force splat oracle.
Outcome warp_reprojection() {
    int color_mismatch = 0, oracle_mismatch = 0;
    std::size_t pixels = 0;
    Rng rng(77);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto scene = gen_scene(seed, Difficulty::Cluttered);
        const auto cams = trajectory(scene.layout, TrajectoryPattern::RandomWalk, 2, 16, seed);
        const auto maps = render_gt(scene, cams[0]);
        GlobalPointCloud cloud;
        insert_scm(cloud, maps, 0);
        const auto self = splat(cloud, cams[0], 0.5);
        for (std::size_t i = 0; i < maps.scm.valid.data.size(); ++i) {
            if (!maps.scm.valid.data[i]) continue;
            ++pixels;
            bool same = self.coverage.data[i] == 1;
            for (std::size_t c = 0; c < 3; ++c) same = same && self.color.data[3 * i + c] == maps.color.data[3 * i + c];
            color_mismatch += !same;
        }
        const double radius = rng.uniform(0.5, 2.0);
        for (const auto& cam : cams) {
            const auto ref = splat_reference(cloud, cam, radius);
            for (Exec exec : {Exec::Parallel, Exec::Serial}) {
                const auto got = splat(cloud, cam, radius, exec);
                oracle_mismatch += !(got.color == ref.color && got.coverage == ref.coverage);
            }
        }
    }
    return {color_mismatch == 0 && oracle_mismatch == 0 && pixels > 0,
            fmt("20 cases, %zu valid pixels, %d color mismatches, %d splats differing from the oracle", pixels,
                color_mismatch, oracle_mismatch)};
}

Image<double> random_image(Rng& rng, int w, int h, int c, double lo, double hi) {
    Image<double> img(w, h, c);
    for (auto& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

// Worst relative error of `grad` against central differences of `f` in x.
double fd_worst(Image<double>& x, const Image<double>& grad, const std::function<double()>& f) {
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double keep = x.data[i];
        x.data[i] = keep + h;
        const double up = f();
        x.data[i] = keep - h;
        const double down = f();
        x.data[i] = keep;
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, std::fabs(fd - grad.data[i]) / std::max(1e-6, std::fabs(fd) + std::fabs(grad.data[i])));
    }
    return worst;
}

// 4. Loss values and gradients.
Outcome loss_correctness() {
    Rng rng(4);
    const auto p = random_image(rng, 8, 8, 3, -1, 1);
    const SceneCoordMap target_p{p, Mask(8, 8, 1, 1)};
    const double value = loss_rec(p, target_p, Image<double>(8, 8, 1, 2.0)).value;
    const double expected = -0.2 * std::log(2.0);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        SceneCoordMap target{random_image(rng, 8, 8, 3, -1, 1), Mask(8, 8, 1, 1)};
        for (std::size_t i = 0; i < target.valid.data.size(); ++i) {
            if (rng.uniform() < 0.2) {
                target.valid.data[i] = 0;
                for (std::size_t c = 0; c < 3; ++c) target.xyz.data[3 * i + c] = 0.0;
            }
        }
        auto pred = random_image(rng, 8, 8, 3, -1, 1);
        auto conf = random_image(rng, 8, 8, 1, 1.05, 4.0);
        const double weight = rng.uniform(0.5, 2.0);
        const auto rec = loss_rec(pred, target, conf);
        worst = std::max(worst, fd_worst(pred, rec.d_pred, [&] { return loss_rec(pred, target, conf).value; }));
        worst = std::max(worst, fd_worst(conf, rec.d_confidence, [&] { return loss_rec(pred, target, conf).value; }));
        const auto grad = loss_grad(pred, target.xyz);
        worst = std::max(worst, fd_worst(pred, grad.d_pred, [&] { return loss_grad(pred, target.xyz).value; }));
        const auto total = total_loss(pred, target, conf, weight);
        worst = std::max(worst, fd_worst(pred, total.d_pred, [&] { return total_loss(pred, target, conf, weight).total; }));
        worst = std::max(worst, fd_worst(conf, total.d_confidence, [&] { return total_loss(pred, target, conf, weight).total; }));
    }
    return {std::fabs(value - expected) <= 1e-9 && worst < 1e-3,
            fmt("loss_rec(P,P,2) = %.12f (expected %.12f), worst gradient relative error %.2e over 10 inputs", value,
                expected, worst)};
}

// 5. Confidence activation.
Outcome confidence_activation() {
    double lowest = std::numeric_limits<double>::infinity();
    bool finite = true;
    int samples = 0;
    for (int i = -100000; i <= 100000; ++i) {
        const double c = confidence_from_raw(i * 0.01);
        lowest = std::min(lowest, c);
        finite = finite && std::isfinite(c);
        ++samples;
    }
    return {lowest > 1.0 && finite, fmt("%d raw values in [-1e3, 1e3], min c - 1 = %.3e", samples, lowest - 1.0)};
}

// 6. Scheduler identities.
Outcome scheduler_identities() {
    Rng rng(6);
    double norm = 0.0, x0_err = 0.0, eps_err = 0.0, v_err = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const auto s = schedule(rng.uniform());
        Mat<double> x0(4, 8), eps(4, 8);
        for (Eigen::Index k = 0; k < x0.size(); ++k) {
            x0.data()[k] = rng.normal();
            eps.data()[k] = rng.normal();
        }
        const auto xt = noisy_from(x0, eps, s);
        const auto v = v_target(x0, eps, s);
        norm = std::max(norm, std::fabs(s.alpha * s.alpha + s.sigma * s.sigma - 1.0));
        const auto x0_back = x0_from_v(xt, v, s);
        const auto eps_back = eps_from_v(xt, v, s);
        x0_err = std::max(x0_err, (x0_back - x0).cwiseAbs().maxCoeff());
        eps_err = std::max(eps_err, (eps_back - eps).cwiseAbs().maxCoeff());
        v_err = std::max(v_err, (v_target(x0_back, eps_back, s) - v).cwiseAbs().maxCoeff());
    }
    const double worst = std::max({norm, x0_err, eps_err, v_err});
    return {worst <= 1e-6, fmt("1000 draws: |a^2+s^2-1| %.1e, x0 %.1e, eps %.1e, v %.1e", norm, x0_err, eps_err, v_err)};
}

DenoiserConfig small_denoiser() {
    DenoiserConfig c;
    c.width = 32;
    c.depth = 2;
    c.heads = 4;
    c.image_size = 16;
    return c;
}

Mat<float> random_mat(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Mat<float> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal());
    return m;
}

Mat<float> block(const TokenTensor& t, int view, int modality) {
    return t.data.middleRows(t.layout.row(0, view, modality, 0), t.layout.tokens);
}

// 7. Attention isolation and permutation equivariance.
Outcome attention_isolation() {
    const auto model = DenoiserModel::init(small_denoiser(), 11);
    const TokenLayout layout{1, 4, kModalities, model.config.tokens_per_view(), false};
    Rng rng(12);
    const TokenTensor base{layout, random_mat(rng, layout.rows(), model.config.width)};
    int modal_leaks = 0, view_leaks = 0, unaffected = 0;
    for (int block_index = 0; block_index < model.config.depth; ++block_index) {
        for (int m = 0; m < kModalities; ++m) {
            auto perturbed = base;
            for (int v = 0; v < layout.views; ++v) perturbed.data.middleRows(layout.row(0, v, m, 0), layout.tokens).array() += 0.5f;
            const auto a = cross_view_attention(base, model, block_index);
            const auto b = cross_view_attention(perturbed, model, block_index);
            for (int v = 0; v < layout.views; ++v)
                for (int o = 0; o < kModalities; ++o) {
                    if (o == m) {
                        unaffected += block(a, v, o) == block(b, v, o);
                    } else {
                        modal_leaks += block(a, v, o) != block(b, v, o);
                    }
                }
        }
        for (int v = 0; v < layout.views; ++v) {
            auto perturbed = base;
            for (int m = 0; m < kModalities; ++m) perturbed.data.middleRows(layout.row(0, v, m, 0), layout.tokens).array() -= 0.5f;
            const auto a = cross_modal_attention(base, model, block_index);
            const auto b = cross_modal_attention(perturbed, model, block_index);
            for (int o = 0; o < layout.views; ++o)
                for (int m = 0; m < kModalities; ++m) {
                    if (o == v) {
                        unaffected += block(a, o, m) == block(b, o, m);
                    } else {
                        view_leaks += block(a, o, m) != block(b, o, m);
                    }
                }
        }
    }

    const auto cfg = model.config;
    DenoiserSample s;
    s.views = 5;
    for (int v = 0; v < s.views; ++v) {
        s.conditions.push_back(random_mat(rng, cfg.tokens_per_view(), cfg.condition_channels()));
        for (int m = 0; m < kModalities; ++m) {
            s.streams.push_back(random_mat(rng, cfg.tokens_per_view(), cfg.stream_channels(static_cast<Modality>(m))));
            s.timesteps.push_back(static_cast<float>(rng.uniform()));
        }
    }
    const std::vector<int> perm = {3, 0, 4, 1, 2};
    DenoiserSample p;
    p.views = s.views;
    for (int v : perm) {
        p.conditions.push_back(s.conditions[static_cast<std::size_t>(v)]);
        for (int m = 0; m < kModalities; ++m) {
            p.streams.push_back(s.streams[static_cast<std::size_t>(v * kModalities + m)]);
            p.timesteps.push_back(s.timesteps[static_cast<std::size_t>(v * kModalities + m)]);
        }
    }
    const auto out_s = denoiser_forward(std::span(&s, 1), model)[0];
    const auto out_p = denoiser_forward(std::span(&p, 1), model)[0];
    double worst = 0.0;
    for (std::size_t v = 0; v < perm.size(); ++v)
        for (std::size_t m = 0; m < kModalities; ++m) {
            const auto& a = out_p[v * kModalities + m];
            const auto& b = out_s[static_cast<std::size_t>(perm[v]) * kModalities + m];
            worst = std::max(worst, static_cast<double>((a - b).cwiseAbs().maxCoeff()));
        }
    return {modal_leaks == 0 && view_leaks == 0 && unaffected == 0 && worst <= 1e-6,
            fmt("cross-view leaks across modalities %d, cross-modal leaks across views %d, perturbed blocks unchanged %d, "
                "permutation error %.2e",
                modal_leaks, view_leaks, unaffected, worst)};
}

// 8. Training protocol and the frozen encoder.
Outcome training_protocol() {
    DenoiserConfig cfg = small_denoiser();
    const auto scene = gen_scene(8, Difficulty::Sparse);
    const auto cams = trajectory(scene.layout, TrajectoryPattern::InwardOrbit, 8, cfg.image_size, 8);
    const auto data = prepare_scene(scene, cams, cfg, CodecParams::init(1));
    DiffusionTrainConfig train;
    std::map<int, int> counts;
    int bad = 0;
    for (int i = 0; i < 300; ++i) {
        Rng rng = Rng(80).fork(static_cast<std::uint64_t>(i));
        const auto b = build_training_batch(data, cfg, train, rng);
        const int m = static_cast<int>(b.source_views.size());
        ++counts[m];
        std::set<int> all(b.source_views.begin(), b.source_views.end());
        all.insert(b.target_views.begin(), b.target_views.end());
        bad += !(m + static_cast<int>(b.target_views.size()) == 8 && all.size() == 8 && (m == 1 || m == 3 || m == 7) &&
                 b.noisy_image_streams() == 8 - m);
    }

    std::vector<CodecSample> samples;
    for (const auto& cam : trajectory(scene.layout, TrajectoryPattern::InwardOrbit, 3, 32, 2)) {
        samples.push_back({render_gt(scene, cam).scm, ScmNormalization::from_layout(scene.layout)});
    }
    auto params = CodecParams::init(5);
    const auto before = params.weights.all();
    CodecTrainConfig cc;
    cc.steps = 60;
    train_codec(samples, cc, params);
    int encoder_changed = 0, decoder_changed = 0, encoder_tensors = 0;
    for (const auto& [name, p] : params.weights.all()) {
        const bool same = p.value == before.at(name).value;
        if (name.rfind("encoder.", 0) == 0) {
            ++encoder_tensors;
            encoder_changed += !same;
        } else {
            decoder_changed += !same;
        }
    }
    const bool all_m = counts.size() == 3 && counts.count(1) && counts.count(3) && counts.count(7);
    return {bad == 0 && all_m && encoder_changed == 0 && encoder_tensors > 0 && decoder_changed > 0,
            fmt("300 batches (M=1: %d, M=3: %d, M=7: %d), %d off-protocol; %d of %d encoder tensors changed, %d decoder "
                "tensors updated",
                counts[1], counts[3], counts[7], bad, encoder_changed, encoder_tensors, decoder_changed)};
}

// 9. Iterative generation with the oracle backend.
Outcome oracle_pipeline() {
    int exact_fail = 0;
    std::string distances;
    double worst = 0.0;
    int oracle_disagreements = 0;
    const int source_counts[] = {1, 3, 7, 1, 3};
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto scene = gen_scene(100 + seed, Difficulty::Sparse, 4.0);
        const int m = source_counts[seed];
        {
            const auto cams = trajectory(scene.layout, TrajectoryPattern::InwardOrbit, 15, 64, seed);
            const auto plan = plan_iterations(15, m);
            std::vector<ColorImage> sources;
            for (int v : plan.sources) sources.push_back(render_gt(scene, cams[static_cast<std::size_t>(v)]).color);
            OracleBackend oracle(scene);
            const auto state = run_pipeline(plan, cams, scene.layout, sources, oracle, {});
            for (std::size_t v = 0; v < cams.size(); ++v) {
                const auto gt = render_gt(scene, cams[v]);
                const auto& got = state.views[v];
                exact_fail += !(got.color == gt.color && got.semantic == gt.semantic && got.depth == gt.depth &&
                                got.scm.xyz == gt.scm.xyz && got.scm.valid == gt.scm.valid);
            }
        }
        const auto cams = trajectory(scene.layout, TrajectoryPattern::InwardOrbit, 15, 256, seed);
        const auto plan = plan_iterations(15, 1);
        OracleBackend noisy(scene, 0.01, seed);
        const auto state = run_pipeline(plan, cams, scene.layout, {render_gt(scene, cams[0]).color}, noisy, {});
        GlobalPointCloud truth;
        for (std::size_t v = 0; v < cams.size(); ++v) insert_scm(truth, render_gt(scene, cams[v]), static_cast<int>(v));
        const auto fused = fuse(state.cloud, 0.005);
        const double d = chamfer(fused.cloud, truth, 20000, seed);
        // The grid search must equal the brute-force nearest neighbors exactly.
        const double grid = chamfer(fused.cloud, truth, 2000, seed + 50, ChamferMode::Grid);
        const double brute = chamfer(fused.cloud, truth, 2000, seed + 50, ChamferMode::BruteForce);
        oracle_disagreements += grid != brute;
        worst = std::max(worst, d);
        distances += fmt("%s%.4f", seed ? " " : "", d);
    }
    return {exact_fail == 0 && worst < 0.02 && oracle_disagreements == 0,
            fmt("zero noise: %d of 75 views differ from ground truth; noise 0.01 m Chamfer [%s] m (max %.4f), grid vs "
                "brute force disagreements %d",
                exact_fail, distances.c_str(), worst, oracle_disagreements)};
}

// 10. Toy end-to-end learning on one scene.
Outcome toy_learning() {
    const auto scene = gen_scene(1, Difficulty::Sparse);
    DenoiserConfig cfg;
    cfg.image_size = 32;
    cfg.width = 64;
    cfg.depth = 2;
    const auto cams = trajectory(scene.layout, TrajectoryPattern::InwardOrbit, 8, cfg.image_size, 1);
    auto codec = CodecParams::init(7);
    std::vector<SceneData> data{prepare_scene(scene, cams, cfg, codec)};
    codec.latent_scale = geometry_latent_rms(data, codec);
    data = {prepare_scene(scene, cams, cfg, codec)};

    DiffusionTrainConfig train;
    train.seed = 5;
    train.lr = 2e-3;
    train.steps = 2000;
    auto model = DenoiserModel::init(cfg, 3);
    auto eval_loss = [&] {
        double total = 0.0;
        Rng root(999);
        for (int i = 0; i < 16; ++i) {
            Rng rng = root.fork(static_cast<std::uint64_t>(i));
            total += training_loss(build_training_batch(data[0], cfg, train, rng), model, false) / 16;
        }
        return total;
    };
    const double initial = eval_loss();
    nn::Adam<float> opt(train.lr);
    for (int step = 0; step < train.steps; ++step) train_step(data, model, opt, cfg, train, step);
    const double final_loss = eval_loss();

    std::string psnrs;
    double lowest = std::numeric_limits<double>::infinity();
    for (int m : {1, 3, 7}) {
        GenerationInputs in;
        in.norm = data[0].norm;
        GlobalPointCloud cloud;
        for (int v = 0; v < m; ++v) insert_scm(cloud, data[0].truth[static_cast<std::size_t>(v)], v);
        for (int v = 0; v < 8; ++v) {
            const auto vi = static_cast<std::size_t>(v);
            ViewInput view{cams[vi], data[0].layout_semantic[vi], data[0].layout_scm[vi], std::nullopt, std::nullopt};
            if (v < m) {
                view.image = data[0].truth[vi].color;
            } else {
                view.warp = splat(cloud, cams[vi], train.warp_radius);
            }
            in.views.push_back(std::move(view));
        }
        const auto generated = sample(in, model, 50, 11);
        double mean = 0.0;
        for (int v = m; v < 8; ++v) {
            const auto maps = decode_view(generated, v, cams[static_cast<std::size_t>(v)], cfg, codec, data[0].norm);
            mean += psnr(maps.color, data[0].truth[static_cast<std::size_t>(v)].color) / (8 - m);
        }
        lowest = std::min(lowest, mean);
        psnrs += fmt("%sM=%d %.2f", m == 1 ? "" : ", ", m, mean);
    }
    const double ratio = initial / final_loss;
    return {ratio >= 10.0 && lowest > 25.0,
            fmt("loss %.4f -> %.4f (%.1fx) over %d steps; mean target PSNR %s dB", initial, final_loss, ratio, train.steps,
                psnrs.c_str())};
}

// 11. Curation decisions on the planted catalog.
Outcome dataset_curation() {
    int wrong = 0;
    std::string names;
    for (const auto& e : testing::curation_catalog()) {
        const bool got = curate(e.layout, 1).accepted;
        wrong += got != e.accept;
        names += fmt("%s%s:%s", names.empty() ? "" : " ", e.name.c_str(), got ? "accept" : "reject");
    }
    const auto planted = testing::curation_catalog()[4].layout;
    const bool filtered = filter_objects(planted).boxes.size() + 1 == planted.boxes.size();
    return {wrong == 0 && filtered, fmt("%s; %d wrong decisions", names.c_str(), wrong)};
}

// 12. Trajectory contracts.
Outcome trajectory_contracts() {
    double spacing = 0.0, yaw = 0.0, gaze = 0.0;
    int walk_fail = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto layout = gen_scene(seed, Difficulty::Sparse).layout;
        const auto fwd = trajectory(layout, TrajectoryPattern::Forward, 5, 16, seed);
        for (std::size_t i = 1; i < fwd.size(); ++i) {
            spacing = std::max(spacing, std::fabs((fwd[i].pose.translation - fwd[i - 1].pose.translation).norm() - 0.5));
        }
        const auto out = trajectory(layout, TrajectoryPattern::OutwardOrbit, 8, 16, seed);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = std::remainder(out[(i + 1) % 8].pose.yaw() - out[i].pose.yaw(), 2 * kPi);
            yaw = std::max(yaw, std::fabs(d - kPi / 4));
        }
        const Vec2 c = layout.rooms[0].centroid();
        for (const auto& v : trajectory(layout, TrajectoryPattern::InwardOrbit, 8, 16, seed)) {
            const Vec3 to = (Vec3(c.x(), c.y(), v.pose.translation.z()) - v.pose.translation).normalized();
            gaze = std::max(gaze, std::acos(std::clamp(to.dot(v.pose.forward()), -1.0, 1.0)));
        }
        TrajectoryParams p;
        p.count = 10;
        p.seed = seed;
        const auto a = save_trajectory(gen_trajectory(layout, TrajectoryPattern::RandomWalk, p));
        const auto b = save_trajectory(gen_trajectory(layout, TrajectoryPattern::RandomWalk, p));
        p.seed = seed + 1000;
        const auto other = save_trajectory(gen_trajectory(layout, TrajectoryPattern::RandomWalk, p));
        walk_fail += !(a == b && a != other);
    }
    return {spacing <= 1e-9 && yaw <= 1e-9 && gaze < 1e-6 && walk_fail == 0,
            fmt("10 scenes: forward spacing error %.1e m, outward yaw error %.1e rad, inward gaze error %.1e rad, %d "
                "random-walk determinism failures",
                spacing, yaw, gaze, walk_fail)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> tree(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).generic_string()] = slurp(e.path());
    }
    return files;
}

int cli(const fs::path& cwd, const std::string& args) {
    const std::string cmd = "cd '" + cwd.string() + "' && '" SPATIALGEN_CLI "' " + args + " > cli.log 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 13. `pipeline run` determinism across thread counts.
Outcome cli_determinism() {
    const auto dir = fs::temp_directory_path() / "spatialgen_acceptance_13";
    fs::remove_all(dir);
    fs::create_directories(dir);
    int failures = 0;
    failures += cli(dir, "synth gen --seed 21 --room-side 4 --out scene.json") != 0;
    failures += cli(dir, "traj gen --layout scene.json --pattern inward_orbit --count 12 --size 32 --seed 3 --out traj.json") != 0;
    fs::create_directories(dir / "config");
    std::ofstream(dir / "config" / "model.json") << R"({"model": {"width": 16, "depth": 1, "heads": 2, "image_size": 32}})";
    failures += cli(dir, "diffusion train --scenes scene.json --config config/model.json --steps 3 --seed 1 --out model") != 0;
    if (failures) return {false, "setup commands failed"};

    std::string detail;
    bool pass = true;
    const std::pair<const char*, const char*> runs[] = {
        {"oracle", "--backend oracle --noise 0.01 --seed 5"},
        {"toy", "--backend toy --checkpoint model/model.ckpt --steps 4 --seed 5"},
    };
    for (const auto& [name, flags] : runs) {
        const std::string args = std::string("pipeline run --layout scene.json --traj traj.json --sources 3 ") + flags + " --out run";
        fs::remove_all(dir / "run");
        fs::remove_all(dir / "run_t1");
        const int a = cli(dir, "--threads 1 " + args);
        fs::rename(dir / "run", dir / "run_t1");
        const int b = cli(dir, "--threads 4 " + args);
        const auto one = tree(dir / "run_t1");
        const auto four = tree(dir / "run");
        const bool same = a == 0 && b == 0 && one == four && one.size() > 50;
        pass = pass && same;
        detail += fmt("%s%s: %zu files %s", detail.empty() ? "" : "; ", name, one.size(),
                      same ? "bit-identical for --threads 1 and 4" : "DIFFER");
    }
    return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "geometry oracle agreement", 30, geometry_oracle},
        {2, "SCM round trip", 5, scm_round_trip},
        {3, "warp self-reprojection", 10, warp_reprojection},
        {4, "loss correctness", 30, loss_correctness},
        {5, "confidence activation", 0, confidence_activation},
        {6, "scheduler identities", 0, scheduler_identities},
        {7, "attention isolation", 0, attention_isolation},
        {8, "training protocol", 0, training_protocol},
        {9, "iterative generation with the oracle backend", 120, oracle_pipeline},
        {10, "toy end-to-end learning", 1200, toy_learning},
        {11, "dataset curation", 0, dataset_curation},
        {12, "trajectory contracts", 0, trajectory_contracts},
        {13, "determinism across thread counts", 0, cli_determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = c.limit_s <= 0 || s < c.limit_s;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::string timing = c.limit_s > 0 ? fmt("%.1f s, limit %.0f s", s, c.limit_s) : fmt("%.1f s", s);
        std::printf("%s %2d %s: %s (%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), timing.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
