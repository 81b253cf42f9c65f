#include "spatialgen/codec.hpp"
#include "spatialgen/io.hpp"
#include "spatialgen/raster.hpp"
#include "spatialgen/rng.hpp"
#include "spatialgen/synth.hpp"
#include "spatialgen/trajectory.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace spatialgen;

namespace {

Image<double> random_image(Rng& rng, int w, int h, int c, double lo, double hi) {
    Image<double> img(w, h, c);
    for (auto& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

SceneCoordMap random_scm(Rng& rng, int w, int h) {
    SceneCoordMap s{random_image(rng, w, h, 3, -1, 1), Mask(w, h, 1, 1)};
    for (std::size_t i = 0; i < s.valid.data.size(); ++i) {
        if (rng.uniform() < 0.2) {
            s.valid.data[i] = 0;
            for (int c = 0; c < 3; ++c) s.xyz.data[3 * i + static_cast<std::size_t>(c)] = 0;
        }
    }
    return s;
}

double rel_err(double fd, double an) { return std::fabs(fd - an) / std::max(1e-6, std::fabs(fd) + std::fabs(an)); }

// Worst relative error of `grad` against central differences of `f` over `x`.
double fd_check(Image<double>& x, const Image<double>& grad, const std::function<double()>& f) {
    const double h = 1e-5;
    double worst = 0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double keep = x.data[i];
        x.data[i] = keep + h;
        const double up = f();
        x.data[i] = keep - h;
        const double down = f();
        x.data[i] = keep;
        worst = std::max(worst, rel_err((up - down) / (2 * h), grad.data[i]));
    }
    return worst;
}

CodecSample scene_sample(std::uint64_t seed, int size) {
    const auto scene = gen_scene(seed, Difficulty::Sparse);
    TrajectoryParams p;
    p.seed = seed;
    p.width = p.height = size;
    const auto view = gen_trajectory(scene.layout, TrajectoryPattern::InwardOrbit, p).views[0];
    const auto raster = rasterize_layout(scene.layout, view);
    return {depth_to_scm(raster.depth, view), ScmNormalization::from_layout(scene.layout)};
}

}  // namespace

TEST_CASE("confidence activation") {
    CHECK(confidence_from_raw(0.0) == 2.0);
    CHECK(confidence_from_raw(-20.0) == doctest::Approx(1.0 + 2.061153622438558e-9).epsilon(1e-15));
    CHECK(confidence_from_raw(-20.0) > 1.0);
    for (double raw = -1e3; raw <= 1e3; raw += 0.5) {
        const double c = confidence_from_raw(raw);
        CHECK(c > 1.0);
        CHECK(std::isfinite(c));
    }
}

TEST_CASE("loss_rec examples") {
    SceneCoordMap target{Image<double>(4, 4, 3, 0.5), Mask(4, 4, 1, 1)};
    const Image<double> two(4, 4, 1, 2.0);
    CHECK(loss_rec(target.xyz, target, two).value == doctest::Approx(-0.2 * std::log(2.0)).epsilon(1e-12));
    CHECK(loss_rec(target.xyz, target, two).value == doctest::Approx(-0.138629).epsilon(1e-6));
    auto off = target.xyz;
    for (std::size_t i = 0; i < off.data.size(); i += 3) off.data[i] += 1.0;  // unit error per pixel
    CHECK(loss_rec(off, target, two).value == doctest::Approx(1.861371).epsilon(1e-6));
    target.valid = Mask(4, 4, 1, 0);
    CHECK_THROWS_AS(loss_rec(off, target, two), Error);
}

TEST_CASE("loss_rec gradients match finite differences") {
    Rng rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        const auto target = random_scm(rng, 8, 8);
        auto pred = random_image(rng, 8, 8, 3, -1, 1);
        auto raw = random_image(rng, 8, 8, 1, -2, 2);
        auto conf = [&] {
            Image<double> c(8, 8, 1);
            for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] = confidence_from_raw(raw.data[i]);
            return c;
        };
        const auto terms = loss_rec(pred, target, conf());
        CHECK(fd_check(pred, terms.d_pred, [&] { return loss_rec(pred, target, conf()).value; }) < 1e-3);
        Image<double> d_raw = terms.d_confidence;
        for (std::size_t i = 0; i < d_raw.data.size(); ++i) d_raw.data[i] *= confidence_slope(raw.data[i]);
        CHECK(fd_check(raw, d_raw, [&] { return loss_rec(pred, target, conf()).value; }) < 1e-3);
    }
}

TEST_CASE("loss_grad identities") {
    Rng rng(2);
    const auto p = random_image(rng, 16, 8, 3, -1, 1);
    CHECK(loss_grad(p, p).value == 0.0);
    auto shifted = p;
    for (std::size_t i = 0; i < shifted.data.size(); ++i) shifted.data[i] += (i % 3 == 0 ? 0.75 : -0.25);
    CHECK(loss_grad(shifted, p).value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS_AS(loss_grad(Image<double>(12, 8, 3), Image<double>(12, 8, 3)), Error);
    CHECK(loss_grad(random_image(rng, 16, 8, 3, -1, 1), p).value > 0.0);
}

TEST_CASE("loss_grad of a linear ramp has a closed form") {
    // Adding a * x to every channel leaves a residual of a per x-step in each
    // channel at every scale, except in the clamped last column.
    Rng rng(3);
    const int w = 32, h = 16;
    const double a = 0.37;
    const auto p = random_image(rng, w, h, 3, -1, 1);
    auto ramp = p;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) ramp.at(x, y, c) += a * x;
    double expected = 0;
    for (int s = 0; s < 4; ++s) {
        const int ws = w >> s;
        expected += a * std::sqrt(3.0) * (ws - 1) / ws;
    }
    CHECK(loss_grad(ramp, p).value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("loss_grad gradients match finite differences") {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const auto target = random_image(rng, 8, 8, 3, -1, 1);
        auto pred = random_image(rng, 8, 8, 3, -1, 1);
        const auto terms = loss_grad(pred, target);
        CHECK(fd_check(pred, terms.d_pred, [&] { return loss_grad(pred, target).value; }) < 1e-3);
    }
}

TEST_CASE("total_loss is linear in the gradient weight") {
    Rng rng(5);
    const auto target = random_scm(rng, 8, 8);
    const auto pred = random_image(rng, 8, 8, 3, -1, 1);
    const auto conf = random_image(rng, 8, 8, 1, 1.5, 3);
    const double l0 = total_loss(pred, target, conf, 0.0).total;
    CHECK(l0 == loss_rec(pred, target, conf).value);
    const double l1 = total_loss(pred, target, conf, 0.7).total;
    const double l2 = total_loss(pred, target, conf, 1.4).total;
    CHECK(l2 - l0 == doctest::Approx(2 * (l1 - l0)).epsilon(1e-12));
    SceneCoordMap full{target.xyz, Mask(8, 8, 1, 1)};
    for (double lambda : {0.0, 1.0, 5.0}) {
        CHECK(total_loss(full.xyz, full, Image<double>(8, 8, 1, 2.0), lambda).total ==
              doctest::Approx(-0.2 * std::log(2.0)).epsilon(1e-12));
    }
}

TEST_CASE("encode shape contract and determinism") {
    const auto params = CodecParams::init(7);
    SceneCoordMap zero{Image<double>(32, 32, 3), Mask(32, 32, 1, 1)};
    const auto z = encode(zero, params);
    CHECK(z.width == 8);
    CHECK(z.height == 8);
    CHECK(z.channels == 8);
    for (float v : z.data) CHECK(std::isfinite(v));
    const auto sample = scene_sample(1, 32);
    CHECK(encode(sample.scm, params, sample.norm) == encode(sample.scm, params, sample.norm));
    SceneCoordMap odd{Image<double>(30, 32, 3), Mask(30, 32, 1, 1)};
    CHECK_THROWS_AS(encode(odd, params), Error);
    CHECK_THROWS_AS(decode(LatentGrid(8, 8, 4), params), Error);
}

TEST_CASE("decode with a zero confidence head gives c = 2 everywhere") {
    auto params = CodecParams::init(8);
    const std::string last = "decoder.conv" + std::to_string(params.arch.decoder.size());
    params.weights.at(last + ".w").value.col(3).setZero();
    params.weights.at(last + ".b").value.setZero();
    const auto d = decode(LatentGrid(8, 8, 8, 0.3f), params);
    CHECK(d.scm.width() == 32);
    for (double c : d.confidence.data) CHECK(c == 2.0);
}

TEST_CASE("codec training overfits one SCM with the encoder frozen") {
    const auto sample = scene_sample(2, 32);
    auto params = CodecParams::init(3);
    const auto encoder_before = params.weights.at("encoder.conv0.w").value;
    const double err_before = reconstruction_error(sample, params);
    CodecTrainConfig cfg;
    cfg.steps = 200;
    const auto log = train_codec({sample}, cfg, params);
    REQUIRE(log.size() == 200);
    CHECK(log.back().total < 0.1 * log.front().total);
    for (const auto& [name, p] : params.weights.all()) {
        if (name.rfind("encoder.", 0) == 0) CHECK(p.frozen);
    }
    CHECK(params.weights.at("encoder.conv0.w").value == encoder_before);
    MESSAGE("reconstruction error " << err_before << " -> " << reconstruction_error(sample, params));

    // Longer training on the same micro-batch shrinks the reconstruction error 10x.
    cfg.steps = 1500;
    auto longer = CodecParams::init(3);
    train_codec({sample}, cfg, longer);
    CHECK(reconstruction_error(sample, longer) < 0.1 * err_before);

    auto again = CodecParams::init(3);
    cfg.steps = 200;
    const auto log2 = train_codec({sample}, cfg, again);
    for (const auto& [name, p] : params.weights.all()) CHECK(again.weights.at(name).value == p.value);
    CHECK(log2.back().total == log.back().total);
    CHECK(codec_log_csv(log).rfind("step,loss_rec,loss_grad,total\n", 0) == 0);
}

TEST_CASE("non-finite loss aborts with the step index") {
    auto sample = scene_sample(4, 32);
    sample.scm.xyz.data[0] = std::nan("");
    sample.scm.valid.data[0] = 1;
    auto params = CodecParams::init(1);
    try {
        train_codec({sample}, CodecTrainConfig{}, params);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Divergence);
        CHECK(e.where() == "step 0");
    }
    params.weights.at("encoder.conv0.w").frozen = false;
    CHECK_THROWS_AS(train_codec({scene_sample(4, 32)}, CodecTrainConfig{}, params), Error);
}

TEST_CASE("checkpoint round trip") {
    const auto dir = testing::scratch_dir("codec_ckpt");
    auto params = CodecParams::init(9);
    params.latent_scale = 0.625;
    Checkpoint ckpt;
    params.save(ckpt);
    ckpt.descriptor["note"] = "x";
    write_checkpoint(dir / "c.sgck", ckpt);
    const auto back = read_checkpoint(dir / "c.sgck");
    CHECK(back.descriptor == ckpt.descriptor);
    const auto loaded = CodecParams::load(back);
    CHECK(loaded.latent_scale == 0.625);
    for (const auto& [name, p] : params.weights.all()) {
        CHECK(loaded.weights.at(name).value == p.value);
        CHECK(loaded.weights.at(name).frozen == p.frozen);
    }
    write_text_file(dir / "bad.sgck", "SGCX");
    CHECK_THROWS_AS(read_checkpoint(dir / "bad.sgck"), Error);
    Checkpoint partial = back;
    partial.tensors.erase(partial.tensors.begin());
    CHECK_THROWS_AS(CodecParams::load(partial), Error);
}
