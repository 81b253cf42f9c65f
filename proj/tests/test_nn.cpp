#include "spatialgen/nn.hpp"
#include "spatialgen/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace spatialgen;
using namespace spatialgen::nn;

namespace {

using Builder = std::function<Var(Tape<double>&, ParamSet<double>&)>;

// Max relative error between tape gradients and central differences over
// every parameter entry.
double gradient_error(ParamSet<double>& params, const Builder& build) {
    params.zero_grad();
    {
        Tape<double> tape;
        tape.backward(build(tape, params));
    }
    double worst = 0;
    const double h = 1e-6;
    for (auto& [name, p] : params.all()) {
        if (p.frozen) continue;
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            const double keep = p.value.data()[i];
            p.value.data()[i] = keep + h;
            Tape<double> t1;
            const double up = t1.value(build(t1, params))(0, 0);
            p.value.data()[i] = keep - h;
            Tape<double> t2;
            const double down = t2.value(build(t2, params))(0, 0);
            p.value.data()[i] = keep;
            const double fd = (up - down) / (2 * h);
            const double an = p.grad.data()[i];
            worst = std::max(worst, std::fabs(fd - an) / std::max(1e-4, std::fabs(fd) + std::fabs(an)));
        }
    }
    return worst;
}

ParamSet<double> random_params(std::initializer_list<std::tuple<const char*, int, int>> shapes, std::uint64_t seed) {
    ParamSet<double> ps;
    Rng rng(seed);
    for (const auto& [name, r, c] : shapes) init_normal(ps.add(name, r, c).value, rng, 1.0);
    return ps;
}

Mat<double> random_mat(int r, int c, std::uint64_t seed) {
    Mat<double> m(r, c);
    Rng rng(seed);
    init_normal(m, rng, 1.0);
    return m;
}

}  // namespace

TEST_CASE("matmul, bias, silu gradients") {
    auto ps = random_params({{"x", 5, 4}, {"w", 4, 3}, {"b", 1, 3}}, 1);
    const auto target = random_mat(5, 3, 2);
    const double err = gradient_error(ps, [&](Tape<double>& t, ParamSet<double>& p) {
        auto y = t.silu(t.add_row(t.matmul(t.param(p.at("x")), t.param(p.at("w"))), t.param(p.at("b"))));
        return t.mse(t.scale(y, 1.5), target);
    });
    CHECK(err < 1e-6);
}

TEST_CASE("row scaling gradients") {
    auto ps = random_params({{"x", 5, 4}, {"s", 5, 1}}, 11);
    const auto target = random_mat(5, 4, 12);
    const double err = gradient_error(ps, [&](Tape<double>& t, ParamSet<double>& p) {
        return t.mse(t.scale_rows(t.param(p.at("x")), t.param(p.at("s"))), target);
    });
    CHECK(err < 1e-6);
}

TEST_CASE("grouped attention matches the per-query reference") {
    const auto q = random_mat(9, 8, 21), k = random_mat(9, 8, 22), v = random_mat(9, 8, 23);
    const Groups groups = {{0, 4, 8}, {1, 2, 3, 5}, {7}, {6}};
    Tape<double> t;
    const auto out = t.value(t.attention(t.constant(q), t.constant(k), t.constant(v), groups, 2));
    CHECK((out - attention_reference(q, k, v, groups, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("layer norm gradients") {
    auto ps = random_params({{"x", 6, 8}, {"g", 1, 8}, {"b", 1, 8}}, 3);
    const auto target = random_mat(6, 8, 4);
    const double err = gradient_error(ps, [&](Tape<double>& t, ParamSet<double>& p) {
        return t.mse(t.layer_norm(t.param(p.at("x")), t.param(p.at("g")), t.param(p.at("b"))), target);
    });
    CHECK(err < 1e-5);
}

TEST_CASE("grouped attention gradients") {
    auto ps = random_params({{"q", 7, 8}, {"k", 7, 8}, {"v", 7, 8}}, 5);
    const auto target = random_mat(7, 8, 6);
    const Groups groups = {{0, 2, 4}, {1, 3}, {6, 5}};
    const double err = gradient_error(ps, [&](Tape<double>& t, ParamSet<double>& p) {
        return t.mse(t.attention(t.param(p.at("q")), t.param(p.at("k")), t.param(p.at("v")), groups, 2), target);
    });
    CHECK(err < 1e-5);
}

TEST_CASE("attention rows outside every group stay zero and groups do not mix") {
    Tape<double> t;
    const auto q = random_mat(4, 4, 7);
    auto v = random_mat(4, 4, 8);
    const Groups groups = {{0, 1}, {2}};
    const auto a = t.value(t.attention(t.constant(q), t.constant(q), t.constant(v), groups, 1));
    CHECK(a.row(3).isZero());
    CHECK(a.row(2) == v.row(2));  // a group of one attends only to itself
    v.row(2).setConstant(9.0);
    const auto b = t.value(t.attention(t.constant(q), t.constant(q), t.constant(v), groups, 1));
    CHECK(b.row(0) == a.row(0));
    CHECK(b.row(1) == a.row(1));
    CHECK_THROWS_AS(t.attention(t.constant(q), t.constant(q), t.constant(v), Groups{{0, 1}, {1}}, 1), Error);
}

TEST_CASE("concat, slice, gather and weighted sums") {
    auto ps = random_params({{"a", 4, 3}, {"b", 4, 2}, {"c", 2, 5}}, 9);
    const auto target = random_mat(5, 10, 10);
    const auto geom = conv_geometry(2, 2, 3, 1);
    const double err = gradient_error(ps, [&](Tape<double>& t, ParamSet<double>& p) {
        auto ab = t.concat_cols({t.param(p.at("a")), t.param(p.at("b"))});
        auto mid = t.slice_cols(ab, 1, 3);
        auto rows = t.concat_rows({mid, t.slice_cols(t.param(p.at("c")), 0, 3)});
        auto g = t.gather(rows, {0, 5, -1, 2, 2, 3, 4, 1, 0, 0}, 2);
        auto wide = t.concat_cols({g, t.gather(t.param(p.at("a")), {3, 3, 1, 0, 2}, 1), t.slice_cols(g, 0, 1)});
        auto conv = t.gather(t.param(p.at("b")), geom.index, 9);
        return t.weighted_sum({t.mse(wide, target), t.mse(conv, Mat<double>::Ones(4, 18))}, {0.7, 1.3});
    });
    CHECK(err < 1e-6);
}

TEST_CASE("conv and upsample index maps") {
    const auto g = conv_geometry(4, 4, 3, 2);
    CHECK(g.out_h == 2);
    CHECK(g.out_w == 2);
    REQUIRE(g.index.size() == 36);
    CHECK(g.index[0] == -1);   // top-left tap of the first window is padding
    CHECK(g.index[4] == 0);    // center tap
    CHECK(g.index[9 + 4] == 2);
    const auto up = upsample2x_index(2, 3);
    REQUIRE(up.size() == 24);
    CHECK(up[0] == 0);
    CHECK(up[1] == 0);
    CHECK(up[6 + 5] == 2);
    CHECK(up[12] == 3);
    CHECK_THROWS_AS(conv_geometry(4, 4, 2, 1), Error);
}

TEST_CASE("frozen parameters receive no gradient and are not updated") {
    ParamSet<float> ps;
    Rng rng(1);
    init_normal(ps.add("w", 3, 3).value, rng, 1.0);
    auto& frozen = ps.add("f", 3, 3);
    init_normal(frozen.value, rng, 1.0);
    frozen.frozen = true;
    const Mat<float> before = ps.at("f").value;
    Adam<float> opt(1e-2);
    for (int step = 0; step < 20; ++step) {
        ps.zero_grad();
        Tape<float> t;
        auto y = t.matmul(t.param(ps.at("w")), t.param(ps.at("f")));
        t.backward(t.mse(y, Mat<float>::Zero(3, 3)));
        CHECK(ps.at("f").grad.isZero());
        opt.step(ps);
    }
    CHECK(ps.at("f").value == before);
}

TEST_CASE("adam fits a linear map") {
    ParamSet<double> ps;
    ps.add("w", 3, 2);
    const auto x = random_mat(20, 3, 11);
    const auto w_true = random_mat(3, 2, 12);
    const Mat<double> y = x * w_true;
    Adam<double> opt(5e-2, 0.9, 0.999, 1e-8, 0.0);
    double loss = 0;
    for (int step = 0; step < 500; ++step) {
        ps.zero_grad();
        Tape<double> t;
        auto l = t.mse(t.matmul(t.constant(x), t.param(ps.at("w"))), y);
        loss = t.value(l)(0, 0);
        t.backward(l);
        opt.step(ps);
    }
    CHECK(loss < 1e-6);
    CHECK((ps.at("w").value - w_true).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("external gradient seeds backward") {
    ParamSet<double> ps;
    ps.add("a", 2, 2).value << 1, 2, 3, 4;
    ps.zero_grad();
    Tape<double> t;
    auto y = t.scale(t.param(ps.at("a")), 3.0);
    Mat<double> seed(2, 2);
    seed << 1, 0, 0, 2;
    t.backward(y, seed);
    CHECK(ps.at("a").grad(0, 0) == 3.0);
    CHECK(ps.at("a").grad(1, 1) == 6.0);
    CHECK(ps.at("a").grad(0, 1) == 0.0);
    CHECK_THROWS_AS(t.backward(y), Error);
}
