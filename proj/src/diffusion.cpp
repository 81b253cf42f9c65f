#include "spatialgen/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spatialgen {

namespace {

using nn::Mat;
using nn::Tape;
using nn::Var;
using Params = nn::ParamSet<float>;

const char* modality_name(int m) {
    static const char* names[] = {"image", "semantic", "geometry"};
    return names[m];
}

Var rows_of(Tape<float>& tape, Var x, int start, int count) {
    std::vector<int> idx(static_cast<std::size_t>(count));
    std::iota(idx.begin(), idx.end(), start);
    return tape.gather(x, std::move(idx), 1);
}

Var linear(Tape<float>& tape, Params& w, const std::string& name, Var x) {
    return tape.add_row(tape.matmul(x, tape.param(w.at(name + ".w"))), tape.param(w.at(name + ".b")));
}

Var layer_norm(Tape<float>& tape, Params& w, const std::string& name, Var x) {
    return tape.layer_norm(x, tape.param(w.at(name + ".g")), tape.param(w.at(name + ".b")));
}

// Pre-norm attention over `groups`, then a pre-norm feed-forward; both residual.
Var transformer_layer(Tape<float>& tape, Params& w, const DenoiserConfig& cfg, const std::string& prefix, Var h,
                      const nn::Groups& groups) {
    const Var a = layer_norm(tape, w, prefix + ".ln1", h);
    const Var qkv = linear(tape, w, prefix + ".qkv", a);
    const int d = cfg.width;
    const Var att = tape.attention(tape.slice_cols(qkv, 0, d), tape.slice_cols(qkv, d, d), tape.slice_cols(qkv, 2 * d, d),
                                   groups, cfg.heads);
    h = tape.add(h, linear(tape, w, prefix + ".proj", att));
    const Var f = layer_norm(tape, w, prefix + ".ln2", h);
    return tape.add(h, linear(tape, w, prefix + ".fc2", tape.silu(linear(tape, w, prefix + ".fc1", f))));
}

std::string block_prefix(int block, bool cross_view) {
    return "block" + std::to_string(block) + (cross_view ? ".view" : ".modal");
}

// The head predicts x0; v is then the posterior mean of v given x_t when
// x0 = prediction + Gaussian residual of std r:
//   v = c x_t - (sigma + alpha c) x0_hat,  c = alpha sigma (1 - r^2) / (alpha^2 r^2 + sigma^2).
// Without this the noise part of v, which dominates at small t, would have
// to pass through a residual stream much narrower than the streams.
std::pair<float, float> output_coefficients(double t, double r) {
    const auto s = schedule(t);
    const double denom = s.alpha * s.alpha * r * r + s.sigma * s.sigma;
    const double c = denom > 0 ? s.alpha * s.sigma * (1 - r * r) / denom : 0.0;
    return {static_cast<float>(c), static_cast<float>(-(s.sigma + s.alpha * c))};
}

std::array<float, kTimeFeatures> time_features(double t) {
    std::array<float, kTimeFeatures> f{};
    for (int k = 0; k < kTimeFeatures / 2; ++k) {
        const double w = 0.5 * kPi * std::ldexp(1.0, k);
        f[static_cast<std::size_t>(2 * k)] = static_cast<float>(std::sin(w * t));
        f[static_cast<std::size_t>(2 * k + 1)] = static_cast<float>(std::cos(w * t));
    }
    return f;
}

void check_batch(std::span<const DenoiserSample> batch, const DenoiserConfig& cfg) {
    if (batch.empty()) throw Error(ErrorKind::InvalidInput, "denoiser: empty batch");
    const int views = batch[0].views;
    const auto l = static_cast<Eigen::Index>(cfg.tokens_per_view());
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const auto& b = batch[s];
        const std::string where = "sample " + std::to_string(s);
        if (b.views < 1 || b.views != views) throw Error(ErrorKind::InvalidInput, "denoiser: view counts must match", where);
        if (b.conditions.size() != static_cast<std::size_t>(b.views)) {
            throw Error(ErrorKind::InvalidInput, "denoiser: missing condition for a view", where);
        }
        if (b.streams.size() != static_cast<std::size_t>(b.views * kModalities) || b.timesteps.size() != b.streams.size()) {
            throw Error(ErrorKind::InvalidInput, "denoiser: need one stream and timestep per (view, modality)", where);
        }
        for (int v = 0; v < b.views; ++v) {
            const auto& c = b.conditions[static_cast<std::size_t>(v)];
            if (c.rows() != l || c.cols() != cfg.condition_channels()) {
                throw Error(ErrorKind::InvalidInput, "denoiser: missing or malformed condition", where + " view " + std::to_string(v));
            }
            for (int m = 0; m < kModalities; ++m) {
                const auto& x = b.streams[static_cast<std::size_t>(v * kModalities + m)];
                if (x.rows() != l || x.cols() != cfg.stream_channels(static_cast<Modality>(m))) {
                    throw Error(ErrorKind::InvalidInput, "denoiser: stream shape mismatch",
                                where + " view " + std::to_string(v) + " " + modality_name(m));
                }
            }
        }
    }
}

// Builds the full denoiser graph; returns one output node per modality with
// rows ordered (sample, view, token).
std::array<Var, kModalities> denoiser_graph(Tape<float>& tape, Params& w, const DenoiserConfig& cfg,
                                            std::span<const DenoiserSample> batch) {
    check_batch(batch, cfg);
    const int samples = static_cast<int>(batch.size());
    const int views = batch[0].views;
    const int l = cfg.tokens_per_view();
    const int per_modality = samples * views * l;
    TokenLayout layout{samples, views, kModalities, l, true};

    Mat<float> cond(per_modality, cfg.condition_channels());
    for (int s = 0; s < samples; ++s)
        for (int v = 0; v < views; ++v) cond.middleRows((s * views + v) * l, l) = batch[static_cast<std::size_t>(s)].conditions[static_cast<std::size_t>(v)];
    const Var cond_var = tape.constant(std::move(cond));
    std::vector<int> pos_index(static_cast<std::size_t>(per_modality));
    for (int i = 0; i < per_modality; ++i) pos_index[static_cast<std::size_t>(i)] = i % l;
    const Var pos = tape.gather(tape.param(w.at("pos")), pos_index, 1);

    std::array<Var, kModalities> streams;
    std::array<Mat<float>, kModalities> skip_coef, head_coef;
    std::vector<Var> embedded;
    for (int m = 0; m < kModalities; ++m) {
        Mat<float> x(per_modality, cfg.stream_channels(static_cast<Modality>(m)));
        Mat<float> tf(per_modality, kTimeFeatures);
        auto& skip = skip_coef[static_cast<std::size_t>(m)];
        auto& head = head_coef[static_cast<std::size_t>(m)];
        skip.resize(per_modality, 1);
        head.resize(per_modality, 1);
        for (int s = 0; s < samples; ++s) {
            const auto& b = batch[static_cast<std::size_t>(s)];
            for (int v = 0; v < views; ++v) {
                const auto k = static_cast<std::size_t>(v * kModalities + m);
                x.middleRows((s * views + v) * l, l) = b.streams[k];
                const auto f = time_features(b.timesteps[k]);
                const auto [c_skip, c_head] = output_coefficients(b.timesteps[k], cfg.residual_std);
                skip.middleRows((s * views + v) * l, l).setConstant(c_skip);
                head.middleRows((s * views + v) * l, l).setConstant(c_head);
                for (int t = 0; t < l; ++t)
                    for (int j = 0; j < kTimeFeatures; ++j) tf((s * views + v) * l + t, j) = f[static_cast<std::size_t>(j)];
            }
        }
        const std::string name = modality_name(m);
        const Var stream = tape.constant(std::move(x));
        const Var time = tape.constant(std::move(tf));
        Var h = linear(tape, w, "in." + name, stream);
        h = tape.add(h, linear(tape, w, "cond." + name, cond_var));
        h = tape.add(h, linear(tape, w, "time", time));
        embedded.push_back(tape.add(h, pos));
        streams[static_cast<std::size_t>(m)] = stream;
    }
    Var h = tape.concat_rows(embedded);

    const auto view_groups = cross_view_groups(layout);
    const auto modal_groups = cross_modal_groups(layout);
    for (int i = 0; i < cfg.depth; ++i) {
        h = transformer_layer(tape, w, cfg, block_prefix(i, true), h, view_groups);
        h = transformer_layer(tape, w, cfg, block_prefix(i, false), h, modal_groups);
    }
    h = layer_norm(tape, w, "final.ln", h);
    std::array<Var, kModalities> out;
    for (int m = 0; m < kModalities; ++m) {
        const auto k = static_cast<std::size_t>(m);
        const std::string name = modality_name(m);
        const Var x0 = linear(tape, w, "out." + name, rows_of(tape, h, m * per_modality, per_modality));
        const Var gain = tape.matmul(tape.constant(std::move(skip_coef[k])), tape.param(w.at("out." + name + ".skip")));
        out[k] = tape.add(tape.scale_rows(streams[k], gain), tape.scale_rows(x0, tape.constant(std::move(head_coef[k]))));
    }
    return out;
}

Params& mutable_weights(const DenoiserModel& model) {
    // Forward-only passes record no parameter gradients that outlive the tape;
    // Tape::param needs a mutable reference only for the backward hook.
    return const_cast<Params&>(model.weights);
}

TokenTensor apply_layer(const TokenTensor& tokens, const DenoiserModel& model, int block, bool cross_view) {
    const auto& cfg = model.config;
    if (block < 0 || block >= cfg.depth) throw Error(ErrorKind::InvalidInput, "block index out of range");
    if (tokens.data.rows() != tokens.layout.rows() || tokens.data.cols() != cfg.width) {
        throw Error(ErrorKind::InvalidInput, "token tensor shape does not match the layout and width");
    }
    Tape<float> tape;
    const auto groups = cross_view ? cross_view_groups(tokens.layout) : cross_modal_groups(tokens.layout);
    const Var out = transformer_layer(tape, mutable_weights(model), cfg, block_prefix(block, cross_view), tape.constant(tokens.data), groups);
    return {tokens.layout, tape.value(out)};
}

std::array<float, 3> palette_signed(CategoryId id) {
    const auto& p = CategoryPalette::standard();
    const auto rgb = p.valid(id) ? p[id].rgb : p[category::kVoid].rgb;
    return {rgb[0] / 127.5f - 1.0f, rgb[1] / 127.5f - 1.0f, rgb[2] / 127.5f - 1.0f};
}

}  // namespace

DiffusionState schedule(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorKind::InvalidInput, "timestep must lie in [0, 1]");
    if (t == 1.0) return {1.0, 0.0, 1.0};
    return {t, std::cos(0.5 * kPi * t), std::sin(0.5 * kPi * t)};
}

nn::Groups cross_view_groups(const TokenLayout& layout) {
    nn::Groups groups;
    for (int s = 0; s < layout.samples; ++s) {
        for (int m = 0; m < layout.modalities; ++m) {
            std::vector<int> g;
            for (int v = 0; v < layout.views; ++v)
                for (int t = 0; t < layout.tokens; ++t) g.push_back(layout.row(s, v, m, t));
            groups.push_back(std::move(g));
        }
    }
    return groups;
}

nn::Groups cross_modal_groups(const TokenLayout& layout) {
    nn::Groups groups;
    for (int s = 0; s < layout.samples; ++s) {
        for (int v = 0; v < layout.views; ++v) {
            std::vector<int> g;
            for (int m = 0; m < layout.modalities; ++m)
                for (int t = 0; t < layout.tokens; ++t) g.push_back(layout.row(s, v, m, t));
            groups.push_back(std::move(g));
        }
    }
    return groups;
}

int DenoiserConfig::stream_channels(Modality m) const {
    switch (m) {
        case Modality::Image: return 3 * patch * patch;
        case Modality::Semantic: return categories * patch * patch;
        case Modality::Geometry: return latent_channels;
    }
    return 0;
}

void DenoiserConfig::validate() const {
    if (width <= 0 || depth <= 0 || heads <= 0 || width % heads != 0 || ffn_mult <= 0) {
        throw Error(ErrorKind::InvalidInput, "denoiser: width must be a positive multiple of heads");
    }
    if (patch <= 0 || image_size <= 0 || image_size % patch != 0) {
        throw Error(ErrorKind::InvalidInput, "denoiser: image size must be a multiple of the patch size");
    }
    if (latent_channels <= 0 || categories <= 0) throw Error(ErrorKind::InvalidInput, "denoiser: bad channel counts");
    if (!(residual_std > 0 && residual_std < 1)) throw Error(ErrorKind::InvalidInput, "denoiser: residual_std must lie in (0, 1)");
}

nlohmann::json DenoiserConfig::to_json() const {
    return {{"width", width}, {"depth", depth}, {"heads", heads}, {"ffn_mult", ffn_mult}, {"patch", patch},
            {"image_size", image_size}, {"latent_channels", latent_channels}, {"categories", categories}, {"residual_std", residual_std}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
    DenoiserConfig c;
    try {
        c.width = j.value("width", c.width);
        c.depth = j.value("depth", c.depth);
        c.heads = j.value("heads", c.heads);
        c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
        c.patch = j.value("patch", c.patch);
        c.image_size = j.value("image_size", c.image_size);
        c.latent_channels = j.value("latent_channels", c.latent_channels);
        c.categories = j.value("categories", c.categories);
        c.residual_std = j.value("residual_std", c.residual_std);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("bad denoiser config: ") + e.what(), "model");
    }
    c.validate();
    return c;
}

DenoiserModel DenoiserModel::init(const DenoiserConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    DenoiserModel model;
    model.config = cfg;
    auto& w = model.weights;
    Rng rng(seed);
    const int d = cfg.width;
    auto dense = [&](const std::string& name, int in, int out, double gain) {
        nn::init_normal(w.add(name + ".w", in, out).value, rng, gain / std::sqrt(static_cast<double>(in)));
        w.add(name + ".b", 1, out);
    };
    auto norm = [&](const std::string& name) {
        w.add(name + ".g", 1, d).value.setOnes();
        w.add(name + ".b", 1, d);
    };
    nn::init_normal(w.add("pos", cfg.tokens_per_view(), d).value, rng, 0.02);
    dense("time", kTimeFeatures, d, 1.0);
    for (int m = 0; m < kModalities; ++m) {
        const std::string name = modality_name(m);
        dense("in." + name, cfg.stream_channels(static_cast<Modality>(m)), d, 1.0);
        dense("cond." + name, cfg.condition_channels(), d, 1.0);
    }
    const double residual_gain = 1.0 / std::sqrt(2.0 * cfg.depth);
    for (int i = 0; i < cfg.depth; ++i) {
        for (bool view : {true, false}) {
            const std::string p = block_prefix(i, view);
            norm(p + ".ln1");
            dense(p + ".qkv", d, 3 * d, 1.0);
            dense(p + ".proj", d, d, residual_gain);
            norm(p + ".ln2");
            dense(p + ".fc1", d, cfg.ffn_mult * d, 1.0);
            dense(p + ".fc2", cfg.ffn_mult * d, d, residual_gain);
        }
    }
    norm("final.ln");
    for (int m = 0; m < kModalities; ++m) {
        const std::string name = std::string("out.") + modality_name(m);
        dense(name, d, cfg.stream_channels(static_cast<Modality>(m)), 0.1);
        w.add(name + ".skip", 1, 1).value.setOnes();
    }
    return model;
}

void DenoiserModel::save(Checkpoint& ckpt, const std::string& prefix) const {
    ckpt.descriptor["denoiser"] = {{"config", config.to_json()}, {"prefix", prefix}};
    ckpt.store(prefix, weights);
}

DenoiserModel DenoiserModel::load(const Checkpoint& ckpt, const std::string& prefix) {
    if (!ckpt.descriptor.contains("denoiser")) throw Error(ErrorKind::Schema, "checkpoint has no denoiser section", "denoiser");
    auto model = DenoiserModel::init(DenoiserConfig::from_json(ckpt.descriptor.at("denoiser").at("config")), 0);
    ckpt.restore(prefix, model.weights);
    return model;
}

TokenTensor cross_view_attention(const TokenTensor& tokens, const DenoiserModel& model, int block) {
    return apply_layer(tokens, model, block, true);
}

TokenTensor cross_modal_attention(const TokenTensor& tokens, const DenoiserModel& model, int block) {
    return apply_layer(tokens, model, block, false);
}

std::vector<std::vector<Mat<float>>> denoiser_forward(std::span<const DenoiserSample> batch, const DenoiserModel& model) {
    Tape<float> tape;
    const auto outs = denoiser_graph(tape, mutable_weights(model), model.config, batch);
    const int l = model.config.tokens_per_view();
    std::vector<std::vector<Mat<float>>> result;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const int views = batch[s].views;
        std::vector<Mat<float>> streams;
        for (int v = 0; v < views; ++v) {
            for (int m = 0; m < kModalities; ++m) {
                const int start = (static_cast<int>(s) * views + v) * l;
                streams.push_back(tape.value(outs[static_cast<std::size_t>(m)]).middleRows(start, l));
            }
        }
        result.push_back(std::move(streams));
    }
    return result;
}

Mat<float> patchify(const Image<float>& img, int patch) {
    if (patch <= 0 || img.width % patch != 0 || img.height % patch != 0) {
        throw Error(ErrorKind::InvalidInput, "patchify: image size must be a multiple of the patch size");
    }
    const int gw = img.width / patch, gh = img.height / patch, c = img.channels;
    Mat<float> out(gw * gh, patch * patch * c);
    for (int py = 0; py < gh; ++py)
        for (int px = 0; px < gw; ++px)
            for (int dy = 0; dy < patch; ++dy)
                for (int dx = 0; dx < patch; ++dx)
                    for (int k = 0; k < c; ++k) out(py * gw + px, (dy * patch + dx) * c + k) = img.at(px * patch + dx, py * patch + dy, k);
    return out;
}

Image<float> unpatchify(const Mat<float>& tokens, int width, int height, int channels, int patch) {
    const int gw = width / patch, gh = height / patch;
    if (patch <= 0 || width % patch != 0 || height % patch != 0 || tokens.rows() != gw * gh ||
        tokens.cols() != patch * patch * channels) {
        throw Error(ErrorKind::InvalidInput, "unpatchify: token shape does not match the image");
    }
    Image<float> img(width, height, channels);
    for (int py = 0; py < gh; ++py)
        for (int px = 0; px < gw; ++px)
            for (int dy = 0; dy < patch; ++dy)
                for (int dx = 0; dx < patch; ++dx)
                    for (int k = 0; k < channels; ++k) img.at(px * patch + dx, py * patch + dy, k) = tokens(py * gw + px, (dy * patch + dx) * channels + k);
    return img;
}

Mat<float> encode_image_stream(const ColorImage& rgb, int patch) {
    return (patchify(rgb, patch).array() * 2.0f - 1.0f).matrix();
}

ColorImage decode_image_stream(const Mat<float>& tokens, int size, int patch) {
    auto img = unpatchify(tokens, size, size, 3, patch);
    for (auto& v : img.data) v = std::clamp(0.5f * v + 0.5f, 0.0f, 1.0f);
    return img;
}

Mat<float> encode_semantic_stream(const SemanticMap& sem, int categories, int patch) {
    Image<float> onehot(sem.width, sem.height, categories, -1.0f);
    for (std::size_t i = 0; i < sem.data.size(); ++i) {
        if (sem.data[i] >= categories) throw Error(ErrorKind::InvalidInput, "semantic id outside the category range");
        onehot.data[i * static_cast<std::size_t>(categories) + sem.data[i]] = 1.0f;
    }
    return patchify(onehot, patch);
}

SemanticMap decode_semantic_stream(const Mat<float>& tokens, int size, int categories, int patch) {
    const auto scores = unpatchify(tokens, size, size, categories, patch);
    SemanticMap sem(size, size, 1);
    for (std::size_t i = 0; i < sem.data.size(); ++i) {
        const float* p = scores.data.data() + i * static_cast<std::size_t>(categories);
        sem.data[i] = static_cast<CategoryId>(std::max_element(p, p + categories) - p);
    }
    return sem;
}

Mat<float> encode_geometry_stream(const SceneCoordMap& scm, const CodecParams& codec, const ScmNormalization& norm) {
    const auto latent = encode(scm, codec, norm);
    Mat<float> out(static_cast<Eigen::Index>(latent.pixel_count()), latent.channels);
    const float inv = static_cast<float>(1.0 / codec.latent_scale);
    for (std::size_t i = 0; i < latent.data.size(); ++i) out.data()[i] = latent.data[i] * inv;
    return out;
}

DecodedScm decode_geometry_stream(const Mat<float>& tokens, int size, const CodecParams& codec, const ScmNormalization& norm) {
    const int f = codec.arch.factor;
    if (size % f != 0 || tokens.rows() != (size / f) * (size / f) || tokens.cols() != codec.arch.latent_channels) {
        throw Error(ErrorKind::InvalidInput, "geometry stream shape does not match the codec");
    }
    LatentGrid latent(size / f, size / f, codec.arch.latent_channels);
    const float scale = static_cast<float>(codec.latent_scale);
    for (std::size_t i = 0; i < latent.data.size(); ++i) latent.data[i] = tokens.data()[i] * scale;
    return decode(latent, codec, norm);
}

Mat<float> view_condition(const DenoiserConfig& cfg, const ViewInput& view, const ScmNormalization& norm) {
    const int size = cfg.image_size, p = cfg.patch, pp = p * p, g = cfg.grid();
    if (!view.layout_semantic.same_shape(size, size, 1) || view.layout_scm.width() != size || view.layout_scm.height() != size ||
        view.camera.width() != size || view.camera.height() != size) {
        throw Error(ErrorKind::InvalidInput, "view condition: maps must match the model resolution");
    }
    if (view.warp && (!view.warp->color.same_shape(size, size, 3) || !view.warp->coverage.same_shape(size, size, 1))) {
        throw Error(ErrorKind::InvalidInput, "view condition: warp must match the model resolution");
    }
    Mat<float> out = Mat<float>::Zero(g * g, cfg.condition_channels());
    const Vec3 origin = norm.normalize(view.camera.pose.translation);
    const int o_scm = 3 * pp, o_valid = 6 * pp, o_ray = 7 * pp, o_warp = 7 * pp + 6, o_cov = 10 * pp + 6, o_src = 11 * pp + 6;
    for (int py = 0; py < g; ++py) {
        for (int px = 0; px < g; ++px) {
            const int row = py * g + px;
            for (int dy = 0; dy < p; ++dy) {
                for (int dx = 0; dx < p; ++dx) {
                    const int x = px * p + dx, y = py * p + dy, k = dy * p + dx;
                    const auto sem = palette_signed(view.layout_semantic.at(x, y));
                    const bool valid = view.layout_scm.valid.at(x, y) != 0;
                    Vec3 q = Vec3::Zero();
                    if (valid) q = norm.normalize(Vec3(view.layout_scm.xyz.at(x, y, 0), view.layout_scm.xyz.at(x, y, 1), view.layout_scm.xyz.at(x, y, 2)));
                    for (int c = 0; c < 3; ++c) {
                        out(row, 3 * k + c) = sem[static_cast<std::size_t>(c)];
                        out(row, o_scm + 3 * k + c) = static_cast<float>(q[c]);
                    }
                    out(row, o_valid + k) = valid ? 1.0f : 0.0f;
                    if (view.warp && view.warp->coverage.at(x, y)) {
                        for (int c = 0; c < 3; ++c) out(row, o_warp + 3 * k + c) = 2.0f * view.warp->color.at(x, y, c) - 1.0f;
                        out(row, o_cov + k) = 1.0f;
                    }
                }
            }
            const Vec3 dir = (view.camera.pose.rotation * view.camera.camera_ray((px + 0.5) * p, (py + 0.5) * p)).normalized();
            const Vec3 moment = origin.cross(dir);
            for (int c = 0; c < 3; ++c) {
                out(row, o_ray + c) = static_cast<float>(dir[c]);
                out(row, o_ray + 3 + c) = static_cast<float>(moment[c]);
            }
            out(row, o_src) = view.is_source() ? 1.0f : 0.0f;
        }
    }
    return out;
}

SceneData prepare_scene(const SynthScene& scene, const std::vector<CameraView>& cameras, const DenoiserConfig& cfg,
                        const CodecParams& codec) {
    cfg.validate();
    if (codec.arch.factor != cfg.patch || codec.arch.latent_channels != cfg.latent_channels) {
        throw Error(ErrorKind::InvalidInput, "codec factor and channels must match the denoiser patch and latent size");
    }
    SceneData data;
    data.norm = ScmNormalization::from_layout(scene.layout);
    for (const auto& cam : cameras) {
        if (cam.width() != cfg.image_size || cam.height() != cfg.image_size) {
            throw Error(ErrorKind::InvalidInput, "camera resolution must match the model image size");
        }
        auto truth = render_gt(scene, cam);
        const auto raster = rasterize_layout(scene.layout, cam);
        data.layout_scm.push_back(depth_to_scm(raster.depth, cam));
        data.layout_semantic.push_back(raster.semantic);
        data.clean.push_back({encode_image_stream(truth.color, cfg.patch),
                              encode_semantic_stream(truth.semantic, cfg.categories, cfg.patch),
                              encode_geometry_stream(truth.scm, codec, data.norm)});
        data.truth.push_back(std::move(truth));
        data.cameras.push_back(cam);
    }
    return data;
}

double geometry_latent_rms(const std::vector<SceneData>& scenes, const CodecParams& codec) {
    double sq = 0.0;
    std::size_t n = 0;
    for (const auto& scene : scenes) {
        for (const auto& view : scene.clean) {
            sq += view[2].cast<double>().squaredNorm();
            n += static_cast<std::size_t>(view[2].size());
        }
    }
    if (n == 0) throw Error(ErrorKind::InvalidInput, "no geometry latents");
    return std::max(1e-6, std::sqrt(sq / static_cast<double>(n)) * codec.latent_scale);
}

void DiffusionTrainConfig::validate() const {
    if (views_total < 2) throw Error(ErrorKind::InvalidInput, "views_total must be at least 2");
    if (source_counts.empty()) throw Error(ErrorKind::InvalidInput, "source_counts must not be empty");
    for (int m : source_counts) {
        if (m < 1 || m >= views_total) throw Error(ErrorKind::InvalidInput, "source counts must lie in [1, views_total)");
    }
    if (!(lr > 0) || steps < 0 || !(warp_radius >= 0.5)) throw Error(ErrorKind::InvalidInput, "bad training hyperparameters");
}

nlohmann::json DiffusionTrainConfig::to_json() const {
    return {{"views_total", views_total}, {"source_counts", source_counts}, {"lr", lr},
            {"steps", steps},             {"seed", seed},                   {"warp_radius", warp_radius}};
}

DiffusionTrainConfig DiffusionTrainConfig::from_json(const nlohmann::json& j) {
    DiffusionTrainConfig c;
    try {
        c.views_total = j.value("views_total", c.views_total);
        c.source_counts = j.value("source_counts", c.source_counts);
        c.lr = j.value("lr", c.lr);
        c.steps = j.value("steps", c.steps);
        c.seed = j.value("seed", c.seed);
        c.warp_radius = j.value("warp_radius", c.warp_radius);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("bad training config: ") + e.what(), "training");
    }
    c.validate();
    return c;
}

int TrainingBatch::noisy_image_streams() const {
    int n = 0;
    for (int v = 0; v < sample.views; ++v) n += sample.timesteps[static_cast<std::size_t>(v * kModalities)] > 0.0f ? 1 : 0;
    return n;
}

TrainingBatch build_training_batch(const SceneData& scene, const DenoiserConfig& cfg, const DiffusionTrainConfig& train,
                                   Rng& rng) {
    train.validate();
    const int views = static_cast<int>(scene.cameras.size());
    if (views != train.views_total) throw Error(ErrorKind::InvalidInput, "scene view count must equal views_total");
    const int m = train.source_counts[rng.below(train.source_counts.size())];
    std::vector<int> order(static_cast<std::size_t>(views));
    std::iota(order.begin(), order.end(), 0);
    for (int i = views - 1; i > 0; --i) std::swap(order[static_cast<std::size_t>(i)], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    TrainingBatch batch;
    std::vector<char> is_source(static_cast<std::size_t>(views), 0);
    for (int i = 0; i < m; ++i) is_source[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
    for (int v = 0; v < views; ++v) (is_source[static_cast<std::size_t>(v)] ? batch.source_views : batch.target_views).push_back(v);

    // Targets are guided by the ground truth of the sources, warped.
    GlobalPointCloud cloud;
    for (int v : batch.source_views) insert_scm(cloud, scene.truth[static_cast<std::size_t>(v)], v);

    // Avoid t = 0 exactly: the v target is then pure noise and carries no signal.
    batch.t = std::max(1e-3, rng.uniform());
    const auto state = schedule(batch.t);
    batch.sample.views = views;
    for (int v = 0; v < views; ++v) {
        const auto vi = static_cast<std::size_t>(v);
        ViewInput input{scene.cameras[vi], scene.layout_semantic[vi], scene.layout_scm[vi], std::nullopt, std::nullopt};
        if (is_source[vi]) {
            input.image = scene.truth[vi].color;
        } else {
            input.warp = splat(cloud, scene.cameras[vi], train.warp_radius);
        }
        batch.sample.conditions.push_back(view_condition(cfg, input, scene.norm));
        for (int k = 0; k < kModalities; ++k) {
            const auto& x0 = scene.clean[vi][static_cast<std::size_t>(k)];
            if (is_source[vi] && k == static_cast<int>(Modality::Image)) {
                batch.sample.streams.push_back(x0);
                batch.sample.timesteps.push_back(0.0f);
                batch.v_targets.emplace_back();
                continue;
            }
            Mat<float> eps(x0.rows(), x0.cols());
            for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = static_cast<float>(rng.normal());
            batch.sample.streams.push_back(noisy_from(x0, eps, state));
            batch.sample.timesteps.push_back(static_cast<float>(batch.t));
            batch.v_targets.push_back(v_target(x0, eps, state));
        }
    }
    return batch;
}

double training_loss(const TrainingBatch& batch, DenoiserModel& model, bool backward) {
    Tape<float> tape;
    const std::span<const DenoiserSample> one(&batch.sample, 1);
    const auto outs = denoiser_graph(tape, model.weights, model.config, one);
    const int l = model.config.tokens_per_view();
    std::vector<Var> terms;
    std::vector<float> weights;
    int supervised = 0;
    for (const auto& t : batch.v_targets) supervised += t.size() > 0 ? 1 : 0;
    if (supervised == 0) throw Error(ErrorKind::InvalidInput, "training batch has no supervised stream");
    for (int m = 0; m < kModalities; ++m) {
        std::vector<int> rows;
        std::vector<const Mat<float>*> targets;
        for (int v = 0; v < batch.sample.views; ++v) {
            const auto& target = batch.v_targets[static_cast<std::size_t>(v * kModalities + m)];
            if (target.size() == 0) continue;
            for (int t = 0; t < l; ++t) rows.push_back(v * l + t);
            targets.push_back(&target);
        }
        if (targets.empty()) continue;
        Mat<float> stacked(static_cast<Eigen::Index>(rows.size()), targets[0]->cols());
        for (std::size_t i = 0; i < targets.size(); ++i) stacked.middleRows(static_cast<Eigen::Index>(i) * l, l) = *targets[i];
        terms.push_back(tape.mse(tape.gather(outs[static_cast<std::size_t>(m)], std::move(rows), 1), stacked));
        weights.push_back(static_cast<float>(targets.size()) / static_cast<float>(supervised));
    }
    const Var loss = tape.weighted_sum(terms, weights);
    if (backward) tape.backward(loss);
    return tape.value(loss)(0, 0);
}

double train_step(const std::vector<SceneData>& scenes, DenoiserModel& model, nn::Adam<float>& optimizer,
                  const DenoiserConfig& cfg, const DiffusionTrainConfig& train, int step) {
    if (scenes.empty()) throw Error(ErrorKind::InvalidInput, "train_step: no scenes");
    Rng rng = Rng(train.seed).fork(static_cast<std::uint64_t>(step));
    const auto batch = build_training_batch(scenes[static_cast<std::size_t>(step) % scenes.size()], cfg, train, rng);
    model.weights.zero_grad();
    const double loss = training_loss(batch, model, true);
    if (!std::isfinite(loss)) {
        throw Error(ErrorKind::Divergence,
                    "diffusion training diverged at t = " + std::to_string(batch.t) + " with " +
                        std::to_string(batch.source_views.size()) + " sources",
                    "step " + std::to_string(step));
    }
    optimizer.step(model.weights);
    return loss;
}

DenoiserSample initial_sample(const GenerationInputs& inputs, const DenoiserConfig& cfg, std::uint64_t seed) {
    const int views = static_cast<int>(inputs.views.size());
    if (views == 0) throw Error(ErrorKind::InvalidInput, "sample: no views");
    DenoiserSample s;
    s.views = views;
    Rng rng(seed);
    for (int v = 0; v < views; ++v) {
        const auto& view = inputs.views[static_cast<std::size_t>(v)];
        s.conditions.push_back(view_condition(cfg, view, inputs.norm));
        for (int m = 0; m < kModalities; ++m) {
            if (m == static_cast<int>(Modality::Image) && view.is_source()) {
                s.streams.push_back(encode_image_stream(*view.image, cfg.patch));
                s.timesteps.push_back(0.0f);
                continue;
            }
            Mat<float> x(cfg.tokens_per_view(), cfg.stream_channels(static_cast<Modality>(m)));
            Rng stream = rng.fork(static_cast<std::uint64_t>(v * kModalities + m));
            for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(stream.normal());
            s.streams.push_back(std::move(x));
            s.timesteps.push_back(1.0f);
        }
    }
    return s;
}

GeneratedStreams sample(const GenerationInputs& inputs, const DenoiserModel& model, int steps, std::uint64_t seed) {
    if (steps < 1) throw Error(ErrorKind::InvalidInput, "sample: steps must be at least 1");
    DenoiserSample s = initial_sample(inputs, model.config, seed);
    std::vector<char> noisy;
    for (float t : s.timesteps) noisy.push_back(t > 0.0f ? 1 : 0);
    for (int k = steps; k >= 1; --k) {
        const auto now = schedule(static_cast<double>(k) / steps);
        const auto next = schedule(static_cast<double>(k - 1) / steps);
        for (std::size_t i = 0; i < s.streams.size(); ++i) s.timesteps[i] = noisy[i] ? static_cast<float>(now.t) : 0.0f;
        const auto v = denoiser_forward(std::span<const DenoiserSample>(&s, 1), model)[0];
        for (std::size_t i = 0; i < s.streams.size(); ++i) {
            if (!noisy[i]) continue;
            Mat<float> x0 = x0_from_v(s.streams[i], v[i], now);
            // Image and one-hot streams live in [-1, 1]; geometry latents are unbounded.
            if (static_cast<int>(i % kModalities) != static_cast<int>(Modality::Geometry)) x0 = x0.cwiseMax(-1.0f).cwiseMin(1.0f);
            const Mat<float> eps = eps_from_v(s.streams[i], v[i], now);
            s.streams[i] = noisy_from(x0, eps, next);
        }
    }
    return {std::move(s.streams)};
}

ViewMaps decode_view(const GeneratedStreams& generated, int view, const CameraView& camera, const DenoiserConfig& cfg,
                     const CodecParams& codec, const ScmNormalization& norm) {
    const auto base = static_cast<std::size_t>(view * kModalities);
    if (view < 0 || base + kModalities > generated.streams.size()) throw Error(ErrorKind::InvalidInput, "decode_view: view out of range");
    const int size = cfg.image_size;
    ViewMaps maps;
    maps.color = decode_image_stream(generated.streams[base], size, cfg.patch);
    maps.semantic = decode_semantic_stream(generated.streams[base + 1], size, cfg.categories, cfg.patch);
    auto geo = decode_geometry_stream(generated.streams[base + 2], size, codec, norm);
    maps.scm = std::move(geo.scm);
    maps.depth = DepthMap(size, size, 1, 0.0);
    maps.confidence = Image<float>(size, size, 1);
    const float above_one = std::nextafter(1.0f, 2.0f);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const Vec3 p(maps.scm.xyz.at(x, y, 0), maps.scm.xyz.at(x, y, 1), maps.scm.xyz.at(x, y, 2));
            const double z = camera.pose.to_camera(p).z();
            maps.confidence.at(x, y) = std::max(static_cast<float>(geo.confidence.at(x, y)), above_one);
            if (z > kNearPlane && std::isfinite(z)) {
                maps.depth.at(x, y) = z;
            } else {
                maps.scm.valid.at(x, y) = 0;
                for (int c = 0; c < 3; ++c) maps.scm.xyz.at(x, y, c) = 0.0;
            }
        }
    }
    return maps;
}

}  // namespace spatialgen
