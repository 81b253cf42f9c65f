#include "spatialgen/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace spatialgen {

namespace {

using nn::Mat;
using nn::Tape;
using nn::Var;

int log2_exact(int f) {
    int n = 0;
    while ((1 << n) < f) ++n;
    if ((1 << n) != f) throw Error(ErrorKind::InvalidInput, "codec factor must be a power of two");
    return n;
}

void check_same_shape(const Image<double>& a, int w, int h, int c, const char* what) {
    if (!a.same_shape(w, h, c)) throw Error(ErrorKind::InvalidInput, std::string(what) + ": shape mismatch");
}

Image<double> pool2(const Image<double>& in) {
    Image<double> out(in.width / 2, in.height / 2, in.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < in.channels; ++c) {
                out.at(x, y, c) = 0.25 * (in.at(2 * x, 2 * y, c) + in.at(2 * x + 1, 2 * y, c) + in.at(2 * x, 2 * y + 1, c) +
                                          in.at(2 * x + 1, 2 * y + 1, c));
            }
    return out;
}

// Mean gradient-residual norm of one scale; adds its derivative into `d`.
double scale_term(const Image<double>& r, double spacing, Image<double>& d) {
    const int w = r.width, h = r.height, ch = r.channels;
    const double inv_n = 1.0 / static_cast<double>(r.pixel_count());
    double sum = 0;
    std::vector<double> gx(static_cast<std::size_t>(ch)), gy(static_cast<std::size_t>(ch));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sq = 0;
            for (int c = 0; c < ch; ++c) {
                gx[c] = x + 1 < w ? (r.at(x + 1, y, c) - r.at(x, y, c)) / spacing : 0.0;
                gy[c] = y + 1 < h ? (r.at(x, y + 1, c) - r.at(x, y, c)) / spacing : 0.0;
                sq += gx[c] * gx[c] + gy[c] * gy[c];
            }
            if (sq == 0.0) continue;  // the norm's subgradient at zero is taken as 0
            const double n = std::sqrt(sq);
            sum += n;
            const double k = inv_n / (n * spacing);
            for (int c = 0; c < ch; ++c) {
                if (x + 1 < w) {
                    d.at(x + 1, y, c) += k * gx[c];
                    d.at(x, y, c) -= k * gx[c];
                }
                if (y + 1 < h) {
                    d.at(x, y + 1, c) += k * gy[c];
                    d.at(x, y, c) -= k * gy[c];
                }
            }
        }
    }
    return sum * inv_n;
}

Mat<float> image_rows(const Image<double>& img) {
    Mat<float> m(static_cast<Eigen::Index>(img.pixel_count()), img.channels);
    for (std::size_t i = 0; i < img.data.size(); ++i) m.data()[i] = static_cast<float>(img.data[i]);
    return m;
}

struct ConvLayer {
    std::string name;
    int in = 0, out = 0, stride = 1;
    bool upsample_first = false;
    bool activation = true;
};

std::vector<ConvLayer> encoder_layers(const CodecArch& a) {
    const int downs = log2_exact(a.factor);
    if (static_cast<int>(a.encoder.size()) != downs) {
        throw Error(ErrorKind::InvalidInput, "encoder needs one hidden width per 2x downsampling");
    }
    std::vector<ConvLayer> layers;
    int in = 3;
    for (std::size_t i = 0; i < a.encoder.size(); ++i) {
        layers.push_back({"encoder.conv" + std::to_string(i), in, a.encoder[i], i == 0 ? 1 : 2, false, true});
        in = a.encoder[i];
    }
    layers.push_back({"encoder.conv" + std::to_string(a.encoder.size()), in, a.latent_channels, 2, false, false});
    return layers;
}

std::vector<ConvLayer> decoder_layers(const CodecArch& a) {
    const int ups = log2_exact(a.factor);
    if (static_cast<int>(a.decoder.size()) < ups + 1) {
        throw Error(ErrorKind::InvalidInput, "decoder needs more hidden layers than 2x upsamplings");
    }
    std::vector<ConvLayer> layers;
    int in = a.latent_channels;
    for (std::size_t i = 0; i < a.decoder.size(); ++i) {
        const bool up = i >= 1 && static_cast<int>(i) <= ups;
        layers.push_back({"decoder.conv" + std::to_string(i), in, a.decoder[i], 1, up, true});
        in = a.decoder[i];
    }
    layers.push_back({"decoder.conv" + std::to_string(a.decoder.size()), in, 4, 1, false, false});
    return layers;
}

// Runs a conv stack on an h x w input (rows = pixels); updates h, w.
Var conv_stack(Tape<float>& tape, nn::ParamSet<float>& params, const std::vector<ConvLayer>& layers, Var x, int& h, int& w) {
    for (const auto& l : layers) {
        if (l.upsample_first) {
            x = tape.gather(x, nn::upsample2x_index(h, w), 1);
            h *= 2;
            w *= 2;
        }
        const auto geom = nn::conv_geometry(h, w, 3, l.stride);
        x = tape.gather(x, geom.index, 9);
        x = tape.add_row(tape.matmul(x, tape.param(params.at(l.name + ".w"))), tape.param(params.at(l.name + ".b")));
        if (l.activation) x = tape.silu(x);
        h = geom.out_h;
        w = geom.out_w;
    }
    return x;
}

Mat<float> run_encoder(const CodecParams& params, const Mat<float>& input, int h, int w) {
    // The encoder is frozen, so the tape records no gradients; the const_cast
    // only satisfies Tape::param's signature.
    auto& weights = const_cast<nn::ParamSet<float>&>(params.weights);
    Tape<float> tape;
    const Var out = conv_stack(tape, weights, encoder_layers(params.arch), tape.constant(input), h, w);
    return tape.value(out);
}

Mat<float> run_decoder(const CodecParams& params, const Mat<float>& latent, int h, int w) {
    auto& weights = const_cast<nn::ParamSet<float>&>(params.weights);
    Tape<float> tape;
    const Var out = conv_stack(tape, weights, decoder_layers(params.arch), tape.constant(latent), h, w);
    return tape.value(out);
}

Mat<float> latent_rows(const LatentGrid& latent) {
    Mat<float> m(static_cast<Eigen::Index>(latent.pixel_count()), latent.channels);
    std::copy(latent.data.begin(), latent.data.end(), m.data());
    return m;
}

struct DecoderOutput {
    Image<double> pred;  // normalized
    Image<double> raw;
};

DecoderOutput split_output(const Mat<float>& out, int h, int w) {
    DecoderOutput d{Image<double>(w, h, 3), Image<double>(w, h, 1)};
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (int c = 0; c < 3; ++c) d.pred.data[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(c)] = out(i, c);
        d.raw.data[static_cast<std::size_t>(i)] = out(i, 3);
    }
    return d;
}

Image<double> confidence_of(const Image<double>& raw) {
    Image<double> c(raw.width, raw.height, 1);
    for (std::size_t i = 0; i < raw.data.size(); ++i) c.data[i] = confidence_from_raw(raw.data[i]);
    return c;
}

}  // namespace

double confidence_from_raw(double raw) {
    return 1.0 + std::exp(std::clamp(raw, kRawConfidenceMin, kRawConfidenceMax));
}

double confidence_slope(double raw) {
    if (raw < kRawConfidenceMin || raw > kRawConfidenceMax) return 0.0;
    return std::exp(raw);
}

ScmNormalization ScmNormalization::from_layout(const SceneLayout& layout) {
    if (layout.rooms.empty()) throw Error(ErrorKind::InvalidInput, "layout has no rooms");
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& r : layout.rooms) {
        for (const auto& v : r.vertices) {
            lo = lo.cwiseMin(Vec3(v.x(), v.y(), r.floor_z));
            hi = hi.cwiseMax(Vec3(v.x(), v.y(), r.ceiling_z));
        }
    }
    ScmNormalization n;
    n.center = 0.5 * (lo + hi);
    n.half_extent = 0.5 * (hi - lo).maxCoeff();
    if (!(n.half_extent > 0)) throw Error(ErrorKind::InvalidInput, "degenerate room bounds");
    return n;
}

Image<double> normalize_scm(const SceneCoordMap& scm, const ScmNormalization& norm) {
    Image<double> out(scm.width(), scm.height(), 3);
    for (std::size_t i = 0; i < scm.valid.data.size(); ++i) {
        if (!scm.valid.data[i]) continue;
        const Vec3 p = norm.normalize(Vec3(scm.xyz.data[3 * i], scm.xyz.data[3 * i + 1], scm.xyz.data[3 * i + 2]));
        for (int c = 0; c < 3; ++c) out.data[3 * i + static_cast<std::size_t>(c)] = p[c];
    }
    return out;
}

LossTerms loss_rec(const Image<double>& pred, const SceneCoordMap& target, const Image<double>& confidence) {
    const int w = target.width(), h = target.height();
    check_same_shape(pred, w, h, 3, "loss_rec");
    check_same_shape(confidence, w, h, 1, "loss_rec");
    const std::size_t n = target.valid_count();
    if (n == 0) throw Error(ErrorKind::InvalidInput, "loss_rec: no valid pixels to supervise");
    LossTerms out{0.0, Image<double>(w, h, 3), Image<double>(w, h, 1)};
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < target.valid.data.size(); ++i) {
        if (!target.valid.data[i]) continue;
        const double c = confidence.data[i];
        if (!(c > 1.0)) throw Error(ErrorKind::InvalidInput, "loss_rec: confidence must exceed 1");
        double sq = 0;
        for (int k = 0; k < 3; ++k) {
            const double e = pred.data[3 * i + static_cast<std::size_t>(k)] - target.xyz.data[3 * i + static_cast<std::size_t>(k)];
            sq += e * e;
        }
        const double err = std::sqrt(sq);
        out.value += c * err - kConfidencePenalty * std::log(c);
        out.d_confidence.data[i] = (err - kConfidencePenalty / c) * inv_n;
        if (err > 0) {
            for (int k = 0; k < 3; ++k) {
                const auto j = 3 * i + static_cast<std::size_t>(k);
                out.d_pred.data[j] = c * (pred.data[j] - target.xyz.data[j]) / err * inv_n;
            }
        }
    }
    out.value *= inv_n;
    return out;
}

LossTerms loss_grad(const Image<double>& pred, const Image<double>& target) {
    const int w = target.width, h = target.height;
    check_same_shape(pred, w, h, target.channels, "loss_grad");
    const int div = 1 << (kGradScales - 1);
    if (w % div != 0 || h % div != 0 || w == 0 || h == 0) {
        throw Error(ErrorKind::InvalidInput, "loss_grad: dimensions must be divisible by " + std::to_string(div));
    }
    std::vector<Image<double>> residual;
    residual.reserve(kGradScales);
    Image<double> r(w, h, target.channels);
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = pred.data[i] - target.data[i];
    residual.push_back(std::move(r));
    for (int s = 1; s < kGradScales; ++s) residual.push_back(pool2(residual.back()));

    LossTerms out;
    std::vector<Image<double>> d;
    for (const auto& res : residual) d.emplace_back(res.width, res.height, res.channels);
    for (int s = 0; s < kGradScales; ++s) {
        out.value += scale_term(residual[static_cast<std::size_t>(s)], static_cast<double>(1 << s), d[static_cast<std::size_t>(s)]);
    }
    // Back through the pooling chain: each fine pixel gets a quarter of its parent.
    for (int s = kGradScales - 1; s > 0; --s) {
        const auto& coarse = d[static_cast<std::size_t>(s)];
        auto& fine = d[static_cast<std::size_t>(s - 1)];
        for (int y = 0; y < fine.height; ++y)
            for (int x = 0; x < fine.width; ++x)
                for (int c = 0; c < fine.channels; ++c) fine.at(x, y, c) += 0.25 * coarse.at(x / 2, y / 2, c);
    }
    out.d_pred = std::move(d[0]);
    out.d_confidence = Image<double>(w, h, 1);
    return out;
}

CodecLoss total_loss(const Image<double>& pred, const SceneCoordMap& target, const Image<double>& confidence,
                     double grad_weight) {
    auto rec = loss_rec(pred, target, confidence);
    auto grad = loss_grad(pred, target.xyz);
    CodecLoss out;
    out.rec = rec.value;
    out.grad = grad.value;
    out.total = rec.value + grad_weight * grad.value;
    out.d_pred = std::move(rec.d_pred);
    for (std::size_t i = 0; i < out.d_pred.data.size(); ++i) out.d_pred.data[i] += grad_weight * grad.d_pred.data[i];
    out.d_confidence = std::move(rec.d_confidence);
    return out;
}

nlohmann::json CodecArch::to_json() const {
    return {{"factor", factor}, {"latent_channels", latent_channels}, {"encoder", encoder}, {"decoder", decoder}};
}

CodecArch CodecArch::from_json(const nlohmann::json& j) {
    try {
        CodecArch a;
        a.factor = j.at("factor").get<int>();
        a.latent_channels = j.at("latent_channels").get<int>();
        a.encoder = j.at("encoder").get<std::vector<int>>();
        a.decoder = j.at("decoder").get<std::vector<int>>();
        encoder_layers(a);
        decoder_layers(a);
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("bad codec architecture: ") + e.what(), "codec");
    }
}

CodecParams CodecParams::init(std::uint64_t seed, const CodecArch& arch) {
    CodecParams p;
    p.arch = arch;
    Rng rng(seed);
    auto add_layers = [&](const std::vector<ConvLayer>& layers, bool frozen) {
        for (const auto& l : layers) {
            auto& w = p.weights.add(l.name + ".w", 9 * l.in, l.out);
            auto& b = p.weights.add(l.name + ".b", 1, l.out);
            const double gain = l.activation ? 2.0 : 1.0;
            nn::init_normal(w.value, rng, std::sqrt(gain / (9.0 * l.in)));
            w.frozen = b.frozen = frozen;
        }
    };
    add_layers(encoder_layers(arch), true);
    add_layers(decoder_layers(arch), false);
    return p;
}

void CodecParams::save(Checkpoint& ckpt, const std::string& prefix) const {
    ckpt.descriptor["codec"] = {{"arch", arch.to_json()}, {"latent_scale", latent_scale}, {"prefix", prefix}};
    ckpt.store(prefix, weights);
}

CodecParams CodecParams::load(const Checkpoint& ckpt, const std::string& prefix) {
    if (!ckpt.descriptor.contains("codec")) throw Error(ErrorKind::Schema, "checkpoint has no codec section", "codec");
    const auto& desc = ckpt.descriptor.at("codec");
    auto p = CodecParams::init(0, CodecArch::from_json(desc.at("arch")));
    p.latent_scale = desc.value("latent_scale", 1.0);
    ckpt.restore(prefix, p.weights);
    return p;
}

LatentGrid encode(const SceneCoordMap& scm, const CodecParams& params, const ScmNormalization& norm) {
    const int f = params.arch.factor;
    const int w = scm.width(), h = scm.height();
    if (w == 0 || h == 0 || w % f != 0 || h % f != 0) {
        throw Error(ErrorKind::InvalidInput, "encode: SCM dimensions must be divisible by " + std::to_string(f));
    }
    const Mat<float> out = run_encoder(params, image_rows(normalize_scm(scm, norm)), h, w);
    LatentGrid latent(w / f, h / f, params.arch.latent_channels);
    std::copy(out.data(), out.data() + out.size(), latent.data.begin());
    return latent;
}

DecodedScm decode(const LatentGrid& latent, const CodecParams& params, const ScmNormalization& norm) {
    if (latent.channels != params.arch.latent_channels || latent.empty()) {
        throw Error(ErrorKind::InvalidInput, "decode: latent channels do not match the codec");
    }
    const int f = params.arch.factor;
    const int w = latent.width * f, h = latent.height * f;
    auto out = split_output(run_decoder(params, latent_rows(latent), latent.height, latent.width), h, w);
    DecodedScm d{SceneCoordMap{Image<double>(w, h, 3), Mask(w, h, 1, 1)}, confidence_of(out.raw), std::move(out.raw)};
    for (std::size_t i = 0; i < d.scm.valid.data.size(); ++i) {
        const Vec3 p = norm.denormalize(Vec3(out.pred.data[3 * i], out.pred.data[3 * i + 1], out.pred.data[3 * i + 2]));
        for (int c = 0; c < 3; ++c) d.scm.xyz.data[3 * i + static_cast<std::size_t>(c)] = p[c];
    }
    return d;
}

std::vector<CodecLogRow> train_codec(const std::vector<CodecSample>& data, const CodecTrainConfig& config,
                                     CodecParams& params) {
    if (data.empty()) throw Error(ErrorKind::InvalidInput, "train_codec: empty dataset");
    if (config.steps < 0 || config.batch < 1) throw Error(ErrorKind::InvalidInput, "train_codec: bad step or batch count");
    for (const auto& [name, p] : params.weights.all()) {
        if (name.rfind("encoder.", 0) == 0 && !p.frozen) {
            throw Error(ErrorKind::Invariant, "train_codec: encoder must be frozen", name);
        }
    }
    const int f = params.arch.factor;

    // The encoder is frozen, so latents and normalized targets are computed once.
    struct Prepared {
        Mat<float> latent;
        int lh, lw;
        SceneCoordMap target;
    };
    std::vector<Prepared> prepared;
    double sum = 0, sq = 0;
    std::size_t count = 0;
    for (const auto& s : data) {
        const auto latent = encode(s.scm, params, s.norm);
        for (float v : latent.data) {
            sum += v;
            sq += static_cast<double>(v) * v;
        }
        count += latent.data.size();
        prepared.push_back({latent_rows(latent), latent.height, latent.width, SceneCoordMap{normalize_scm(s.scm, s.norm), s.scm.valid}});
    }
    const double mean = sum / static_cast<double>(count);
    params.latent_scale = std::max(1e-6, std::sqrt(std::max(0.0, sq / static_cast<double>(count) - mean * mean)));

    nn::Adam<float> opt(config.lr);
    Rng rng = Rng(config.seed).fork(0xC0DEC);
    std::vector<CodecLogRow> log;
    for (int step = 0; step < config.steps; ++step) {
        params.weights.zero_grad();
        CodecLogRow row;
        row.step = step;
        for (int b = 0; b < config.batch; ++b) {
            const auto& s = prepared[data.size() == 1 ? 0 : rng.below(data.size())];
            Tape<float> tape;
            int h = s.lh, w = s.lw;
            const Var out = conv_stack(tape, params.weights, decoder_layers(params.arch), tape.constant(s.latent), h, w);
            if (!tape.value(out).allFinite()) {
                throw Error(ErrorKind::Divergence, "codec training diverged (non-finite output)", "step " + std::to_string(step));
            }
            const auto split = split_output(tape.value(out), s.lh * f, s.lw * f);
            const auto loss = total_loss(split.pred, s.target, confidence_of(split.raw), config.grad_weight);
            if (!std::isfinite(loss.total)) {
                throw Error(ErrorKind::Divergence, "codec training diverged (non-finite loss)", "step " + std::to_string(step));
            }
            row.loss_rec += loss.rec / config.batch;
            row.loss_grad += loss.grad / config.batch;
            row.total += loss.total / config.batch;
            Mat<float> seed(tape.value(out).rows(), 4);
            for (Eigen::Index i = 0; i < seed.rows(); ++i) {
                const auto k = static_cast<std::size_t>(i);
                for (int c = 0; c < 3; ++c) seed(i, c) = static_cast<float>(loss.d_pred.data[3 * k + static_cast<std::size_t>(c)] / config.batch);
                seed(i, 3) = static_cast<float>(loss.d_confidence.data[k] * confidence_slope(split.raw.data[k]) / config.batch);
            }
            tape.backward(out, seed);
        }
        log.push_back(row);
        opt.step(params.weights);
    }
    return log;
}

std::string codec_log_csv(const std::vector<CodecLogRow>& rows) {
    std::ostringstream out;
    out.precision(9);
    out << "step,loss_rec,loss_grad,total\n";
    for (const auto& r : rows) out << r.step << ',' << r.loss_rec << ',' << r.loss_grad << ',' << r.total << '\n';
    return out.str();
}

double reconstruction_error(const CodecSample& sample, const CodecParams& params) {
    const auto decoded = decode(encode(sample.scm, params, sample.norm), params, sample.norm);
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < sample.scm.valid.data.size(); ++i) {
        if (!sample.scm.valid.data[i]) continue;
        const Vec3 a(decoded.scm.xyz.data[3 * i], decoded.scm.xyz.data[3 * i + 1], decoded.scm.xyz.data[3 * i + 2]);
        const Vec3 b(sample.scm.xyz.data[3 * i], sample.scm.xyz.data[3 * i + 1], sample.scm.xyz.data[3 * i + 2]);
        sum += (a - b).norm() / sample.norm.half_extent;
        ++n;
    }
    if (n == 0) throw Error(ErrorKind::InvalidInput, "reconstruction_error: no valid pixels");
    return sum / static_cast<double>(n);
}

}  // namespace spatialgen
