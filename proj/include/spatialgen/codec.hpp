#pragma once

#include "spatialgen/checkpoint.hpp"
#include "spatialgen/layout.hpp"
#include "spatialgen/nn.hpp"
#include "spatialgen/raster.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace spatialgen {

// Weight of the log-confidence penalty in the reconstruction loss.
inline constexpr double kConfidencePenalty = 0.2;
// Raw confidence logits are clamped to this range so c = 1 + exp(raw) stays
// finite and strictly above 1 in double precision.
inline constexpr double kRawConfidenceMin = -30.0;
inline constexpr double kRawConfidenceMax = 30.0;
inline constexpr double kDefaultGradWeight = 1.0;
inline constexpr int kGradScales = 4;

double confidence_from_raw(double raw);
// d confidence / d raw (zero outside the clamp range).
double confidence_slope(double raw);

// Maps world coordinates into the cube [-1, 1]^3 that bounds the rooms.
struct ScmNormalization {
    Vec3 center = Vec3::Zero();
    double half_extent = 1.0;

    Vec3 normalize(const Vec3& p) const { return (p - center) / half_extent; }
    Vec3 denormalize(const Vec3& p) const { return p * half_extent + center; }
    static ScmNormalization from_layout(const SceneLayout& layout);
};

// Normalized coordinates, zero at invalid pixels.
Image<double> normalize_scm(const SceneCoordMap& scm, const ScmNormalization& norm);

struct LossTerms {
    double value = 0.0;
    Image<double> d_pred;        // d value / d pred, 3 channels
    Image<double> d_confidence;  // d value / d c, 1 channel (rec term only)
};

// mean over valid pixels of c * |pred - target| - 0.2 * log c, with the
// per-pixel Euclidean norm over the 3 coordinates.
LossTerms loss_rec(const Image<double>& pred, const SceneCoordMap& target, const Image<double>& confidence);

// Sum over 4 scales (2x2 mean pooling) of the mean per-pixel norm of the
// forward-difference gradient residual (x and y differences of all 3
// channels, divided by the pixel spacing of the scale, zero at the far edge).
LossTerms loss_grad(const Image<double>& pred, const Image<double>& target);

struct CodecLoss {
    double rec = 0.0, grad = 0.0, total = 0.0;
    Image<double> d_pred, d_confidence;
};
CodecLoss total_loss(const Image<double>& pred, const SceneCoordMap& target, const Image<double>& confidence,
                     double grad_weight);

struct CodecArch {
    int factor = 4;
    int latent_channels = 8;
    std::vector<int> encoder = {16, 32};  // hidden widths; strides 1, 2, then 2 into the latent
    std::vector<int> decoder = {32, 16, 16};

    nlohmann::json to_json() const;
    static CodecArch from_json(const nlohmann::json& j);
};

struct CodecParams {
    CodecArch arch;
    nn::ParamSet<float> weights;  // "encoder.*" frozen, "decoder.*" trainable
    double latent_scale = 1.0;    // latent std over the training set

    // Random encoder and decoder from `seed`; the encoder is frozen.
    static CodecParams init(std::uint64_t seed, const CodecArch& arch = {});
    void save(Checkpoint& ckpt, const std::string& prefix = "codec.") const;
    static CodecParams load(const Checkpoint& ckpt, const std::string& prefix = "codec.");
};

using LatentGrid = Image<float>;

// Latent of shape (H / f, W / f, c) for an SCM whose dims divide by f.
LatentGrid encode(const SceneCoordMap& scm, const CodecParams& params, const ScmNormalization& norm = {});

struct DecodedScm {
    SceneCoordMap scm;          // world coordinates, valid everywhere
    Image<double> confidence;   // > 1
    Image<double> raw;          // pre-activation confidence logits
};
DecodedScm decode(const LatentGrid& latent, const CodecParams& params, const ScmNormalization& norm = {});

struct CodecSample {
    SceneCoordMap scm;
    ScmNormalization norm;
};

struct CodecTrainConfig {
    int steps = 200;
    double lr = 2e-3;
    double grad_weight = kDefaultGradWeight;
    int batch = 1;
    std::uint64_t seed = 0;
};

struct CodecLogRow {
    int step = 0;
    double loss_rec = 0.0, loss_grad = 0.0, total = 0.0;
};

// Decoder-only Adam on total_loss in normalized coordinates. Throws
// Divergence (where = "step N") on a non-finite loss. Updates latent_scale.
std::vector<CodecLogRow> train_codec(const std::vector<CodecSample>& data, const CodecTrainConfig& config,
                                     CodecParams& params);

std::string codec_log_csv(const std::vector<CodecLogRow>& rows);

// Mean Euclidean distance between decode(encode(P)) and P over valid pixels,
// in normalized units.
double reconstruction_error(const CodecSample& sample, const CodecParams& params);

}  // namespace spatialgen
