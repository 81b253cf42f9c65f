#pragma once

#include "spatialgen/codec.hpp"
#include "spatialgen/nn.hpp"
#include "spatialgen/synth.hpp"
#include "spatialgen/view_maps.hpp"
#include "spatialgen/warp.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace spatialgen {

// ---- noise schedule -------------------------------------------------------

struct DiffusionState {
    double t = 0.0;
    double alpha = 1.0;
    double sigma = 0.0;
};

// Cosine schedule: alpha = cos(pi t / 2), sigma = sin(pi t / 2).
DiffusionState schedule(double t);

template <typename M>
M noisy_from(const M& x0, const M& eps, const DiffusionState& s) {
    using S = typename M::Scalar;
    return (S(s.alpha) * x0 + S(s.sigma) * eps).eval();
}
template <typename M>
M v_target(const M& x0, const M& eps, const DiffusionState& s) {
    using S = typename M::Scalar;
    return (S(s.alpha) * eps - S(s.sigma) * x0).eval();
}
template <typename M>
M x0_from_v(const M& xt, const M& v, const DiffusionState& s) {
    using S = typename M::Scalar;
    return (S(s.alpha) * xt - S(s.sigma) * v).eval();
}
template <typename M>
M eps_from_v(const M& xt, const M& v, const DiffusionState& s) {
    using S = typename M::Scalar;
    return (S(s.sigma) * xt + S(s.alpha) * v).eval();
}

// ---- tokens ---------------------------------------------------------------

enum class Modality { Image = 0, Semantic = 1, Geometry = 2 };
inline constexpr int kModalities = 3;

// Row placement of (sample, view, modality, token). The public layer API uses
// view-major rows; the denoiser stores each modality contiguously.
struct TokenLayout {
    int samples = 1;
    int views = 1;
    int modalities = kModalities;
    int tokens = 1;
    bool modality_major = false;

    int rows() const { return samples * views * modalities * tokens; }
    int row(int sample, int view, int modality, int token) const {
        if (modality_major) return ((modality * samples + sample) * views + view) * tokens + token;
        return ((sample * views + view) * modalities + modality) * tokens + token;
    }
};

// One group per (sample, modality) spanning all views.
nn::Groups cross_view_groups(const TokenLayout& layout);
// One group per (sample, view) spanning all modalities.
nn::Groups cross_modal_groups(const TokenLayout& layout);

struct TokenTensor {
    TokenLayout layout;
    nn::Mat<float> data;  // layout.rows() x width
};

// ---- model ----------------------------------------------------------------

struct DenoiserConfig {
    int width = 64;
    int depth = 4;  // alternating (cross-view, cross-modal) block pairs
    int heads = 4;
    int ffn_mult = 4;
    int patch = 4;
    int image_size = 64;
    int latent_channels = 8;
    int categories = 68;
    // Assumed std of the x0 prediction error; sets how much of v the output
    // head takes from the noisy input directly.
    double residual_std = 0.1;

    int tokens_per_view() const { return (image_size / patch) * (image_size / patch); }
    int grid() const { return image_size / patch; }
    int stream_channels(Modality m) const;
    // layout semantics (palette RGB) + layout SCM + layout validity + Plucker
    // + warp RGB + warp coverage + source flag
    int condition_channels() const { return 3 * patch * patch * 3 + 2 * patch * patch + 6 + 1; }

    void validate() const;
    nlohmann::json to_json() const;
    static DenoiserConfig from_json(const nlohmann::json& j);
};

inline constexpr int kTimeFeatures = 16;

struct DenoiserModel {
    DenoiserConfig config;
    nn::ParamSet<float> weights;

    static DenoiserModel init(const DenoiserConfig& config, std::uint64_t seed);
    void save(Checkpoint& ckpt, const std::string& prefix = "denoiser.") const;
    static DenoiserModel load(const Checkpoint& ckpt, const std::string& prefix = "denoiser.");
};

// Pre-norm attention sublayer plus feed-forward sublayer of block `block`,
// applied over the given row groups.
TokenTensor cross_view_attention(const TokenTensor& tokens, const DenoiserModel& model, int block);
TokenTensor cross_modal_attention(const TokenTensor& tokens, const DenoiserModel& model, int block);

// One scene's worth of denoiser input.
struct DenoiserSample {
    int views = 0;
    std::vector<nn::Mat<float>> streams;     // views * 3, index view * 3 + modality: tokens x channels
    std::vector<float> timesteps;            // per stream; 0 for clean conditioning streams
    std::vector<nn::Mat<float>> conditions;  // per view: tokens x condition_channels
};

// v prediction per stream, same shapes as the input streams. Samples never
// interact. Throws InvalidInput for missing conditions or bad shapes.
std::vector<std::vector<nn::Mat<float>>> denoiser_forward(std::span<const DenoiserSample> batch,
                                                          const DenoiserModel& model);

// ---- stream codecs ---------------------------------------------------------

// Rows are patches in raster order; columns are (dy, dx, channel).
nn::Mat<float> patchify(const Image<float>& img, int patch);
Image<float> unpatchify(const nn::Mat<float>& tokens, int width, int height, int channels, int patch);

nn::Mat<float> encode_image_stream(const ColorImage& rgb, int patch);  // 2 * rgb - 1
ColorImage decode_image_stream(const nn::Mat<float>& tokens, int size, int patch);
nn::Mat<float> encode_semantic_stream(const SemanticMap& sem, int categories, int patch);  // one-hot as +-1
SemanticMap decode_semantic_stream(const nn::Mat<float>& tokens, int size, int categories, int patch);
nn::Mat<float> encode_geometry_stream(const SceneCoordMap& scm, const CodecParams& codec, const ScmNormalization& norm);
DecodedScm decode_geometry_stream(const nn::Mat<float>& tokens, int size, const CodecParams& codec,
                                  const ScmNormalization& norm);

// ---- conditioning ----------------------------------------------------------

struct ViewInput {
    CameraView camera;
    SemanticMap layout_semantic;
    SceneCoordMap layout_scm;
    std::optional<ColorImage> image;  // present for source views
    std::optional<WarpedImage> warp;  // present for target views
    bool is_source() const { return image.has_value(); }
};

struct GenerationInputs {
    std::vector<ViewInput> views;
    ScmNormalization norm;
};

nn::Mat<float> view_condition(const DenoiserConfig& config, const ViewInput& view, const ScmNormalization& norm);

// ---- training --------------------------------------------------------------

// Ground truth of one scene at the model resolution, plus its clean latents.
struct SceneData {
    std::vector<CameraView> cameras;
    std::vector<ViewMaps> truth;
    std::vector<SemanticMap> layout_semantic;
    std::vector<SceneCoordMap> layout_scm;
    ScmNormalization norm;
    std::vector<std::array<nn::Mat<float>, kModalities>> clean;  // per view
};

SceneData prepare_scene(const SynthScene& scene, const std::vector<CameraView>& cameras, const DenoiserConfig& config,
                        const CodecParams& codec);

// RMS of the raw geometry latents across the prepared scenes, the value to
// store as codec.latent_scale before preparing them again.
double geometry_latent_rms(const std::vector<SceneData>& scenes, const CodecParams& codec);

struct DiffusionTrainConfig {
    int views_total = 8;
    std::vector<int> source_counts = {1, 3, 7};
    double lr = 1e-3;
    int steps = 2000;
    std::uint64_t seed = 0;
    double warp_radius = kDefaultSplatRadius;

    void validate() const;
    nlohmann::json to_json() const;
    static DiffusionTrainConfig from_json(const nlohmann::json& j);
};

struct TrainingBatch {
    std::vector<int> source_views;
    std::vector<int> target_views;
    double t = 0.0;
    DenoiserSample sample;
    std::vector<nn::Mat<float>> v_targets;  // per stream; empty when unsupervised
    int noisy_image_streams() const;
};

// Draws M from source_counts, a source subset, t and noise; warps the ground
// truth of the sources into every target view. Deterministic in rng.
TrainingBatch build_training_batch(const SceneData& scene, const DenoiserConfig& config,
                                   const DiffusionTrainConfig& train, Rng& rng);

// Mean over supervised streams of the per-stream v MSE; records gradients in
// the model weights when `backward` is set.
double training_loss(const TrainingBatch& batch, DenoiserModel& model, bool backward);

// One Adam step on scenes[step % size]; randomness from (seed, step).
// Throws Divergence (where = "step N") on a non-finite loss.
double train_step(const std::vector<SceneData>& scenes, DenoiserModel& model, nn::Adam<float>& optimizer,
                  const DenoiserConfig& config, const DiffusionTrainConfig& train, int step);

// ---- sampling ---------------------------------------------------------------

struct GeneratedStreams {
    std::vector<nn::Mat<float>> streams;  // views * 3 clean estimates; source images passed through
};

// Sampler start: unit Gaussian noise at t = 1 for every stream except the
// source images, which are passed clean with timestep 0.
DenoiserSample initial_sample(const GenerationInputs& inputs, const DenoiserConfig& config, std::uint64_t seed);

// Deterministic DDIM over t = 1, (steps-1)/steps, ..., 0 for every stream
// except the source images.
GeneratedStreams sample(const GenerationInputs& inputs, const DenoiserModel& model, int steps, std::uint64_t seed);

// Decodes the streams of view `view` into full view maps (confidence from the
// codec head).
ViewMaps decode_view(const GeneratedStreams& generated, int view, const CameraView& camera, const DenoiserConfig& config,
                     const CodecParams& codec, const ScmNormalization& norm);

}  // namespace spatialgen
