#pragma once

#include "spatialgen/diffusion.hpp"
#include "spatialgen/synth.hpp"
#include "spatialgen/warp.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace spatialgen {

// Views of the trajectory, by index: the first M are sources, the rest are
// chunked in trajectory order.
struct IterationPlan {
    int view_count = 0;
    std::vector<int> sources;
    std::vector<std::vector<int>> batches;

    nlohmann::json to_json() const;
    static IterationPlan from_json(const nlohmann::json& j);
};

inline constexpr int kTrainingViews = 8;

// batch_size <= 0 selects 8 - M. Throws InvalidInput unless M is 1, 3 or 7
// and the trajectory has at least M + 1 views.
IterationPlan plan_iterations(int view_count, int sources, int batch_size = 0);

// Per-view layout conditions, shared by every backend.
struct LayoutCondition {
    SemanticMap semantic;
    SceneCoordMap scm;
};
LayoutCondition layout_condition(const SceneLayout& layout, const CameraView& camera);

struct BackendRequest {
    int call_index = 0;  // 0 for the initialization call
    std::vector<int> source_ids;
    std::vector<int> target_ids;
    std::vector<CameraView> cameras;          // sources then targets
    std::vector<LayoutCondition> conditions;  // sources then targets
    std::vector<ColorImage> source_images;
    std::vector<WarpedImage> warps;           // one per target

    int views() const { return static_cast<int>(cameras.size()); }
};

class GeneratorBackend {
public:
    virtual ~GeneratorBackend() = default;
    virtual std::string id() const = 0;
    virtual int max_views() const = 0;
    virtual nlohmann::json describe() const = 0;
    // Full view maps for every requested view, sources then targets. Source
    // colors are the given source images.
    virtual std::vector<ViewMaps> generate(const BackendRequest& request) = 0;
};

// Confidence the oracle reports for every pixel.
inline constexpr float kOracleConfidence = 2.0f;

// Renders ground truth. With scm_noise > 0 every SCM coordinate gets
// Gaussian noise of that std (meters) from a stream keyed by (seed, view id);
// depth follows the noisy points.
class OracleBackend : public GeneratorBackend {
public:
    OracleBackend(SynthScene scene, double scm_noise = 0.0, std::uint64_t seed = 0);
    std::string id() const override { return "oracle"; }
    int max_views() const override { return 1 << 20; }
    nlohmann::json describe() const override;
    std::vector<ViewMaps> generate(const BackendRequest& request) override;

private:
    SynthScene scene_;
    double noise_;
    std::uint64_t seed_;
};

// The multi-view denoiser plus the SCM codec.
class ToyBackend : public GeneratorBackend {
public:
    ToyBackend(DenoiserModel model, CodecParams codec, ScmNormalization norm, int steps, std::uint64_t seed);
    std::string id() const override { return "toy"; }
    int max_views() const override { return kTrainingViews; }
    nlohmann::json describe() const override;
    std::vector<ViewMaps> generate(const BackendRequest& request) override;

private:
    DenoiserModel model_;
    CodecParams codec_;
    ScmNormalization norm_;
    int steps_;
    std::uint64_t seed_;
};

struct PipelineConfig {
    double tau = kDefaultConfidenceTau;
    double splat_radius = kDefaultSplatRadius;
    // Each completed iteration is written below this directory when set.
    std::filesystem::path checkpoint_dir;
};

struct IterationRecord {
    int index = 0;  // 0 = initialization
    std::vector<int> views;
    std::size_t cloud_points = 0;  // after insertion
    std::size_t filtered_points = 0;  // warped into the targets
};

struct PipelineState {
    GlobalPointCloud cloud;
    std::vector<ViewMaps> views;         // per trajectory index
    std::vector<WarpedImage> warps;      // per trajectory index; empty for sources
    std::vector<IterationRecord> iterations;
    nlohmann::json manifest;
};

// Iterative dense view generation. Backend errors are rethrown with
// where = "iteration k"; completed iterations stay on disk.
PipelineState run_pipeline(const IterationPlan& plan, const std::vector<CameraView>& cameras, const SceneLayout& layout,
                           const std::vector<ColorImage>& source_images, GeneratorBackend& backend,
                           const PipelineConfig& config);

// views/<id>_{rgb,semantic,depth}.png, views/<id>.scm, optional warps, and
// cloud.ply.
void write_views(const std::filesystem::path& dir, const PipelineState& state, const std::vector<int>& ids);
void write_pipeline_outputs(const std::filesystem::path& dir, const PipelineState& state);

}  // namespace spatialgen
