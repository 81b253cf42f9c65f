#pragma once

#include "spatialgen/pipeline.hpp"
#include "spatialgen/synth.hpp"
#include "spatialgen/trajectory.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace spatialgen::cli {

inline constexpr const char* kToolVersion = "1.0.0";

enum class ArgKind { Value, InputPath, OutputFile, OutputDir };

// One leaf subcommand. Every option is bound to a field and recorded by
// name, so the resolved values form the manifest and replay rebuilds the
// exact argument list from it.
class Command {
public:
    using Body = std::function<int(const Command&)>;

    Command(CLI::App& parent, const std::string& name, const std::string& description, std::vector<std::string> path);

    template <typename T>
    CLI::Option* option(const std::string& name, T& field, const std::string& help, ArgKind kind = ArgKind::Value,
                        bool required = false) {
        auto* opt = app_->add_option("--" + name, field, help);
        if (required) opt->required();
        record(name, kind, [&field] { return nlohmann::json(field); });
        return opt;
    }

    // Accepted both positionally and as --name.
    CLI::Option* positional(const std::string& name, std::string& field, const std::string& help,
                            ArgKind kind = ArgKind::InputPath);

    void body(Body fn) { body_ = std::move(fn); }

    const std::vector<std::string>& path() const { return path_; }
    bool selected() const { return app_->parsed(); }
    nlohmann::json args() const;
    nlohmann::json input_digests() const;
    // Output named by the first OutputFile / OutputDir argument, if any.
    std::filesystem::path output() const;
    bool output_is_dir() const;
    int run() const { return body_(*this); }

private:
    struct Arg {
        std::string name;
        ArgKind kind;
        std::function<nlohmann::json()> value;
    };
    void record(const std::string& name, ArgKind kind, std::function<nlohmann::json()> value);

    CLI::App* app_;
    std::vector<std::string> path_;
    std::vector<Arg> args_;
    Body body_;
};

using CommandList = std::vector<std::unique_ptr<Command>>;

void register_scene_commands(CLI::App& app, CommandList& commands);
void register_model_commands(CLI::App& app, CommandList& commands);
void register_pipeline_commands(CLI::App& app, CommandList& commands);

// FNV-1a over a file, or over the sorted relative names and contents of
// every regular file below a directory.
std::string digest_path(const std::filesystem::path& path);

// A synth scene document, or a bare layout lit by the default light.
SynthScene load_scene_file(const std::filesystem::path& path);
Trajectory load_trajectory_file(const std::filesystem::path& path);
// The file itself, or every *.json directly inside a directory except
// manifests, sorted.
std::vector<std::filesystem::path> json_inputs(const std::filesystem::path& path);
void ensure_parent(const std::filesystem::path& file);
std::string view_stem(int id);

// Per-scene inward-orbit cameras used by the codec and diffusion commands.
std::vector<CameraView> orbit_cameras(const SceneLayout& layout, int count, int size, std::uint64_t seed);

// Ground-truth colors of the plan's source views.
std::vector<ColorImage> render_sources(const SynthScene& scene, const std::vector<CameraView>& cameras,
                                       const IterationPlan& plan);

// views/, cloud.ply, fused.ply, pipeline.json, metrics.csv (generated views
// against ground truth) and summary.json (with the fused-cloud Chamfer).
void write_generation_outputs(const std::filesystem::path& out, const SynthScene& scene,
                              const std::vector<CameraView>& cameras, const IterationPlan& plan,
                              const PipelineState& state, double voxel, std::uint64_t seed);

}  // namespace spatialgen::cli
