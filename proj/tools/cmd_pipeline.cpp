#include "cli.hpp"

#include "spatialgen/checkpoint.hpp"
#include "spatialgen/fusion.hpp"
#include "spatialgen/io.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace spatialgen::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kChamferSamples = 20000;

std::string summary_line(const std::vector<ViewMetrics>& rows, double chamfer_m) {
    double p = 0.0, s = 0.0;
    for (const auto& r : rows) {
        p += r.psnr / static_cast<double>(rows.size());
        s += r.ssim / static_cast<double>(rows.size());
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu views, mean PSNR %.3f dB, mean SSIM %.4f, Chamfer %.5f m", rows.size(), p, s,
                  chamfer_m);
    return buf;
}

void add_run_command(CLI::App& app, CommandList& commands) {
    auto* pipeline = app.add_subcommand("pipeline", "Iterative dense view generation");
    pipeline->require_subcommand(1);
    pipeline->fallthrough();

    struct Opts {
        std::string layout, traj, backend = "oracle", checkpoint, iterations_dir, out;
        int sources = 1, batch = 0, steps = 20;
        double tau = kDefaultConfidenceTau, voxel = 0.02, noise = 0.0, splat_radius = kDefaultSplatRadius;
        std::uint64_t seed = 0;
    };
    auto o = std::make_shared<Opts>();
    auto& c = *commands.emplace_back(std::make_unique<Command>(
        *pipeline, "run", "Generate every trajectory view from the sources, growing a global point cloud",
        std::vector<std::string>{"pipeline", "run"}));
    c.option("layout", o->layout, "Scene or layout JSON", ArgKind::InputPath, true);
    c.option("traj", o->traj, "Trajectory JSON", ArgKind::InputPath, true);
    c.option("sources", o->sources, "Number of source views (1, 3 or 7)")->check(CLI::IsMember({1, 3, 7}));
    c.option("batch", o->batch, "Target views per iteration; 0 selects 8 - sources");
    c.option("backend", o->backend, "oracle or toy")->check(CLI::IsMember({"oracle", "toy"}));
    c.option("tau", o->tau, "Confidence threshold for warping");
    c.option("voxel", o->voxel, "Fusion voxel size in meters");
    c.option("splat-radius", o->splat_radius, "Splat radius in pixels");
    c.option("noise", o->noise, "Oracle scene-coordinate noise std in meters");
    c.option("checkpoint", o->checkpoint, "Toy backend checkpoint from diffusion train", ArgKind::InputPath);
    c.option("steps", o->steps, "Toy backend DDIM steps")->check(CLI::PositiveNumber);
    c.option("seed", o->seed, "Backend seed");
    c.option("iterations-dir", o->iterations_dir, "Write every completed iteration below this directory");
    c.option("out", o->out, "Output directory", ArgKind::OutputDir, true);
    c.body([o](const Command&) {
        const auto scene = load_scene_file(o->layout);
        const auto cameras = load_trajectory_file(o->traj).views;
        const auto plan = plan_iterations(static_cast<int>(cameras.size()), o->sources, o->batch);
        std::unique_ptr<GeneratorBackend> backend;
        if (o->backend == "oracle") {
            backend = std::make_unique<OracleBackend>(scene, o->noise, o->seed);
        } else {
            if (o->checkpoint.empty()) throw Error(ErrorKind::InvalidInput, "the toy backend needs --checkpoint");
            const auto ckpt = read_checkpoint(o->checkpoint);
            backend = std::make_unique<ToyBackend>(DenoiserModel::load(ckpt), CodecParams::load(ckpt),
                                                   ScmNormalization::from_layout(scene.layout), o->steps, o->seed);
        }
        PipelineConfig cfg;
        cfg.tau = o->tau;
        cfg.splat_radius = o->splat_radius;
        cfg.checkpoint_dir = o->iterations_dir;
        const auto state = run_pipeline(plan, cameras, scene.layout, render_sources(scene, cameras, plan), *backend, cfg);
        write_generation_outputs(o->out, scene, cameras, plan, state, o->voxel, o->seed);
        return 0;
    });
}

void add_eval_command(CLI::App& app, CommandList& commands) {
    struct Opts {
        std::string generated, reference, out;
        int samples = static_cast<int>(kChamferSamples);
        std::uint64_t seed = 0;
    };
    auto o = std::make_shared<Opts>();
    auto& c = *commands.emplace_back(std::make_unique<Command>(
        app, "eval", "PSNR and SSIM per view plus point-cloud Chamfer between two output directories",
        std::vector<std::string>{"eval"}));
    c.option("generated", o->generated, "Directory written by pipeline run or diffusion sample", ArgKind::InputPath, true);
    c.option("reference", o->reference, "Directory written by render", ArgKind::InputPath, true);
    c.option("samples", o->samples, "Chamfer sample count per direction; 0 uses every point")
        ->check(CLI::NonNegativeNumber);
    c.option("seed", o->seed, "Chamfer sampling seed");
    c.option("out", o->out, "Output directory", ArgKind::OutputDir, true);
    c.body([o](const Command&) {
        const fs::path gen(o->generated), ref(o->reference);
        std::set<int> sources;
        if (fs::exists(gen / "pipeline.json")) {
            const auto j = nlohmann::json::parse(read_text_file(gen / "pipeline.json"));
            if (j.contains("plan")) {
                for (int v : IterationPlan::from_json(j.at("plan")).sources) sources.insert(v);
            }
        }
        std::vector<ViewMetrics> rows;
        if (fs::exists(gen / "views")) {
            std::vector<fs::path> images;
            for (const auto& e : fs::directory_iterator(gen / "views")) {
                const auto name = e.path().filename().string();
                if (name.size() == 12 && name.ends_with("_rgb.png")) images.push_back(e.path());
            }
            std::sort(images.begin(), images.end());
            for (const auto& p : images) {
                const int id = std::stoi(p.filename().string().substr(0, 4));
                const auto other = ref / "views" / p.filename();
                if (sources.count(id) || !fs::exists(other)) continue;
                const auto a = read_png_rgb(p);
                const auto b = read_png_rgb(other);
                rows.push_back({id, psnr(a, b), ssim(a, b)});
            }
        }
        if (rows.empty()) throw Error(ErrorKind::InvalidInput, "no generated view has a reference", gen.string());
        double chamfer_m = std::numeric_limits<double>::quiet_NaN();
        const auto gen_cloud = fs::exists(gen / "fused.ply") ? gen / "fused.ply" : gen / "cloud.ply";
        if (fs::exists(gen_cloud) && fs::exists(ref / "cloud.ply")) {
            chamfer_m = chamfer(read_ply(gen_cloud), read_ply(ref / "cloud.ply"), static_cast<std::size_t>(o->samples), o->seed);
        }
        fs::create_directories(o->out);
        write_text_file(fs::path(o->out) / "metrics.csv", metrics_csv(rows));
        write_text_file(fs::path(o->out) / "summary.json", metrics_summary_json(rows, chamfer_m));
        std::printf("%s\n", summary_line(rows, chamfer_m).c_str());
        return 0;
    });
}

}  // namespace

std::vector<ColorImage> render_sources(const SynthScene& scene, const std::vector<CameraView>& cameras,
                                       const IterationPlan& plan) {
    std::vector<ColorImage> out;
    for (int v : plan.sources) out.push_back(render_gt(scene, cameras.at(static_cast<std::size_t>(v))).color);
    return out;
}

void write_generation_outputs(const fs::path& out, const SynthScene& scene, const std::vector<CameraView>& cameras,
                              const IterationPlan& plan, const PipelineState& state, double voxel, std::uint64_t seed) {
    fs::create_directories(out);
    write_pipeline_outputs(out, state);
    const auto fused = fuse(state.cloud, voxel);
    write_ply(out / "fused.ply", fused.cloud);
    write_text_file(out / "pipeline.json", state.manifest.dump(2) + "\n");

    const std::set<int> sources(plan.sources.begin(), plan.sources.end());
    GlobalPointCloud truth;
    std::vector<ViewMetrics> rows;
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        const auto gt = render_gt(scene, cameras[v]);
        insert_scm(truth, gt, static_cast<int>(v));
        if (sources.count(static_cast<int>(v))) continue;
        const auto& got = state.views[v].color;
        rows.push_back({static_cast<int>(v), psnr(got, gt.color), ssim(got, gt.color)});
    }
    const double chamfer_m = chamfer(fused.cloud, truth, kChamferSamples, seed);
    write_text_file(out / "metrics.csv", metrics_csv(rows));
    write_text_file(out / "summary.json", metrics_summary_json(rows, chamfer_m));
    std::printf("%s\n", summary_line(rows, chamfer_m).c_str());
}

void register_pipeline_commands(CLI::App& app, CommandList& commands) {
    add_run_command(app, commands);
    add_eval_command(app, commands);
}

}  // namespace spatialgen::cli
