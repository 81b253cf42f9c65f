#include "cli.hpp"

#include "spatialgen/checkpoint.hpp"
#include "spatialgen/codec.hpp"
#include "spatialgen/diffusion.hpp"
#include "spatialgen/io.hpp"

#include <cstdio>
#include <sstream>

namespace spatialgen::cli {

namespace fs = std::filesystem;

namespace {

CLI::App& group(CLI::App& app, const std::string& name, const std::string& description) {
    auto* g = app.add_subcommand(name, description);
    g->require_subcommand(1);
    g->fallthrough();
    return *g;
}

std::vector<CodecSample> codec_samples(const std::string& data, int views, int size, std::uint64_t seed) {
    std::vector<CodecSample> samples;
    for (const auto& path : json_inputs(data)) {
        const auto scene = load_scene_file(path);
        const auto norm = ScmNormalization::from_layout(scene.layout);
        for (const auto& cam : orbit_cameras(scene.layout, views, size, seed)) {
            samples.push_back({render_gt(scene, cam).scm, norm});
        }
    }
    return samples;
}

void add_codec_commands(CLI::App& app, CommandList& commands) {
    auto& codec = group(app, "codec", "Scene-coordinate map autoencoder");
    {
        struct Opts {
            std::string data, out;
            int steps = 200, views = 4, size = 32;
            double lambda1 = kDefaultGradWeight, lr = 2e-3;
            std::uint64_t seed = 0;
        };
        auto o = std::make_shared<Opts>();
        auto& c = *commands.emplace_back(std::make_unique<Command>(
            codec, "train", "Fine-tune the decoder on ground-truth maps of synthetic scenes",
            std::vector<std::string>{"codec", "train"}));
        c.option("data", o->data, "Scene JSON or directory of scene JSON files", ArgKind::InputPath, true);
        c.option("steps", o->steps, "Optimizer steps")->check(CLI::NonNegativeNumber);
        c.option("lambda1", o->lambda1, "Weight of the gradient loss");
        c.option("lr", o->lr, "Adam learning rate");
        c.option("views", o->views, "Orbit views per scene")->check(CLI::PositiveNumber);
        c.option("size", o->size, "Square view size")->check(CLI::PositiveNumber);
        c.option("seed", o->seed, "Initialization, trajectory and batch seed");
        c.option("out", o->out, "Output directory", ArgKind::OutputDir, true);
        c.body([o](const Command&) {
            const auto samples = codec_samples(o->data, o->views, o->size, o->seed);
            auto params = CodecParams::init(o->seed);
            CodecTrainConfig cfg;
            cfg.steps = o->steps;
            cfg.lr = o->lr;
            cfg.grad_weight = o->lambda1;
            cfg.seed = o->seed;
            const auto log = train_codec(samples, cfg, params);
            fs::create_directories(o->out);
            Checkpoint ckpt;
            params.save(ckpt);
            write_checkpoint(fs::path(o->out) / "codec.ckpt", ckpt);
            write_text_file(fs::path(o->out) / "loss.csv", codec_log_csv(log));
            if (!log.empty()) {
                std::printf("%zu samples, loss %.6f -> %.6f\n", samples.size(), log.front().total, log.back().total);
            }
            return 0;
        });
    }
    {
        struct Opts {
            std::string data, checkpoint, out;
            int views = 4, size = 32;
            std::uint64_t seed = 0;
        };
        auto o = std::make_shared<Opts>();
        auto& c = *commands.emplace_back(std::make_unique<Command>(
            codec, "eval", "Mean relative reconstruction error per sample", std::vector<std::string>{"codec", "eval"}));
        c.option("data", o->data, "Scene JSON or directory of scene JSON files", ArgKind::InputPath, true);
        c.option("checkpoint", o->checkpoint, "Codec checkpoint", ArgKind::InputPath, true);
        c.option("views", o->views, "Orbit views per scene")->check(CLI::PositiveNumber);
        c.option("size", o->size, "Square view size")->check(CLI::PositiveNumber);
        c.option("seed", o->seed, "Trajectory seed");
        c.option("out", o->out, "Report JSON", ArgKind::OutputFile, true);
        c.body([o](const Command&) {
            const auto params = CodecParams::load(read_checkpoint(o->checkpoint));
            const auto samples = codec_samples(o->data, o->views, o->size, o->seed);
            nlohmann::json errors = nlohmann::json::array();
            double mean = 0.0;
            for (const auto& s : samples) {
                const double e = reconstruction_error(s, params);
                errors.push_back(e);
                mean += e / static_cast<double>(samples.size());
            }
            ensure_parent(o->out);
            write_text_file(o->out, nlohmann::json{{"samples", samples.size()}, {"mean_error", mean}, {"errors", errors}}.dump(2) + "\n");
            std::printf("%zu samples, mean relative error %.6f\n", samples.size(), mean);
            return 0;
        });
    }
}

struct DiffusionSetup {
    DenoiserConfig model;
    DiffusionTrainConfig train;
};

DiffusionSetup read_setup(const std::string& path) {
    DiffusionSetup s;
    if (path.empty()) return s;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, e.what(), path);
    }
    if (!j.is_object()) throw Error(ErrorKind::Schema, "config must be an object", path);
    if (j.contains("model")) s.model = DenoiserConfig::from_json(j.at("model"));
    if (j.contains("train")) s.train = DiffusionTrainConfig::from_json(j.at("train"));
    return s;
}

void add_diffusion_commands(CLI::App& app, CommandList& commands) {
    auto& diffusion = group(app, "diffusion", "Multi-view multi-modal denoiser");
    {
        struct Opts {
            std::string scenes, config, codec, out;
            int steps = -1;
            std::uint64_t seed = 0;
        };
        auto o = std::make_shared<Opts>();
        auto& c = *commands.emplace_back(std::make_unique<Command>(
            diffusion, "train", "Train the denoiser on 8-view orbits of synthetic scenes",
            std::vector<std::string>{"diffusion", "train"}));
        c.option("scenes", o->scenes, "Scene JSON or directory of scene JSON files", ArgKind::InputPath, true);
        c.option("config", o->config, "JSON with optional \"model\" and \"train\" sections", ArgKind::InputPath);
        c.option("codec", o->codec, "Codec checkpoint; an untrained codec is used when empty", ArgKind::InputPath);
        c.option("steps", o->steps, "Optimizer steps; -1 keeps the config value");
        c.option("seed", o->seed, "Model, trajectory and batch seed");
        c.option("out", o->out, "Output directory", ArgKind::OutputDir, true);
        c.body([o](const Command&) {
            auto setup = read_setup(o->config);
            if (o->steps >= 0) setup.train.steps = o->steps;
            setup.train.seed = o->seed;
            setup.model.validate();
            setup.train.validate();
            const auto& cfg = setup.model;

            const bool calibrate = o->codec.empty();
            CodecArch arch;
            arch.factor = cfg.patch;
            arch.latent_channels = cfg.latent_channels;
            auto codec = calibrate ? CodecParams::init(o->seed, arch) : CodecParams::load(read_checkpoint(o->codec));

            std::vector<SynthScene> scenes;
            std::vector<std::vector<CameraView>> cameras;
            for (const auto& path : json_inputs(o->scenes)) {
                scenes.push_back(load_scene_file(path));
                cameras.push_back(orbit_cameras(scenes.back().layout, setup.train.views_total, cfg.image_size, o->seed));
            }
            auto prepare = [&] {
                std::vector<SceneData> data;
                for (std::size_t i = 0; i < scenes.size(); ++i) data.push_back(prepare_scene(scenes[i], cameras[i], cfg, codec));
                return data;
            };
            auto data = prepare();
            if (calibrate) {
                codec.latent_scale = geometry_latent_rms(data, codec);
                data = prepare();
            }

            auto model = DenoiserModel::init(cfg, o->seed);
            nn::Adam<float> opt(setup.train.lr);
            std::ostringstream log;
            log << "step,loss\n";
            double first = 0.0, last = 0.0;
            for (int step = 0; step < setup.train.steps; ++step) {
                const double loss = train_step(data, model, opt, cfg, setup.train, step);
                log << step << ',' << loss << '\n';
                if (step == 0) first = loss;
                last = loss;
                if ((step + 1) % 100 == 0) std::printf("step %d loss %.6f\n", step + 1, loss);
            }
            fs::create_directories(o->out);
            Checkpoint ckpt;
            model.save(ckpt);
            codec.save(ckpt);
            ckpt.descriptor["train"] = setup.train.to_json();
            write_checkpoint(fs::path(o->out) / "model.ckpt", ckpt);
            write_text_file(fs::path(o->out) / "loss.csv", log.str());
            std::printf("%zu scenes, %d steps, loss %.6f -> %.6f\n", scenes.size(), setup.train.steps, first, last);
            return 0;
        });
    }
    {
        struct Opts {
            std::string scenes, checkpoint, traj, out;
            int sources = 1, steps = 50;
            double voxel = 0.02;
            std::uint64_t seed = 0;
        };
        auto o = std::make_shared<Opts>();
        auto& c = *commands.emplace_back(std::make_unique<Command>(
            diffusion, "sample", "Generate the target views of one 8-view batch from its sources",
            std::vector<std::string>{"diffusion", "sample"}));
        c.option("scenes", o->scenes, "Scene JSON", ArgKind::InputPath, true);
        c.option("checkpoint", o->checkpoint, "Checkpoint written by diffusion train", ArgKind::InputPath, true);
        c.option("traj", o->traj, "Trajectory JSON; the training orbit when empty", ArgKind::InputPath);
        c.option("sources", o->sources, "Number of source views (1, 3 or 7)")->check(CLI::IsMember({1, 3, 7}));
        c.option("steps", o->steps, "DDIM steps")->check(CLI::PositiveNumber);
        c.option("voxel", o->voxel, "Fusion voxel size in meters");
        c.option("seed", o->seed, "Sampling and trajectory seed");
        c.option("out", o->out, "Output directory", ArgKind::OutputDir, true);
        c.body([o](const Command&) {
            const auto ckpt = read_checkpoint(o->checkpoint);
            auto model = DenoiserModel::load(ckpt);
            auto codec = CodecParams::load(ckpt);
            const auto scene = load_scene_file(o->scenes);
            const auto cameras = o->traj.empty()
                                     ? orbit_cameras(scene.layout, kTrainingViews, model.config.image_size, o->seed)
                                     : load_trajectory_file(o->traj).views;
            if (static_cast<int>(cameras.size()) > kTrainingViews) {
                throw Error(ErrorKind::InvalidInput, "a single batch holds at most 8 views", o->traj);
            }
            const auto plan = plan_iterations(static_cast<int>(cameras.size()), o->sources);
            ToyBackend backend(std::move(model), std::move(codec), ScmNormalization::from_layout(scene.layout), o->steps,
                               o->seed);
            const auto state = run_pipeline(plan, cameras, scene.layout, render_sources(scene, cameras, plan), backend, {});
            write_generation_outputs(o->out, scene, cameras, plan, state, o->voxel, o->seed);
            return 0;
        });
    }
}

}  // namespace

void register_model_commands(CLI::App& app, CommandList& commands) {
    add_codec_commands(app, commands);
    add_diffusion_commands(app, commands);
}

}  // namespace spatialgen::cli
