#include "spatialgen/pipeline.hpp"

#include "spatialgen/io.hpp"
#include "spatialgen/raster.hpp"

#include <algorithm>
#include <cstdio>

namespace spatialgen {

namespace {

std::string view_stem(int id) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", id);
    return buf;
}

void check_request(const BackendRequest& r, int max_views) {
    const std::size_t views = r.source_ids.size() + r.target_ids.size();
    if (r.cameras.size() != views || r.conditions.size() != views || r.source_images.size() != r.source_ids.size() ||
        r.warps.size() != r.target_ids.size()) {
        throw Error(ErrorKind::InvalidInput, "backend request is inconsistent");
    }
    if (static_cast<int>(views) > max_views) {
        throw Error(ErrorKind::InvalidInput, "backend request exceeds " + std::to_string(max_views) + " views");
    }
}

}  // namespace

nlohmann::json IterationPlan::to_json() const {
    return {{"view_count", view_count}, {"sources", sources}, {"batches", batches}};
}

IterationPlan IterationPlan::from_json(const nlohmann::json& j) {
    IterationPlan p;
    try {
        p.view_count = j.at("view_count").get<int>();
        p.sources = j.at("sources").get<std::vector<int>>();
        p.batches = j.at("batches").get<std::vector<std::vector<int>>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("bad iteration plan: ") + e.what(), "plan");
    }
    std::vector<int> seen(static_cast<std::size_t>(std::max(p.view_count, 0)), 0);
    auto mark = [&](int v) {
        if (v < 0 || v >= p.view_count || seen[static_cast<std::size_t>(v)]++) {
            throw Error(ErrorKind::Schema, "plan views must be distinct trajectory indices", "plan");
        }
    };
    for (int v : p.sources) mark(v);
    for (const auto& b : p.batches) {
        if (b.empty()) throw Error(ErrorKind::Schema, "plan has an empty batch", "plan");
        for (int v : b) mark(v);
    }
    return p;
}

IterationPlan plan_iterations(int view_count, int sources, int batch_size) {
    if (sources != 1 && sources != 3 && sources != 7) {
        throw Error(ErrorKind::InvalidInput, "source count must be 1, 3 or 7");
    }
    if (view_count < sources + 1) {
        throw Error(ErrorKind::InvalidInput, "trajectory needs at least " + std::to_string(sources + 1) + " views");
    }
    if (batch_size <= 0) batch_size = kTrainingViews - sources;
    IterationPlan plan;
    plan.view_count = view_count;
    for (int v = 0; v < sources; ++v) plan.sources.push_back(v);
    for (int v = sources; v < view_count; v += batch_size) {
        std::vector<int> batch;
        for (int u = v; u < std::min(view_count, v + batch_size); ++u) batch.push_back(u);
        plan.batches.push_back(std::move(batch));
    }
    return plan;
}

LayoutCondition layout_condition(const SceneLayout& layout, const CameraView& camera) {
    auto raster = rasterize_layout(layout, camera);
    return {std::move(raster.semantic), depth_to_scm(raster.depth, camera)};
}

OracleBackend::OracleBackend(SynthScene scene, double scm_noise, std::uint64_t seed)
    : scene_(std::move(scene)), noise_(scm_noise), seed_(seed) {
    if (!(scm_noise >= 0)) throw Error(ErrorKind::InvalidInput, "oracle noise must be non-negative");
}

nlohmann::json OracleBackend::describe() const {
    return {{"id", id()}, {"scm_noise", noise_}, {"seed", seed_}};
}

std::vector<ViewMaps> OracleBackend::generate(const BackendRequest& request) {
    check_request(request, max_views());
    std::vector<ViewMaps> out;
    for (int i = 0; i < request.views(); ++i) {
        const auto& cam = request.cameras[static_cast<std::size_t>(i)];
        const bool source = i < static_cast<int>(request.source_ids.size());
        const int id = source ? request.source_ids[static_cast<std::size_t>(i)]
                              : request.target_ids[static_cast<std::size_t>(i) - request.source_ids.size()];
        auto maps = render_gt(scene_, cam);
        if (source) maps.color = request.source_images[static_cast<std::size_t>(i)];
        if (noise_ > 0) {
            Rng rng = Rng(seed_).fork(static_cast<std::uint64_t>(id));
            for (int y = 0; y < maps.height(); ++y) {
                for (int x = 0; x < maps.width(); ++x) {
                    if (!maps.scm.valid.at(x, y)) continue;
                    Vec3 p;
                    for (int c = 0; c < 3; ++c) p[c] = (maps.scm.xyz.at(x, y, c) += noise_ * rng.normal());
                    const double z = cam.pose.to_camera(p).z();
                    if (z > kNearPlane) {
                        maps.depth.at(x, y) = z;
                    } else {
                        maps.scm.valid.at(x, y) = 0;
                        maps.depth.at(x, y) = 0;
                        maps.confidence.at(x, y) = 0;
                        for (int c = 0; c < 3; ++c) maps.scm.xyz.at(x, y, c) = 0;
                    }
                }
            }
        }
        out.push_back(std::move(maps));
    }
    return out;
}

ToyBackend::ToyBackend(DenoiserModel model, CodecParams codec, ScmNormalization norm, int steps, std::uint64_t seed)
    : model_(std::move(model)), codec_(std::move(codec)), norm_(norm), steps_(steps), seed_(seed) {
    if (steps < 1) throw Error(ErrorKind::InvalidInput, "sampling steps must be at least 1");
}

nlohmann::json ToyBackend::describe() const {
    return {{"id", id()}, {"steps", steps_}, {"seed", seed_}, {"model", model_.config.to_json()}};
}

std::vector<ViewMaps> ToyBackend::generate(const BackendRequest& request) {
    check_request(request, max_views());
    GenerationInputs inputs;
    inputs.norm = norm_;
    const auto sources = request.source_ids.size();
    for (std::size_t i = 0; i < static_cast<std::size_t>(request.views()); ++i) {
        ViewInput view{request.cameras[i], request.conditions[i].semantic, request.conditions[i].scm, std::nullopt, std::nullopt};
        if (i < sources) {
            view.image = request.source_images[i];
        } else {
            view.warp = request.warps[i - sources];
        }
        inputs.views.push_back(std::move(view));
    }
    const auto generated = sample(inputs, model_, steps_, Rng(seed_).fork(static_cast<std::uint64_t>(request.call_index)).next());
    std::vector<ViewMaps> out;
    for (int v = 0; v < request.views(); ++v) {
        auto maps = decode_view(generated, v, request.cameras[static_cast<std::size_t>(v)], model_.config, codec_, norm_);
        if (v < static_cast<int>(sources)) maps.color = request.source_images[static_cast<std::size_t>(v)];
        out.push_back(std::move(maps));
    }
    return out;
}

PipelineState run_pipeline(const IterationPlan& plan, const std::vector<CameraView>& cameras, const SceneLayout& layout,
                           const std::vector<ColorImage>& source_images, GeneratorBackend& backend,
                           const PipelineConfig& config) {
    if (static_cast<int>(cameras.size()) != plan.view_count) {
        throw Error(ErrorKind::InvalidInput, "plan and trajectory disagree on the view count");
    }
    if (source_images.size() != plan.sources.size()) throw Error(ErrorKind::InvalidInput, "need one image per source view");
    if (!(config.tau >= 1.0)) throw Error(ErrorKind::InvalidInput, "tau must be at least 1");
    for (const auto& batch : plan.batches) {
        if (static_cast<int>(plan.sources.size() + batch.size()) > backend.max_views()) {
            throw Error(ErrorKind::InvalidInput, "plan batch exceeds the backend view limit");
        }
    }

    PipelineState state;
    state.views.resize(cameras.size());
    state.warps.resize(cameras.size());
    state.manifest = {{"plan", plan.to_json()},
                      {"backend", backend.describe()},
                      {"tau", config.tau},
                      {"splat_radius", config.splat_radius}};

    std::vector<LayoutCondition> conditions;
    for (const auto& cam : cameras) conditions.push_back(layout_condition(layout, cam));

    auto request_for = [&](int call, const std::vector<int>& targets) {
        BackendRequest r;
        r.call_index = call;
        r.source_ids = plan.sources;
        r.target_ids = targets;
        for (int v : plan.sources) {
            r.cameras.push_back(cameras[static_cast<std::size_t>(v)]);
            r.conditions.push_back(conditions[static_cast<std::size_t>(v)]);
        }
        for (int v : targets) {
            r.cameras.push_back(cameras[static_cast<std::size_t>(v)]);
            r.conditions.push_back(conditions[static_cast<std::size_t>(v)]);
        }
        r.source_images = source_images;
        return r;
    };
    auto call_backend = [&](const BackendRequest& r, int k) {
        try {
            auto out = backend.generate(r);
            if (out.size() != static_cast<std::size_t>(r.views())) {
                throw Error(ErrorKind::Backend, "backend returned " + std::to_string(out.size()) + " views");
            }
            return out;
        } catch (const Error& e) {
            const std::string detail = e.where().empty() ? e.what() : std::string(e.what()) + " (" + e.where() + ")";
            throw Error(e.kind() == ErrorKind::InvalidInput ? ErrorKind::Backend : e.kind(), detail, "iteration " + std::to_string(k));
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Backend, e.what(), "iteration " + std::to_string(k));
        }
    };
    auto checkpoint = [&](const IterationRecord& rec) {
        state.iterations.push_back(rec);
        if (config.checkpoint_dir.empty()) return;
        const auto dir = config.checkpoint_dir / ("iter_" + std::to_string(rec.index));
        write_views(dir, state, rec.views);
        write_ply(dir / "cloud.ply", state.cloud);
        nlohmann::json progress = state.manifest;
        progress["completed_iterations"] = rec.index + 1;
        progress["cloud_points"] = state.cloud.size();
        write_text_file(dir / "state.json", progress.dump(2));
    };

    // Initialization: the sources' own semantics and geometry.
    {
        const auto out = call_backend(request_for(0, {}), 0);
        for (std::size_t i = 0; i < plan.sources.size(); ++i) {
            const int v = plan.sources[i];
            state.views[static_cast<std::size_t>(v)] = out[i];
            insert_scm(state.cloud, out[i], v);
        }
        checkpoint({0, plan.sources, state.cloud.size(), 0});
    }

    for (std::size_t k = 0; k < plan.batches.size(); ++k) {
        const int index = static_cast<int>(k) + 1;
        const auto& targets = plan.batches[k];
        const auto filtered = filter_by_confidence(state.cloud, config.tau);
        auto request = request_for(index, targets);
        for (int v : targets) {
            auto warp = splat(filtered, cameras[static_cast<std::size_t>(v)], config.splat_radius);
            state.warps[static_cast<std::size_t>(v)] = warp;
            request.warps.push_back(std::move(warp));
        }
        const auto out = call_backend(request, index);
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const int v = targets[i];
            state.views[static_cast<std::size_t>(v)] = out[plan.sources.size() + i];
            insert_scm(state.cloud, state.views[static_cast<std::size_t>(v)], v);
        }
        checkpoint({index, targets, state.cloud.size(), filtered.size()});
    }

    nlohmann::json iterations = nlohmann::json::array();
    for (const auto& rec : state.iterations) {
        iterations.push_back({{"index", rec.index}, {"views", rec.views}, {"cloud_points", rec.cloud_points},
                              {"filtered_points", rec.filtered_points}});
    }
    state.manifest["iterations"] = std::move(iterations);
    if (!config.checkpoint_dir.empty()) state.manifest["checkpoint_dir"] = config.checkpoint_dir.string();
    return state;
}

void write_views(const std::filesystem::path& dir, const PipelineState& state, const std::vector<int>& ids) {
    for (int id : ids) {
        const auto& maps = state.views.at(static_cast<std::size_t>(id));
        const auto stem = dir / "views" / view_stem(id);
        write_png_rgb(stem.string() + "_rgb.png", maps.color);
        write_png_semantic(stem.string() + "_semantic.png", maps.semantic);
        write_png_depth(stem.string() + "_depth.png", maps.depth);
        write_scm(stem.string() + ".scm", maps.scm);
        const auto& warp = state.warps.at(static_cast<std::size_t>(id));
        if (warp.color.pixel_count() > 0) write_png_rgb(stem.string() + "_warp.png", warp.color);
    }
}

void write_pipeline_outputs(const std::filesystem::path& dir, const PipelineState& state) {
    std::vector<int> ids(state.views.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    write_views(dir, state, ids);
    write_ply(dir / "cloud.ply", state.cloud);
}

}  // namespace spatialgen
