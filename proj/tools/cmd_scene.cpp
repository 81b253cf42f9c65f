#include "cli.hpp"

#include "spatialgen/io.hpp"
#include "spatialgen/layout.hpp"
#include "spatialgen/pano.hpp"
#include "spatialgen/raster.hpp"
#include "spatialgen/warp.hpp"

#include <cstdio>
#include <iostream>
#include <set>

namespace spatialgen::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kDeg = kPi / 180.0;

CLI::App& group(CLI::App& app, const std::string& name, const std::string& description) {
    auto* g = app.add_subcommand(name, description);
    g->require_subcommand(1);
    g->fallthrough();
    return *g;
}

std::string box_removal_reason(const SceneLayout& layout, const SemanticBox& b) {
    for (int a = 0; a < 3; ++a) {
        char buf[96];
        if (b.size[a] < kMinObjectEdge) {
            std::snprintf(buf, sizeof buf, "edge %.3f m shorter than %.1f m", b.size[a], kMinObjectEdge);
            return buf;
        }
        if (b.size[a] > kMaxObjectEdge) {
            std::snprintf(buf, sizeof buf, "edge %.3f m longer than %.1f m", b.size[a], kMaxObjectEdge);
            return buf;
        }
    }
    if (layout.room_of(b) < 0) return "outside every room";
    return "filtered";
}

void add_layout_commands(CLI::App& app, CommandList& commands) {
    auto& layout = group(app, "layout", "Validate or filter a scene layout");

    {
        auto file = std::make_shared<std::string>();
        auto& c = *commands.emplace_back(
            std::make_unique<Command>(layout, "validate", "Check a layout against the schema", std::vector<std::string>{"layout", "validate"}));
        c.positional("file", *file, "Layout JSON");
        c.body([file](const Command&) {
            try {
                const auto l = load_layout(read_text_file(*file));
                std::printf("valid: %zu rooms, %zu boxes, %zu arch quads, floor area %.3f m^2\n", l.rooms.size(),
                            l.boxes.size(), l.arch.size(), l.floor_area());
                return 0;
            } catch (const Error& e) {
                std::printf("invalid: %s at %s: %s\n", to_string(e.kind()), e.where().empty() ? "-" : e.where().c_str(),
                            e.what());
                throw;
            }
        });
    }
    {
        struct Opts {
            std::string file, out;
        };
        auto o = std::make_shared<Opts>();
        auto& c = *commands.emplace_back(std::make_unique<Command>(
            layout, "filter", "Drop boxes with an edge outside [0.1, 1.8] m or outside every room",
            std::vector<std::string>{"layout", "filter"}));
        c.positional("file", o->file, "Layout JSON");
        c.option("out", o->out, "Filtered layout JSON", ArgKind::OutputFile, true);
        c.body([o](const Command&) {
            const auto in = load_layout(read_text_file(o->file));
            const auto kept = filter_objects(in);
            std::set<int> kept_ids;
            for (const auto& b : kept.boxes) kept_ids.insert(b.id);
            for (const auto& b : in.boxes) {
                if (!kept_ids.count(b.id)) std::printf("removed box %d: %s\n", b.id, box_removal_reason(in, b).c_str());
            }
            std::printf("kept %zu of %zu boxes\n", kept.boxes.size(), in.boxes.size());
            ensure_parent(o->out);
            write_text_file(o->out, save_layout(kept));
            return 0;
        });
    }

    auto& dataset = group(app, "dataset", "Dataset curation");
    {
        struct Opts {
            std::string dir, out;
        };
        auto o = std::make_shared<Opts>();
        auto& c = *commands.emplace_back(std::make_unique<Command>(
            dataset, "curate", "Accept or reject every layout in a directory", std::vector<std::string>{"dataset", "curate"}));
        c.positional("dir", o->dir, "Directory of layout JSON files");
        c.option("out", o->out, "Curation report JSON", ArgKind::OutputFile, true);
        c.body([o](const Command&) {
            nlohmann::json report = nlohmann::json::array();
            int accepted = 0;
            for (const auto& path : json_inputs(o->dir)) {
                nlohmann::json entry{{"file", path.filename().string()}};
                try {
                    const auto text = read_text_file(path);
                    const auto doc = nlohmann::json::parse(text);
                    const int panoramas = doc.value("panorama_count", 1);
                    const auto d = curate(load_layout(text), panoramas);
                    entry["accepted"] = d.accepted;
                    entry["floor_area"] = d.floor_area;
                    entry["objects"] = d.objects;
                    entry["objects_removed"] = d.objects_removed;
                    entry["reasons"] = d.reasons;
                    nlohmann::json rooms = nlohmann::json::array();
                    for (const auto& r : d.rooms) {
                        rooms.push_back({{"room", r.room}, {"area", r.area}, {"objects", r.objects}, {"retained", r.retained},
                                         {"reasons", r.reasons}});
                    }
                    entry["rooms"] = rooms;
                } catch (const std::exception& e) {
                    entry["accepted"] = false;
                    entry["reasons"] = {std::string("unreadable layout: ") + e.what()};
                }
                const bool ok = entry["accepted"].get<bool>();
                accepted += ok ? 1 : 0;
                std::printf("%s %s", ok ? "accept" : "reject", entry["file"].get<std::string>().c_str());
                for (const auto& r : entry["reasons"]) std::printf("; %s", r.get<std::string>().c_str());
                std::printf("\n");
                report.push_back(std::move(entry));
            }
            std::printf("accepted %d of %zu\n", accepted, report.size());
            ensure_parent(o->out);
            write_text_file(o->out, report.dump(2) + "\n");
            return 0;
        });
    }
}

void add_synth_commands(CLI::App& app, CommandList& commands) {
    auto& synth = group(app, "synth", "Procedural indoor scenes");
    {
        struct Opts {
            std::uint64_t seed = 0;
            std::string difficulty = "sparse", out;
            double room_side = 0.0;
        };
        auto o = std::make_shared<Opts>();
        auto& c = *commands.emplace_back(
            std::make_unique<Command>(synth, "gen", "Generate a scene", std::vector<std::string>{"synth", "gen"}));
        c.option("seed", o->seed, "Scene seed", ArgKind::Value, true);
        c.option("difficulty", o->difficulty, "empty, sparse or cluttered")
            ->check(CLI::IsMember({"empty", "sparse", "cluttered"}));
        c.option("room-side", o->room_side, "Square room side in meters; 0 draws a 3-6 m rectangle");
        c.option("out", o->out, "Scene JSON", ArgKind::OutputFile, true);
        c.body([o](const Command&) {
            const auto scene = gen_scene(o->seed, parse_difficulty(o->difficulty), o->room_side);
            ensure_parent(o->out);
            write_text_file(o->out, save_scene(scene));
            std::printf("%zu rooms, %zu boxes\n", scene.layout.rooms.size(), scene.layout.boxes.size());
            return 0;
        });
    }
    {
        struct Opts {
            std::string scene, out;
            int height = 256;
            double camera_height = 1.2;
        };
        auto o = std::make_shared<Opts>();
        auto& c = *commands.emplace_back(std::make_unique<Command>(
            synth, "pano", "Render an equirectangular panorama from the first room's centroid",
            std::vector<std::string>{"synth", "pano"}));
        c.option("scene", o->scene, "Scene JSON", ArgKind::InputPath, true);
        c.option("height", o->height, "Panorama height in pixels; width is twice that")->check(CLI::Range(2, 8192));
        c.option("camera-height", o->camera_height, "Meters above the floor");
        c.option("out", o->out, "Panorama PNG", ArgKind::OutputFile, true);
        c.body([o](const Command&) {
            const auto scene = load_scene_file(o->scene);
            if (scene.layout.rooms.empty()) throw Error(ErrorKind::InvalidInput, "scene has no rooms", o->scene);
            const auto& room = scene.layout.rooms.front();
            const Vec2 c2 = room.centroid();
            const auto pano = render_panorama(scene, Vec3(c2.x(), c2.y(), room.floor_z + o->camera_height), o->height);
            ensure_parent(o->out);
            write_png_rgb(o->out, pano);
            return 0;
        });
    }
}

void add_camera_commands(CLI::App& app, CommandList& commands) {
    auto& traj = group(app, "traj", "Camera trajectories");
    {
        struct Opts {
            std::string layout, pattern, out;
            int count = 8, size = 64, room = 0;
            double spacing = 0.5, fov = 90.0, clearance = 0.3, camera_height = 1.2;
            std::uint64_t seed = 0;
        };
        auto o = std::make_shared<Opts>();
        auto& c = *commands.emplace_back(
            std::make_unique<Command>(traj, "gen", "Generate a trajectory", std::vector<std::string>{"traj", "gen"}));
        c.option("layout", o->layout, "Layout or scene JSON", ArgKind::InputPath, true);
        c.option("pattern", o->pattern, "forward, inward_orbit, outward_orbit or random_walk", ArgKind::Value, true)
            ->check(CLI::IsMember({"forward", "inward_orbit", "outward_orbit", "random_walk"}));
        c.option("count", o->count, "Number of views")->check(CLI::PositiveNumber);
        c.option("spacing", o->spacing, "Meters between forward and random-walk views");
        c.option("seed", o->seed, "Trajectory seed");
        c.option("size", o->size, "Square image size in pixels")->check(CLI::PositiveNumber);
        c.option("fov", o->fov, "Horizontal field of view in degrees");
        c.option("clearance", o->clearance, "Meters kept from walls and boxes");
        c.option("camera-height", o->camera_height, "Meters above the floor");
        c.option("room", o->room, "Room index");
        c.option("out", o->out, "Trajectory JSON", ArgKind::OutputFile, true);
        c.body([o](const Command&) {
            const auto scene = load_scene_file(o->layout);
            TrajectoryParams p;
            p.count = o->count;
            p.spacing = o->spacing;
            p.seed = o->seed;
            p.width = p.height = o->size;
            p.fov = o->fov * kDeg;
            p.clearance = o->clearance;
            p.camera_height = o->camera_height;
            p.room = o->room;
            const auto t = gen_trajectory(scene.layout, parse_pattern(o->pattern), p);
            ensure_parent(o->out);
            write_text_file(o->out, save_trajectory(t));
            std::printf("%zu views\n", t.views.size());
            return 0;
        });
    }
    {
        struct Opts {
            std::string in, out;
            double yaw = 0.0, pitch = 0.0, fov = 90.0;
            int size = 256;
        };
        auto o = std::make_shared<Opts>();
        auto& c = *commands.emplace_back(std::make_unique<Command>(
            app, "pano2persp", "Crop a perspective view from an equirectangular panorama", std::vector<std::string>{"pano2persp"}));
        c.option("in", o->in, "Equirectangular PNG", ArgKind::InputPath, true);
        c.option("yaw", o->yaw, "Degrees");
        c.option("pitch", o->pitch, "Degrees");
        c.option("fov", o->fov, "Horizontal field of view in degrees");
        c.option("size", o->size, "Square output size")->check(CLI::PositiveNumber);
        c.option("out", o->out, "Perspective PNG", ArgKind::OutputFile, true);
        c.body([o](const Command&) {
            const auto pano = read_png_rgb(o->in);
            const auto view = pano_to_persp(pano, o->yaw * kDeg, o->pitch * kDeg, o->fov * kDeg, o->size);
            ensure_parent(o->out);
            write_png_rgb(o->out, view);
            return 0;
        });
    }
}

void add_render_commands(CLI::App& app, CommandList& commands) {
    {
        struct Opts {
            std::string layout, traj, out;
        };
        auto o = std::make_shared<Opts>();
        auto& c = *commands.emplace_back(std::make_unique<Command>(
            app, "raster", "Rasterize layout semantic, depth and scene-coordinate maps per view",
            std::vector<std::string>{"raster"}));
        c.option("layout", o->layout, "Layout or scene JSON", ArgKind::InputPath, true);
        c.option("traj", o->traj, "Trajectory JSON", ArgKind::InputPath, true);
        c.option("out", o->out, "Output directory", ArgKind::OutputDir, true);
        c.body([o](const Command&) {
            const auto scene = load_scene_file(o->layout);
            const auto traj = load_trajectory_file(o->traj);
            fs::create_directories(o->out);
            for (std::size_t v = 0; v < traj.views.size(); ++v) {
                const auto& cam = traj.views[v];
                const auto r = rasterize_layout(scene.layout, cam);
                const auto stem = (fs::path(o->out) / view_stem(static_cast<int>(v))).string();
                write_png_semantic(stem + "_semantic.png", r.semantic);
                write_png_depth(stem + "_depth.png", r.depth);
                write_scm(stem + ".scm", depth_to_scm(r.depth, cam));
            }
            std::printf("%zu views\n", traj.views.size());
            return 0;
        });
    }
    {
        struct Opts {
            std::string scene, traj, out;
        };
        auto o = std::make_shared<Opts>();
        auto& c = *commands.emplace_back(std::make_unique<Command>(
            app, "render", "Render ground-truth views and the ground-truth point cloud", std::vector<std::string>{"render"}));
        c.option("scene", o->scene, "Scene JSON", ArgKind::InputPath, true);
        c.option("traj", o->traj, "Trajectory JSON", ArgKind::InputPath, true);
        c.option("out", o->out, "Output directory", ArgKind::OutputDir, true);
        c.body([o](const Command&) {
            const auto scene = load_scene_file(o->scene);
            const auto traj = load_trajectory_file(o->traj);
            fs::create_directories(fs::path(o->out) / "views");
            GlobalPointCloud cloud;
            for (std::size_t v = 0; v < traj.views.size(); ++v) {
                const auto maps = render_gt(scene, traj.views[v]);
                const auto stem = (fs::path(o->out) / "views" / view_stem(static_cast<int>(v))).string();
                write_png_rgb(stem + "_rgb.png", maps.color);
                write_png_semantic(stem + "_semantic.png", maps.semantic);
                write_png_depth(stem + "_depth.png", maps.depth);
                write_scm(stem + ".scm", maps.scm);
                insert_scm(cloud, maps, static_cast<int>(v));
            }
            write_ply(fs::path(o->out) / "cloud.ply", cloud);
            std::printf("%zu views, %zu points\n", traj.views.size(), cloud.size());
            return 0;
        });
    }
}

}  // namespace

void register_scene_commands(CLI::App& app, CommandList& commands) {
    add_layout_commands(app, commands);
    add_synth_commands(app, commands);
    add_camera_commands(app, commands);
    add_render_commands(app, commands);
}

}  // namespace spatialgen::cli
