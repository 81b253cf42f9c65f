#include "cli.hpp"

#include "spatialgen/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>

namespace spatialgen::cli {

namespace fs = std::filesystem;

Command::Command(CLI::App& parent, const std::string& name, const std::string& description,
                 std::vector<std::string> path)
    : app_(parent.add_subcommand(name, description)), path_(std::move(path)) {
    app_->fallthrough();
}

CLI::Option* Command::positional(const std::string& name, std::string& field, const std::string& help, ArgKind kind) {
    auto* opt = app_->add_option(name + ",--" + name, field, help)->required();
    record(name, kind, [&field] { return nlohmann::json(field); });
    return opt;
}

void Command::record(const std::string& name, ArgKind kind, std::function<nlohmann::json()> value) {
    args_.push_back({name, kind, std::move(value)});
}

nlohmann::json Command::args() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& a : args_) j[a.name] = a.value();
    return j;
}

nlohmann::json Command::input_digests() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& a : args_) {
        if (a.kind != ArgKind::InputPath) continue;
        const auto v = a.value();
        if (!v.is_string() || v.get<std::string>().empty()) continue;
        j[a.name] = digest_path(v.get<std::string>());
    }
    return j;
}

fs::path Command::output() const {
    for (const auto& a : args_) {
        if (a.kind == ArgKind::OutputFile || a.kind == ArgKind::OutputDir) {
            const auto v = a.value();
            if (v.is_string()) return v.get<std::string>();
        }
    }
    return {};
}

bool Command::output_is_dir() const {
    for (const auto& a : args_) {
        if (a.kind == ArgKind::OutputFile) return false;
        if (a.kind == ArgKind::OutputDir) return true;
    }
    return false;
}

namespace {

struct Fnv {
    std::uint64_t h = 0xcbf29ce484222325ull;
    void add(const std::string& bytes) {
        for (unsigned char c : bytes) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
    }
    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot read", path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string digest_path(const fs::path& path) {
    Fnv f;
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(path)) {
            if (e.is_regular_file()) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& p : files) {
            f.add(fs::relative(p, path).generic_string());
            f.add(std::string(1, '\0'));
            f.add(read_bytes(p));
        }
    } else {
        f.add(read_bytes(path));
    }
    return f.hex();
}

SynthScene load_scene_file(const fs::path& path) {
    // load_scene accepts a bare layout and keeps the default light.
    return load_scene(read_text_file(path));
}

Trajectory load_trajectory_file(const fs::path& path) { return load_trajectory(read_text_file(path)); }

std::vector<fs::path> json_inputs(const fs::path& path) {
    if (!fs::is_directory(path)) {
        if (!fs::exists(path)) throw Error(ErrorKind::Io, "no such file or directory", path.string());
        return {path};
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.ends_with(".json") && name != "manifest.json" && !name.ends_with(".manifest.json")) {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorKind::InvalidInput, "no .json files", path.string());
    return files;
}

void ensure_parent(const fs::path& file) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

std::string view_stem(int id) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", id);
    return buf;
}

std::vector<CameraView> orbit_cameras(const SceneLayout& layout, int count, int size, std::uint64_t seed) {
    TrajectoryParams p;
    p.count = count;
    p.width = p.height = size;
    p.seed = seed;
    return gen_trajectory(layout, TrajectoryPattern::InwardOrbit, p).views;
}

}  // namespace spatialgen::cli
