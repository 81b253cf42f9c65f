#include "cli.hpp"

#include "spatialgen/io.hpp"
#include "spatialgen/parallel.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;
using namespace spatialgen;
using namespace spatialgen::cli;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

void report(bool json, const std::string& kind, const std::string& message, const std::string& where, int code) {
    if (json) {
        const nlohmann::json j{{"error", {{"kind", kind}, {"message", message}, {"where", where}}}, {"exit_code", code}};
        std::cerr << j.dump() << '\n';
    } else {
        std::cerr << "error [" << kind << "]" << (where.empty() ? "" : " " + where) << ": " << message << '\n';
    }
}

fs::path manifest_path(const Command& c, const std::string& override_path) {
    if (!override_path.empty()) return override_path;
    const auto out = c.output();
    if (out.empty()) return "spatialgen-manifest.json";
    if (c.output_is_dir()) return out / "manifest.json";
    return out.string() + ".manifest.json";
}

void write_manifest(const Command& c, const fs::path& path) {
    const nlohmann::json m{{"tool", "spatialgen"},
                           {"version", kToolVersion},
                           {"command", c.path()},
                           {"args", c.args()},
                           {"inputs", c.input_digests()}};
    const auto text = m.dump(2) + "\n";
    // An identical manifest is left untouched, so replaying in place never
    // rewrites its own input.
    if (fs::exists(path) && read_text_file(path) == text) return;
    ensure_parent(path);
    write_text_file(path, text);
}

std::string arg_text(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
}

// Rebuilds the argument list recorded in a manifest and checks that every
// input still has the recorded digest.
std::vector<std::string> replay_args(const fs::path& manifest, const std::string& out_override) {
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(read_text_file(manifest));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, e.what(), manifest.string());
    }
    if (!m.is_object() || m.value("tool", "") != "spatialgen" || !m.contains("command") || !m["command"].is_array() ||
        !m.contains("args") || !m["args"].is_object()) {
        throw Error(ErrorKind::Schema, "not a spatialgen manifest", manifest.string());
    }
    std::vector<std::string> args;
    for (const auto& part : m["command"]) {
        if (!part.is_string() || part.get<std::string>() == "replay") throw Error(ErrorKind::Schema, "bad command", "command");
        args.push_back(part.get<std::string>());
    }
    for (const auto& [name, value] : m["args"].items()) {
        if (name == "out" && !out_override.empty()) {
            args.push_back("--out=" + out_override);
            continue;
        }
        const auto text = arg_text(value);
        if (!text.empty()) args.push_back("--" + name + "=" + text);
    }
    if (m.contains("inputs")) {
        for (const auto& [name, digest] : m["inputs"].items()) {
            const auto& path = m["args"].at(name);
            if (digest_path(path.get<std::string>()) != digest.get<std::string>()) {
                throw Error(ErrorKind::Invariant, "input changed since the manifest was written", name);
            }
        }
    }
    return args;
}

int run(std::vector<std::string> args) {
    CLI::App app{"Layout-guided multi-view scene generation toolkit"};
    app.name("spatialgen");
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    app.set_version_flag("--version", kToolVersion);

    int threads = 0;
    bool json_errors = std::find(args.begin(), args.end(), "--json-errors") != args.end();
    std::string manifest_override;
    app.add_option("--threads", threads, "Worker threads; 0 reads SPATIALGEN_THREADS, then uses every core")
        ->check(CLI::NonNegativeNumber);
    app.add_flag("--json-errors", json_errors, "Report failures as one JSON object on standard error");
    app.add_option("--manifest", manifest_override, "Manifest path; derived from --out by default");

    CommandList commands;
    register_scene_commands(app, commands);
    register_model_commands(app, commands);
    register_pipeline_commands(app, commands);

    std::string replay_manifest, replay_out;
    auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
    replay->fallthrough();
    replay->add_option("manifest", replay_manifest, "Manifest JSON")->required();
    replay->add_option("--out", replay_out, "Write outputs here instead of the recorded location");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        if (json_errors) {
            report(true, "usage", e.what(), "", kExitUsage);
        } else {
            app.exit(e);
        }
        return kExitUsage;
    }

    set_thread_count(threads);
    try {
        if (replay->parsed()) {
            auto nested = replay_args(replay_manifest, replay_out);
            std::vector<std::string> global;
            if (threads > 0) global = {"--threads", std::to_string(threads)};
            if (json_errors) global.push_back("--json-errors");
            if (!manifest_override.empty()) global.insert(global.end(), {"--manifest", manifest_override});
            nested.insert(nested.begin(), global.begin(), global.end());
            return run(nested);
        }
        for (const auto& c : commands) {
            if (!c->selected()) continue;
            write_manifest(*c, manifest_path(*c, manifest_override));
            return c->run();
        }
        throw Error(ErrorKind::InvalidInput, "no command selected");
    } catch (const Error& e) {
        report(json_errors, to_string(e.kind()), e.what(), e.where(), kExitDomain);
    } catch (const std::exception& e) {
        report(json_errors, "internal", e.what(), "", kExitDomain);
    }
    return kExitDomain;
}

}  // namespace

int main(int argc, char** argv) { return run(std::vector<std::string>(argv + 1, argv + argc)); }
