#pragma once

#include "spatialgen/nn.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>

namespace spatialgen {

// Binary parameter file: "SGCK", u32 version, u32 descriptor length, the
// descriptor JSON, u32 tensor count, then per tensor u32 name length, name,
// u32 rows, u32 cols and rows * cols little-endian float32 values.
struct Checkpoint {
    nlohmann::json descriptor = nlohmann::json::object();
    std::map<std::string, nn::Mat<float>> tensors;

    // Adds every parameter of `params` under `prefix`.
    void store(const std::string& prefix, const nn::ParamSet<float>& params);
    // Copies every tensor under `prefix` into the matching parameter;
    // shapes and the name set must agree.
    void restore(const std::string& prefix, nn::ParamSet<float>& params) const;
    bool has_prefix(const std::string& prefix) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace spatialgen
