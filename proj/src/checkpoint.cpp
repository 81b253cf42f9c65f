#include "spatialgen/checkpoint.hpp"
#include "spatialgen/binary.hpp"

#include <fstream>

namespace spatialgen {

namespace fs = std::filesystem;

void Checkpoint::store(const std::string& prefix, const nn::ParamSet<float>& params) {
    for (const auto& [name, p] : params.all()) tensors[prefix + name] = p.value;
}

void Checkpoint::restore(const std::string& prefix, nn::ParamSet<float>& params) const {
    std::size_t found = 0;
    for (const auto& [name, m] : tensors) {
        if (name.rfind(prefix, 0) != 0) continue;
        const std::string local = name.substr(prefix.size());
        if (!params.contains(local)) throw Error(ErrorKind::Schema, "unexpected tensor in checkpoint", name);
        auto& p = params.at(local);
        if (p.value.rows() != m.rows() || p.value.cols() != m.cols()) {
            throw Error(ErrorKind::Schema, "tensor shape does not match the architecture", name);
        }
        p.value = m;
        ++found;
    }
    if (found != params.all().size()) throw Error(ErrorKind::Schema, "checkpoint is missing tensors", prefix);
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
    auto it = tensors.lower_bound(prefix);
    return it != tensors.end() && it->first.rfind(prefix, 0) == 0;
}

void write_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot open file for writing", path.string());
    binary::put_bytes(out, "SGCK");
    binary::put<std::uint32_t>(out, kCheckpointVersion);
    const std::string desc = ckpt.descriptor.dump();
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(desc.size()));
    binary::put_bytes(out, desc);
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, m] : ckpt.tensors) {
        binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        binary::put_bytes(out, name);
        binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
        binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
        out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    }
    if (!out) throw Error(ErrorKind::Io, "write failed", path.string());
}

Checkpoint read_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    const std::string where = path.string();
    if (!in) throw Error(ErrorKind::Io, "cannot open file", where);
    if (binary::get_bytes(in, 4, where) != "SGCK") throw Error(ErrorKind::Io, "bad checkpoint magic", where);
    const auto version = binary::get<std::uint32_t>(in, where);
    if (version != kCheckpointVersion) throw Error(ErrorKind::Io, "unsupported checkpoint version", where);
    Checkpoint ckpt;
    const auto desc_len = binary::get<std::uint32_t>(in, where);
    try {
        ckpt.descriptor = nlohmann::json::parse(binary::get_bytes(in, desc_len, where));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Io, std::string("bad checkpoint descriptor: ") + e.what(), where);
    }
    const auto count = binary::get<std::uint32_t>(in, where);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = binary::get<std::uint32_t>(in, where);
        if (name_len > 4096) throw Error(ErrorKind::Io, "bad tensor name length", where);
        std::string name = binary::get_bytes(in, name_len, where);
        const auto rows = binary::get<std::uint32_t>(in, where);
        const auto cols = binary::get<std::uint32_t>(in, where);
        if (static_cast<std::uint64_t>(rows) * cols > (1ull << 30)) throw Error(ErrorKind::Io, "tensor too large", name);
        nn::Mat<float> m(rows, cols);
        in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
        if (!in) throw Error(ErrorKind::Io, "unexpected end of file", where);
        ckpt.tensors.emplace(std::move(name), std::move(m));
    }
    return ckpt;
}

}  // namespace spatialgen
