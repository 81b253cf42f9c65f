#include "spatialgen/warp.hpp"
#include "spatialgen/binary.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace spatialgen {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SplatFootprint {
    int x0, x1, y0, y1;
    double depth;
};

std::optional<SplatFootprint> footprint(const CloudPoint& p, const CameraView& view, double r) {
    const auto proj = project(view, p.position);
    if (!proj || !(proj->depth > kNearPlane)) return std::nullopt;
    const double u = proj->pixel.x(), v = proj->pixel.y();
    const int x0 = std::max(0, static_cast<int>(std::ceil(u - r)));
    const int x1 = std::min(view.width() - 1, static_cast<int>(std::floor(u + r)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(v - r)));
    const int y1 = std::min(view.height() - 1, static_cast<int>(std::floor(v + r)));
    if (x0 > x1 || y0 > y1) return std::nullopt;
    return SplatFootprint{x0, x1, y0, y1, proj->depth};
}

void check_radius(double r) {
    if (!(r >= 0.5) || !std::isfinite(r)) {
        throw Error(ErrorKind::InvalidInput, "splat radius must be >= 0.5 px", "radius_px");
    }
}

WarpedImage compose(const GlobalPointCloud& cloud, const CameraView& view, const std::vector<std::int64_t>& winner) {
    const int w = view.width(), h = view.height();
    WarpedImage out{ColorImage(w, h, 3, 0.0f), Mask(w, h, 1, 0)};
    for (std::size_t i = 0; i < winner.size(); ++i) {
        if (winner[i] < 0) continue;
        const auto& p = cloud.points[static_cast<std::size_t>(winner[i])];
        out.coverage.data[i] = 1;
        for (int c = 0; c < 3; ++c) out.color.data[3 * i + static_cast<std::size_t>(c)] = p.color[static_cast<std::size_t>(c)];
    }
    return out;
}

}  // namespace

void GlobalPointCloud::validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        if (!p.position.allFinite()) throw Error(ErrorKind::Invariant, "non-finite point position", "point " + std::to_string(i));
        if (!(p.confidence > 1.0f)) throw Error(ErrorKind::Invariant, "point confidence must exceed 1", "point " + std::to_string(i));
    }
}

// Two order-independent reductions: the per-pixel minimum depth, then the
// minimum index among points within the tie band of that depth.
WarpedImage splat(const GlobalPointCloud& cloud, const CameraView& view, double radius_px, Exec exec) {
    check_radius(radius_px);
    view.validate();
    const std::size_t npix = static_cast<std::size_t>(view.width()) * view.height();
    const auto n = static_cast<std::int64_t>(cloud.size());
    std::vector<SplatFootprint> fps(cloud.size());
    std::vector<std::uint8_t> live(cloud.size(), 0);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
    for (std::int64_t i = 0; i < n; ++i) {
        if (auto fp = footprint(cloud.points[static_cast<std::size_t>(i)], view, radius_px)) {
            fps[static_cast<std::size_t>(i)] = *fp;
            live[static_cast<std::size_t>(i)] = 1;
        }
    }

    const int threads = exec == Exec::Parallel ? std::max(1, thread_count()) : 1;
    std::vector<double> nearest(npix * static_cast<std::size_t>(threads), kInf);
    std::vector<std::int64_t> winner(npix * static_cast<std::size_t>(threads), -1);
    const int w = view.width();

#pragma omp parallel num_threads(threads) if (exec == Exec::Parallel)
    {
        const std::size_t base = npix * static_cast<std::size_t>(omp_get_thread_num());
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            if (!live[static_cast<std::size_t>(i)]) continue;
            const auto& f = fps[static_cast<std::size_t>(i)];
            for (int y = f.y0; y <= f.y1; ++y)
                for (int x = f.x0; x <= f.x1; ++x) {
                    double& d = nearest[base + static_cast<std::size_t>(y) * w + x];
                    d = std::min(d, f.depth);
                }
        }
#pragma omp for schedule(static)
        for (std::int64_t p = 0; p < static_cast<std::int64_t>(npix); ++p) {
            double d = nearest[static_cast<std::size_t>(p)];
            for (int t = 1; t < threads; ++t) d = std::min(d, nearest[npix * static_cast<std::size_t>(t) + static_cast<std::size_t>(p)]);
            nearest[static_cast<std::size_t>(p)] = d;
        }
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            if (!live[static_cast<std::size_t>(i)]) continue;
            const auto& f = fps[static_cast<std::size_t>(i)];
            for (int y = f.y0; y <= f.y1; ++y)
                for (int x = f.x0; x <= f.x1; ++x) {
                    const std::size_t p = static_cast<std::size_t>(y) * w + x;
                    if (f.depth > nearest[p] + kSplatDepthTie) continue;
                    std::int64_t& k = winner[base + p];
                    if (k < 0 || i < k) k = i;
                }
        }
#pragma omp for schedule(static)
        for (std::int64_t p = 0; p < static_cast<std::int64_t>(npix); ++p) {
            std::int64_t k = winner[static_cast<std::size_t>(p)];
            for (int t = 1; t < threads; ++t) {
                const std::int64_t o = winner[npix * static_cast<std::size_t>(t) + static_cast<std::size_t>(p)];
                if (o >= 0 && (k < 0 || o < k)) k = o;
            }
            winner[static_cast<std::size_t>(p)] = k;
        }
    }
    winner.resize(npix);
    return compose(cloud, view, winner);
}

WarpedImage splat_reference(const GlobalPointCloud& cloud, const CameraView& view, double radius_px) {
    check_radius(radius_px);
    view.validate();
    const int w = view.width(), h = view.height();
    std::vector<std::optional<Projection>> proj(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) proj[i] = project(view, cloud.points[i].position);
    std::vector<std::int64_t> winner(static_cast<std::size_t>(w) * h, -1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            auto covers = [&](std::size_t i) {
                const auto& p = proj[i];
                return p && p->depth > kNearPlane && std::fabs(x - p->pixel.x()) <= radius_px &&
                       std::fabs(y - p->pixel.y()) <= radius_px;
            };
            double nearest = kInf;
            for (std::size_t i = 0; i < cloud.size(); ++i)
                if (covers(i)) nearest = std::min(nearest, proj[i]->depth);
            for (std::size_t i = 0; i < cloud.size(); ++i) {
                if (covers(i) && proj[i]->depth <= nearest + kSplatDepthTie) {
                    winner[static_cast<std::size_t>(y) * w + x] = static_cast<std::int64_t>(i);
                    break;
                }
            }
        }
    }
    return compose(cloud, view, winner);
}

GlobalPointCloud filter_by_confidence(const GlobalPointCloud& cloud, double tau) {
    if (!(tau >= 1.0)) throw Error(ErrorKind::InvalidInput, "confidence threshold must be >= 1", "tau");
    GlobalPointCloud out;
    std::copy_if(cloud.points.begin(), cloud.points.end(), std::back_inserter(out.points),
                 [tau](const CloudPoint& p) { return p.confidence >= tau; });
    return out;
}

void insert_scm(GlobalPointCloud& cloud, const ViewMaps& maps, int view_index) {
    const auto& scm = maps.scm;
    const std::size_t npix = scm.valid.data.size();
    if (maps.color.pixel_count() != npix || maps.semantic.pixel_count() != npix || maps.confidence.pixel_count() != npix) {
        throw Error(ErrorKind::InvalidInput, "view maps have mismatched sizes", "view " + std::to_string(view_index));
    }
    for (std::size_t i = 0; i < npix; ++i) {
        if (!scm.valid.data[i]) continue;
        CloudPoint p;
        p.position = Vec3(scm.xyz.data[3 * i], scm.xyz.data[3 * i + 1], scm.xyz.data[3 * i + 2]);
        p.color = {maps.color.data[3 * i], maps.color.data[3 * i + 1], maps.color.data[3 * i + 2]};
        p.semantic = maps.semantic.data[i];
        p.confidence = maps.confidence.data[i];
        p.source_view = view_index;
        cloud.points.push_back(p);
    }
}

void write_ply(const std::filesystem::path& path, const GlobalPointCloud& cloud) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot open file for writing", path.string());
    out << "ply\nformat binary_little_endian 1.0\n"
        << "element vertex " << cloud.size() << "\n"
        << "property double x\nproperty double y\nproperty double z\n"
        << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        << "property ushort semantic\nproperty float confidence\nproperty int source_view\n"
        << "end_header\n";
    for (const auto& p : cloud.points) {
        for (int a = 0; a < 3; ++a) binary::put<double>(out, p.position[a]);
        for (float c : p.color) {
            binary::put<std::uint8_t>(out, static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0f, 1.0f) * 255.0f)));
        }
        binary::put<std::uint16_t>(out, p.semantic);
        binary::put<float>(out, p.confidence);
        binary::put<std::int32_t>(out, p.source_view);
    }
    if (!out) throw Error(ErrorKind::Io, "write failed", path.string());
}

namespace {

struct PlyProperty {
    std::string name;
    std::string type;
};

double read_scalar(std::istream& in, const std::string& type, const std::string& where) {
    if (type == "char" || type == "int8") return binary::get<std::int8_t>(in, where);
    if (type == "uchar" || type == "uint8") return binary::get<std::uint8_t>(in, where);
    if (type == "short" || type == "int16") return binary::get<std::int16_t>(in, where);
    if (type == "ushort" || type == "uint16") return binary::get<std::uint16_t>(in, where);
    if (type == "int" || type == "int32") return binary::get<std::int32_t>(in, where);
    if (type == "uint" || type == "uint32") return binary::get<std::uint32_t>(in, where);
    if (type == "float" || type == "float32") return binary::get<float>(in, where);
    if (type == "double" || type == "float64") return binary::get<double>(in, where);
    throw Error(ErrorKind::Io, "unsupported PLY property type '" + type + "'", where);
}

}  // namespace

GlobalPointCloud read_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    const std::string where = path.string();
    if (!in) throw Error(ErrorKind::Io, "cannot open file", where);
    std::string line;
    std::getline(in, line);
    if (line != "ply") throw Error(ErrorKind::Io, "not a PLY file", where);
    std::size_t count = 0;
    bool in_vertex = false;
    std::vector<PlyProperty> props;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "end_header") break;
        if (key == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian") throw Error(ErrorKind::Io, "only binary_little_endian PLY is supported", where);
        } else if (key == "element") {
            std::string name;
            ls >> name;
            in_vertex = name == "vertex";
            if (in_vertex) ls >> count;
            else throw Error(ErrorKind::Io, "unexpected PLY element '" + name + "'", where);
        } else if (key == "property" && in_vertex) {
            PlyProperty p;
            ls >> p.type >> p.name;
            if (p.type == "list") throw Error(ErrorKind::Io, "list properties are not supported", where);
            props.push_back(p);
        }
    }
    if (!in) throw Error(ErrorKind::Io, "truncated PLY header", where);
    GlobalPointCloud cloud;
    cloud.points.resize(count);
    for (auto& p : cloud.points) {
        for (const auto& prop : props) {
            const double v = read_scalar(in, prop.type, where);
            if (prop.name == "x") p.position.x() = v;
            else if (prop.name == "y") p.position.y() = v;
            else if (prop.name == "z") p.position.z() = v;
            else if (prop.name == "red") p.color[0] = static_cast<float>(v / 255.0);
            else if (prop.name == "green") p.color[1] = static_cast<float>(v / 255.0);
            else if (prop.name == "blue") p.color[2] = static_cast<float>(v / 255.0);
            else if (prop.name == "semantic") p.semantic = static_cast<CategoryId>(v);
            else if (prop.name == "confidence") p.confidence = static_cast<float>(v);
            else if (prop.name == "source_view") p.source_view = static_cast<int>(v);
        }
    }
    return cloud;
}

}  // namespace spatialgen
