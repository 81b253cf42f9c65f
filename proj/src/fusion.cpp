#include "spatialgen/fusion.hpp"
#include "spatialgen/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace spatialgen {
namespace {

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey&) const = default;
};

struct CellHash {
    std::size_t operator()(const CellKey& k) const {
        return static_cast<std::size_t>(Rng::mix(static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull ^
                                                 Rng::mix(static_cast<std::uint64_t>(k.y) ^ Rng::mix(static_cast<std::uint64_t>(k.z)))));
    }
};

CellKey cell_of(const Vec3& p, double h) {
    return {static_cast<std::int64_t>(std::floor(p.x() / h)), static_cast<std::int64_t>(std::floor(p.y() / h)),
            static_cast<std::int64_t>(std::floor(p.z() / h))};
}

void check_pair(const ColorImage& a, const ColorImage& b) {
    if (!a.same_shape(b) || a.channels != 3) {
        throw Error(ErrorKind::InvalidInput, "metric inputs must be RGB images of equal shape", "image");
    }
}

std::vector<double> luma(const ColorImage& img) {
    std::vector<double> y(img.pixel_count());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
    }
    return y;
}

std::array<double, kSsimWindow> gaussian_1d() {
    std::array<double, kSsimWindow> g{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
        sum += g[static_cast<std::size_t>(i)];
    }
    for (auto& v : g) v /= sum;
    return g;
}

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

double ssim_term(double mx, double my, double xx, double yy, double xy) {
    const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
    return ((2 * mx * my + kC1) * (2 * cov + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
}

void check_ssim_size(const ColorImage& img) {
    if (img.width < kSsimWindow || img.height < kSsimWindow) {
        throw Error(ErrorKind::InvalidInput, "SSIM needs images of at least 11x11 pixels", "image");
    }
}

std::vector<Vec3> positions(const GlobalPointCloud& c) {
    std::vector<Vec3> out;
    out.reserve(c.size());
    for (const auto& p : c.points) out.push_back(p.position);
    return out;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t sample_n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (sample_n >= n) return idx;
    Rng rng = Rng(seed).fork(n);
    for (std::size_t i = 0; i < sample_n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(sample_n);
    std::sort(idx.begin(), idx.end());
    return idx;
}

class NearestGrid {
public:
    explicit NearestGrid(const std::vector<Vec3>& pts) : pts_(pts) {
        Vec3 lo = pts[0], hi = pts[0];
        for (const auto& p : pts) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        const Vec3 ext = (hi - lo).cwiseMax(1e-9);
        cell_ = std::cbrt(ext.prod() / static_cast<double>(pts.size()));
        cell_ = std::max(cell_, ext.maxCoeff() / 1024.0);
        if (!(cell_ > 0) || !std::isfinite(cell_)) cell_ = 1.0;
        lo_ = cell_of(lo, cell_);
        hi_ = cell_of(hi, cell_);
        for (std::size_t i = 0; i < pts.size(); ++i) cells_[cell_of(pts[i], cell_)].push_back(i);
    }

    double nearest(const Vec3& q) const {
        const CellKey c = cell_of(q, cell_);
        auto gap = [](std::int64_t v, std::int64_t lo, std::int64_t hi) {
            return v < lo ? lo - v : (v > hi ? v - hi : 0);
        };
        const std::int64_t r0 = std::max({gap(c.x, lo_.x, hi_.x), gap(c.y, lo_.y, hi_.y), gap(c.z, lo_.z, hi_.z)});
        const std::int64_t rmax = std::max({std::abs(c.x - lo_.x), std::abs(c.x - hi_.x), std::abs(c.y - lo_.y),
                                            std::abs(c.y - hi_.y), std::abs(c.z - lo_.z), std::abs(c.z - hi_.z)});
        double best = std::numeric_limits<double>::infinity();
        for (std::int64_t r = r0; r <= rmax; ++r) {
            // Anything in ring r + 1 or beyond is at least r cells away.
            if (best <= static_cast<double>(r - 1) * cell_) break;
            auto visit = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
                if (z < lo_.z || z > hi_.z) return;
                const auto it = cells_.find({x, y, z});
                if (it == cells_.end()) return;
                for (std::size_t i : it->second) best = std::min(best, (pts_[i] - q).norm());
            };
            // Only the shell at Chebyshev distance r: full z columns on the
            // x/y boundary, the two z caps inside it.
            for (std::int64_t x = std::max(c.x - r, lo_.x); x <= std::min(c.x + r, hi_.x); ++x)
                for (std::int64_t y = std::max(c.y - r, lo_.y); y <= std::min(c.y + r, hi_.y); ++y) {
                    if (std::abs(x - c.x) == r || std::abs(y - c.y) == r) {
                        for (std::int64_t z = std::max(c.z - r, lo_.z); z <= std::min(c.z + r, hi_.z); ++z) visit(x, y, z);
                    } else {
                        visit(x, y, c.z - r);
                        if (r > 0) visit(x, y, c.z + r);
                    }
                }
        }
        return best;
    }

private:
    const std::vector<Vec3>& pts_;
    double cell_ = 1.0;
    CellKey lo_{}, hi_{};
    std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells_;
};

double directed(const std::vector<Vec3>& from, const std::vector<Vec3>& to, std::size_t sample_n, std::uint64_t seed,
                ChamferMode mode) {
    const auto idx = sample_indices(from.size(), sample_n, seed);
    std::vector<double> d(idx.size());
    const auto n = static_cast<std::int64_t>(idx.size());
    if (mode == ChamferMode::Grid) {
        const NearestGrid grid(to);
#pragma omp parallel for schedule(dynamic, 64)
        for (std::int64_t i = 0; i < n; ++i) d[static_cast<std::size_t>(i)] = grid.nearest(from[idx[static_cast<std::size_t>(i)]]);
    } else {
#pragma omp parallel for schedule(dynamic, 64)
        for (std::int64_t i = 0; i < n; ++i) {
            const Vec3& q = from[idx[static_cast<std::size_t>(i)]];
            double best = std::numeric_limits<double>::infinity();
            for (const auto& p : to) best = std::min(best, (p - q).norm());
            d[static_cast<std::size_t>(i)] = best;
        }
    }
    double sum = 0.0;
    for (double v : d) sum += v;
    return sum / static_cast<double>(d.size());
}

std::string format_value(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

}  // namespace

FusedScene fuse(const GlobalPointCloud& cloud, double voxel) {
    if (!(voxel > 0) || !std::isfinite(voxel)) throw Error(ErrorKind::InvalidInput, "voxel size must be positive", "voxel");
    std::unordered_map<CellKey, std::size_t, CellHash> keeper;
    keeper.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto [it, inserted] = keeper.try_emplace(cell_of(cloud.points[i].position, voxel), i);
        if (!inserted && cloud.points[i].confidence > cloud.points[it->second].confidence) it->second = i;
    }
    std::vector<std::size_t> kept;
    kept.reserve(keeper.size());
    for (const auto& [key, i] : keeper) kept.push_back(i);
    std::sort(kept.begin(), kept.end());
    FusedScene out;
    out.voxel = voxel;
    out.cloud.points.reserve(kept.size());
    for (std::size_t i : kept) {
        out.cloud.points.push_back(cloud.points[i]);
        ++out.points_per_view[cloud.points[i].source_view];
    }
    return out;
}

double psnr(const ColorImage& image, const ColorImage& reference) {
    check_pair(image, reference);
    double se = 0.0;
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        const double d = static_cast<double>(image.data[i]) - reference.data[i];
        se += d * d;
    }
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / (se / static_cast<double>(image.data.size())));
}

double ssim(const ColorImage& image, const ColorImage& reference, Exec exec) {
    check_pair(image, reference);
    check_ssim_size(image);
    const int w = image.width, h = image.height;
    const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
    const auto g = gaussian_1d();
    const auto x = luma(image), y = luma(reference);
    // Five moment images, blurred horizontally then vertically.
    std::array<std::vector<double>, 5> src;
    for (auto& s : src) s.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        src[0][i] = x[i];
        src[1][i] = y[i];
        src[2][i] = x[i] * x[i];
        src[3][i] = y[i] * y[i];
        src[4][i] = x[i] * y[i];
    }
    std::array<std::vector<double>, 5> horiz;
    for (auto& s : horiz) s.assign(static_cast<std::size_t>(ow) * h, 0.0);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < ow; ++c)
            for (int m = 0; m < 5; ++m) {
                double acc = 0.0;
                for (int k = 0; k < kSsimWindow; ++k) acc += g[static_cast<std::size_t>(k)] * src[static_cast<std::size_t>(m)][static_cast<std::size_t>(r) * w + c + k];
                horiz[static_cast<std::size_t>(m)][static_cast<std::size_t>(r) * ow + c] = acc;
            }
    std::vector<double> row_sum(static_cast<std::size_t>(oh), 0.0);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
    for (int r = 0; r < oh; ++r) {
        double acc_row = 0.0;
        for (int c = 0; c < ow; ++c) {
            std::array<double, 5> mom{};
            for (int m = 0; m < 5; ++m) {
                double acc = 0.0;
                for (int k = 0; k < kSsimWindow; ++k) acc += g[static_cast<std::size_t>(k)] * horiz[static_cast<std::size_t>(m)][static_cast<std::size_t>(r + k) * ow + c];
                mom[static_cast<std::size_t>(m)] = acc;
            }
            acc_row += ssim_term(mom[0], mom[1], mom[2], mom[3], mom[4]);
        }
        row_sum[static_cast<std::size_t>(r)] = acc_row;
    }
    double total = 0.0;
    for (double v : row_sum) total += v;
    return total / (static_cast<double>(ow) * oh);
}

double ssim_reference(const ColorImage& image, const ColorImage& reference) {
    check_pair(image, reference);
    check_ssim_size(image);
    const int w = image.width, h = image.height;
    const auto g = gaussian_1d();
    const auto x = luma(image), y = luma(reference);
    double total = 0.0;
    int count = 0;
    for (int r = 0; r + kSsimWindow <= h; ++r)
        for (int c = 0; c + kSsimWindow <= w; ++c) {
            double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
            for (int i = 0; i < kSsimWindow; ++i)
                for (int j = 0; j < kSsimWindow; ++j) {
                    const double wt = g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(j)];
                    const std::size_t p = static_cast<std::size_t>(r + i) * w + c + j;
                    mx += wt * x[p];
                    my += wt * y[p];
                    xx += wt * x[p] * x[p];
                    yy += wt * y[p] * y[p];
                    xy += wt * x[p] * y[p];
                }
            total += ssim_term(mx, my, xx, yy, xy);
            ++count;
        }
    return total / count;
}

double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b, std::size_t sample_n, std::uint64_t seed,
               ChamferMode mode) {
    if (a.empty() || b.empty()) throw Error(ErrorKind::InvalidInput, "chamfer needs two non-empty clouds", "cloud");
    if (sample_n == 0) throw Error(ErrorKind::InvalidInput, "chamfer sample count must be positive", "sample_n");
    return directed(a, b, sample_n, seed, mode) + directed(b, a, sample_n, seed, mode);
}

double chamfer(const GlobalPointCloud& a, const GlobalPointCloud& b, std::size_t sample_n, std::uint64_t seed,
               ChamferMode mode) {
    return chamfer(positions(a), positions(b), sample_n, seed, mode);
}

std::string metrics_csv(const std::vector<ViewMetrics>& rows) {
    std::string out = "view_id,psnr,ssim\n";
    for (const auto& r : rows) out += std::to_string(r.view_id) + "," + format_value(r.psnr) + "," + format_value(r.ssim) + "\n";
    return out;
}

std::vector<ViewMetrics> parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (line != "view_id,psnr,ssim") throw Error(ErrorKind::Schema, "unexpected metrics header", "metrics.csv");
    std::vector<ViewMetrics> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id, p, s;
        if (!std::getline(ls, id, ',') || !std::getline(ls, p, ',') || !std::getline(ls, s)) {
            throw Error(ErrorKind::Schema, "malformed metrics row", line);
        }
        rows.push_back({std::stoi(id), std::stod(p), std::stod(s)});
    }
    return rows;
}

std::string metrics_summary_json(const std::vector<ViewMetrics>& rows, double chamfer_m) {
    double psnr_sum = 0.0, ssim_sum = 0.0;
    std::size_t finite = 0;
    for (const auto& r : rows) {
        ssim_sum += r.ssim;
        if (std::isfinite(r.psnr)) {
            psnr_sum += r.psnr;
            ++finite;
        }
    }
    nlohmann::ordered_json j;
    j["views"] = rows.size();
    j["exact_views"] = rows.size() - finite;
    j["mean_psnr_finite"] = finite ? nlohmann::ordered_json(psnr_sum / static_cast<double>(finite)) : nlohmann::ordered_json(nullptr);
    j["mean_ssim"] = rows.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(ssim_sum / static_cast<double>(rows.size()));
    j["chamfer_m"] = std::isnan(chamfer_m) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(chamfer_m);
    return j.dump(2) + "\n";
}

}  // namespace spatialgen
