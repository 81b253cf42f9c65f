#pragma once

#include "spatialgen/parallel.hpp"
#include "spatialgen/warp.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace spatialgen {

struct FusedScene {
    GlobalPointCloud cloud;
    double voxel = 0.0;
    std::map<int, std::size_t> points_per_view;
};

// Voxel-grid dedup: per cell keep the highest-confidence point (ties go to
// the lowest index). Survivors keep their original relative order.
FusedScene fuse(const GlobalPointCloud& cloud, double voxel);

// 10 log10(1 / MSE) over all channels; +inf when the images are identical.
double psnr(const ColorImage& image, const ColorImage& reference);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// Mean SSIM on Rec. 601 luma, Gaussian 11x11 window (sigma 1.5), k1 = 0.01,
// k2 = 0.03, over window positions fully inside the image.
double ssim(const ColorImage& image, const ColorImage& reference, Exec exec = Exec::Parallel);
// Direct 2D window sums; the separable version must agree to rounding.
double ssim_reference(const ColorImage& image, const ColorImage& reference);

enum class ChamferMode { Grid, BruteForce };

// Sum of the two directed mean nearest-neighbor distances. Each direction uses
// up to `sample_n` points of its source cloud drawn from a stream seeded by
// (seed, cloud size), so chamfer(a, b) == chamfer(b, a) exactly.
double chamfer(const GlobalPointCloud& a, const GlobalPointCloud& b, std::size_t sample_n, std::uint64_t seed,
               ChamferMode mode = ChamferMode::Grid);
double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b, std::size_t sample_n, std::uint64_t seed,
               ChamferMode mode = ChamferMode::Grid);

struct ViewMetrics {
    int view_id = 0;
    double psnr = 0.0;
    double ssim = 0.0;
};

// "view_id,psnr,ssim" with +inf written as "inf".
std::string metrics_csv(const std::vector<ViewMetrics>& rows);
std::vector<ViewMetrics> parse_metrics_csv(const std::string& text);
// Means (finite PSNR values only), counts and an optional chamfer value.
std::string metrics_summary_json(const std::vector<ViewMetrics>& rows,
                                 double chamfer_m = std::numeric_limits<double>::quiet_NaN());

}  // namespace spatialgen
