#pragma once

#include "spatialgen/palette.hpp"
#include "spatialgen/raster.hpp"

#include <filesystem>
#include <string>

namespace spatialgen {

std::string read_text_file(const std::filesystem::path& path);
// Creates parent directories as needed.
void write_text_file(const std::filesystem::path& path, const std::string& text);

// 8-bit RGB; values in [0,1] are rounded to the nearest code.
void write_png_rgb(const std::filesystem::path& path, const ColorImage& image);
ColorImage read_png_rgb(const std::filesystem::path& path);

// 8-bit indexed PNG whose palette entries are the category colors, so the
// stored index is the category id.
void write_png_semantic(const std::filesystem::path& path, const SemanticMap& semantic,
                        const CategoryPalette& palette = CategoryPalette::standard());
SemanticMap read_png_semantic(const std::filesystem::path& path);

// 16-bit grayscale in millimeters, saturating at 65.535 m; 0 marks no surface.
void write_png_depth(const std::filesystem::path& path, const DepthMap& depth);
DepthMap read_png_depth(const std::filesystem::path& path);

// "SCM1", u32 width, height, channels (= 3), row-major float32 xyz, then
// width * height mask bytes. All little-endian.
void write_scm(const std::filesystem::path& path, const SceneCoordMap& scm);
SceneCoordMap read_scm(const std::filesystem::path& path);

}  // namespace spatialgen
