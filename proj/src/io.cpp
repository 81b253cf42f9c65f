#include "spatialgen/io.hpp"
#include "spatialgen/binary.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace spatialgen {
namespace {

namespace fs = std::filesystem;

void ensure_parent(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw Error(ErrorKind::Io, "cannot open file", path.string());
    return f;
}

struct PngMessage {
    char text[256] = {};
};

void png_error_fn(png_structp png, png_const_charp msg) {
    auto* m = static_cast<PngMessage*>(png_get_error_ptr(png));
    std::snprintf(m->text, sizeof(m->text), "%s", msg);
    png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct PngImage {
    int width = 0, height = 0, bit_depth = 8, color_type = 0, rowbytes = 0;
    std::vector<png_byte> pixels;
    std::vector<png_color> palette;
};

// Only objects that outlive the setjmp frame are touched between setjmp and
// a possible longjmp, so no destructor is skipped.
bool write_png_raw(std::FILE* f, const PngImage& img, PngMessage& msg) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &msg, png_error_fn, png_warning_fn);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_init_io(png, f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 img.bit_depth, img.color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    if (!img.palette.empty()) {
        png_set_PLTE(png, info, img.palette.data(), static_cast<int>(img.palette.size()));
    }
    png_write_info(png, info);
    if (img.bit_depth == 16) png_set_swap(png);
    for (int y = 0; y < img.height; ++y) {
        png_write_row(png, img.pixels.data() + static_cast<std::size_t>(y) * img.rowbytes);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

bool read_png_raw(std::FILE* f, PngImage& img, PngMessage& msg) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &msg, png_error_fn, png_warning_fn);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_init_io(png, f);
    png_read_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.bit_depth = png_get_bit_depth(png, info);
    img.color_type = png_get_color_type(png, info);
    if (img.color_type == PNG_COLOR_TYPE_PALETTE) {
        png_colorp plte = nullptr;
        int n = 0;
        if (png_get_PLTE(png, info, &plte, &n)) img.palette.assign(plte, plte + n);
    }
    if (img.bit_depth < 8) png_set_packing(png);
    if (img.bit_depth == 16) png_set_swap(png);
    png_read_update_info(png, info);
    img.rowbytes = static_cast<int>(png_get_rowbytes(png, info));
    img.pixels.resize(static_cast<std::size_t>(img.rowbytes) * img.height);
    for (int y = 0; y < img.height; ++y) {
        png_read_row(png, img.pixels.data() + static_cast<std::size_t>(y) * img.rowbytes, nullptr);
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

void write_png(const fs::path& path, const PngImage& img) {
    ensure_parent(path);
    FilePtr f = open_file(path, "wb");
    PngMessage msg;
    if (!write_png_raw(f.get(), img, msg)) throw Error(ErrorKind::Io, std::string("png: ") + msg.text, path.string());
}

PngImage read_png(const fs::path& path) {
    FilePtr f = open_file(path, "rb");
    PngImage img;
    PngMessage msg;
    if (!read_png_raw(f.get(), img, msg)) throw Error(ErrorKind::Io, std::string("png: ") + msg.text, path.string());
    return img;
}

std::uint8_t to_u8(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open file", path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot open file for writing", path.string());
    out << text;
    if (!out) throw Error(ErrorKind::Io, "write failed", path.string());
}

void write_png_rgb(const fs::path& path, const ColorImage& image) {
    if (image.channels != 3) throw Error(ErrorKind::InvalidInput, "expected a 3-channel image", path.string());
    PngImage img{image.width, image.height, 8, PNG_COLOR_TYPE_RGB, image.width * 3, {}, {}};
    img.pixels.resize(image.data.size());
    std::transform(image.data.begin(), image.data.end(), img.pixels.begin(), to_u8);
    write_png(path, img);
}

ColorImage read_png_rgb(const fs::path& path) {
    const PngImage img = read_png(path);
    if (img.color_type != PNG_COLOR_TYPE_RGB || img.bit_depth != 8) {
        throw Error(ErrorKind::Io, "expected 8-bit RGB png", path.string());
    }
    ColorImage out(img.width, img.height, 3);
    std::transform(img.pixels.begin(), img.pixels.end(), out.data.begin(),
                   [](png_byte b) { return static_cast<float>(b) / 255.0f; });
    return out;
}

void write_png_semantic(const fs::path& path, const SemanticMap& semantic, const CategoryPalette& palette) {
    if (palette.size() > 256) throw Error(ErrorKind::InvalidInput, "palette exceeds 256 entries", path.string());
    PngImage img{semantic.width, semantic.height, 8, PNG_COLOR_TYPE_PALETTE, semantic.width, {}, {}};
    for (const auto& e : palette.entries()) img.palette.push_back({e.rgb[0], e.rgb[1], e.rgb[2]});
    img.pixels.resize(semantic.data.size());
    for (std::size_t i = 0; i < semantic.data.size(); ++i) {
        if (!palette.valid(semantic.data[i])) {
            throw Error(ErrorKind::InvalidInput, "category id outside palette", path.string());
        }
        img.pixels[i] = static_cast<png_byte>(semantic.data[i]);
    }
    write_png(path, img);
}

SemanticMap read_png_semantic(const fs::path& path) {
    const PngImage img = read_png(path);
    if (img.color_type != PNG_COLOR_TYPE_PALETTE && img.color_type != PNG_COLOR_TYPE_GRAY) {
        throw Error(ErrorKind::Io, "expected an indexed png", path.string());
    }
    SemanticMap out(img.width, img.height, 1);
    std::copy(img.pixels.begin(), img.pixels.end(), out.data.begin());
    return out;
}

void write_png_depth(const fs::path& path, const DepthMap& depth) {
    PngImage img{depth.width, depth.height, 16, PNG_COLOR_TYPE_GRAY, depth.width * 2, {}, {}};
    img.pixels.resize(depth.data.size() * 2);
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
        const double mm = std::clamp(std::round(depth.data[i] * 1000.0), 0.0, 65535.0);
        const auto v = static_cast<std::uint16_t>(mm);
        std::memcpy(img.pixels.data() + 2 * i, &v, 2);
    }
    write_png(path, img);
}

DepthMap read_png_depth(const fs::path& path) {
    const PngImage img = read_png(path);
    if (img.color_type != PNG_COLOR_TYPE_GRAY || img.bit_depth != 16) {
        throw Error(ErrorKind::Io, "expected 16-bit grayscale png", path.string());
    }
    DepthMap out(img.width, img.height, 1);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        std::uint16_t v = 0;
        std::memcpy(&v, img.pixels.data() + 2 * i, 2);
        out.data[i] = v / 1000.0;
    }
    return out;
}

void write_scm(const fs::path& path, const SceneCoordMap& scm) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot open file for writing", path.string());
    binary::put_bytes(out, "SCM1");
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(scm.width()));
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(scm.height()));
    binary::put<std::uint32_t>(out, 3);
    for (double v : scm.xyz.data) binary::put<float>(out, static_cast<float>(v));
    for (std::uint8_t m : scm.valid.data) binary::put<std::uint8_t>(out, m ? 1 : 0);
    if (!out) throw Error(ErrorKind::Io, "write failed", path.string());
}

SceneCoordMap read_scm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open file", path.string());
    const std::string where = path.string();
    if (binary::get_bytes(in, 4, where) != "SCM1") throw Error(ErrorKind::Io, "bad SCM magic", where);
    const auto w = binary::get<std::uint32_t>(in, where);
    const auto h = binary::get<std::uint32_t>(in, where);
    const auto c = binary::get<std::uint32_t>(in, where);
    if (c != 3 || w == 0 || h == 0 || w > 65536 || h > 65536) throw Error(ErrorKind::Io, "bad SCM header", where);
    SceneCoordMap scm{Image<double>(static_cast<int>(w), static_cast<int>(h), 3),
                      Mask(static_cast<int>(w), static_cast<int>(h), 1)};
    for (double& v : scm.xyz.data) v = binary::get<float>(in, where);
    for (std::uint8_t& m : scm.valid.data) m = binary::get<std::uint8_t>(in, where);
    return scm;
}

}  // namespace spatialgen
