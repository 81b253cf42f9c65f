#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spatialgen {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

enum class ErrorKind {
    InvalidInput,
    Schema,
    Invariant,
    PlacementFailure,
    Divergence,
    Io,
    Backend,
};

const char* to_string(ErrorKind kind);

// Every domain failure in the library is reported through this type. `where`
// carries a JSON field path, a box id, a step index or a file name depending
// on the kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::string where = {})
        : std::runtime_error(message), kind_(kind), where_(std::move(where)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& where() const noexcept { return where_; }

private:
    ErrorKind kind_;
    std::string where_;
};

// Dense interleaved raster, row-major, `channels` values per pixel.
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, int c = 1, T fill = T{})
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    T& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    const T& at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

    std::span<T> pixel(int x, int y) { return {data.data() + index(x, y), static_cast<std::size_t>(channels)}; }
    std::span<const T> pixel(int x, int y) const {
        return {data.data() + index(x, y), static_cast<std::size_t>(channels)};
    }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool empty() const { return data.empty(); }
    bool same_shape(int w, int h, int c) const { return width == w && height == h && channels == c; }
    template <typename U>
    bool same_shape(const Image<U>& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    bool operator==(const Image&) const = default;
};

using ColorImage = Image<float>;       // RGB in [0,1]
using SemanticMap = Image<std::uint16_t>;
using DepthMap = Image<double>;        // camera-frame z in meters, 0 = no hit
using Mask = Image<std::uint8_t>;

}  // namespace spatialgen
