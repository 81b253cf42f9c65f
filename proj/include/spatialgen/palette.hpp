#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace spatialgen {

using CategoryId = std::uint16_t;

// Reserved ids come first; object categories follow from kFirstObject.
namespace category {
inline constexpr CategoryId kVoid = 0;
inline constexpr CategoryId kWall = 1;
inline constexpr CategoryId kDoor = 2;
inline constexpr CategoryId kWindow = 3;
inline constexpr CategoryId kFloor = 4;
inline constexpr CategoryId kCeiling = 5;
inline constexpr CategoryId kFirstObject = 6;
inline constexpr int kObjectCount = 62;
inline constexpr int kReservedCount = 6;
}  // namespace category

struct PaletteEntry {
    std::string name;
    std::array<std::uint8_t, 3> rgb{};
};

class CategoryPalette {
public:
    // 6 reserved + 62 object categories with distinct display colors.
    static const CategoryPalette& standard();

    // Parses {"entries":[{"name":..., "rgb":[r,g,b]}, ...]}; the first six
    // entries must be the reserved ids in order.
    static CategoryPalette from_json(std::string_view text);
    std::string to_json() const;

    std::size_t size() const { return entries_.size(); }
    const PaletteEntry& operator[](CategoryId id) const { return entries_.at(id); }
    const std::vector<PaletteEntry>& entries() const { return entries_; }

    bool valid(CategoryId id) const { return id < entries_.size(); }
    bool is_object(CategoryId id) const { return id >= category::kFirstObject && id < entries_.size(); }
    int find(std::string_view name) const;

    // Linear [0,1] albedo used by the synthetic renderer.
    std::array<float, 3> albedo(CategoryId id) const;

private:
    explicit CategoryPalette(std::vector<PaletteEntry> entries);
    std::vector<PaletteEntry> entries_;
};

}  // namespace spatialgen
