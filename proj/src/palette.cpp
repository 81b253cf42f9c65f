#include "spatialgen/palette.hpp"
#include "spatialgen/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace spatialgen {
namespace {

constexpr std::array<const char*, category::kObjectCount> kObjectNames = {
    "bed",         "cabinet",     "chair",        "table",      "sofa",         "shelf",
    "desk",        "lamp",        "armchair",     "wardrobe",   "bathtub",      "chest_of_drawers",
    "curtain",     "counter",     "sink",         "fireplace",  "refrigerator", "stool",
    "stove",       "toilet",      "tv",           "bookcase",   "coffee_table", "ottoman",
    "mirror",      "rug",         "plant",        "cushion",    "picture",      "bench",
    "nightstand",  "dresser",     "blind",        "screen",     "computer",     "kitchen_island",
    "dishwasher",  "microwave",   "oven",         "washer",     "radiator",     "vase",
    "clock",       "basket",      "box",          "bar",        "piano",        "pool_table",
    "chandelier",  "sconce",      "fan",          "air_conditioner", "shower",  "towel",
    "bottle",      "bowl",        "tray",         "speaker",    "monitor",      "printer",
    "trash_can",   "other"};

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = std::fmod(h, 1.0) * 6.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    auto q = [](double u) { return static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0)); };
    return {q(r + m), q(g + m), q(b + m)};
}

std::vector<PaletteEntry> standard_entries() {
    std::vector<PaletteEntry> e;
    e.push_back({"void", {0, 0, 0}});
    e.push_back({"wall", {180, 180, 170}});
    e.push_back({"door", {140, 90, 40}});
    e.push_back({"window", {120, 200, 230}});
    e.push_back({"floor", {150, 120, 90}});
    e.push_back({"ceiling", {235, 235, 235}});
    // Golden-angle hue walk; saturation/value cycle so neighbours differ.
    for (int i = 0; i < category::kObjectCount; ++i) {
        const double h = std::fmod(0.07 + i * 0.6180339887498949, 1.0);
        const double s = 0.45 + 0.18 * (i % 3);
        const double v = 0.55 + 0.15 * ((i / 3) % 3);
        e.push_back({kObjectNames[static_cast<std::size_t>(i)], hsv_to_rgb(h, s, v)});
    }
    return e;
}

}  // namespace

CategoryPalette::CategoryPalette(std::vector<PaletteEntry> entries) : entries_(std::move(entries)) {
    std::set<std::string> names;
    for (const auto& en : entries_) {
        if (!names.insert(en.name).second) {
            throw Error(ErrorKind::Invariant, "duplicate palette name '" + en.name + "'", "entries");
        }
    }
}

const CategoryPalette& CategoryPalette::standard() {
    static const CategoryPalette palette(standard_entries());
    return palette;
}

CategoryPalette CategoryPalette::from_json(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Schema, std::string("palette parse error: ") + e.what());
    }
    if (!doc.contains("entries") || !doc["entries"].is_array()) {
        throw Error(ErrorKind::Schema, "missing array", "entries");
    }
    std::vector<PaletteEntry> entries;
    const auto& arr = doc["entries"];
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = "entries[" + std::to_string(i) + "]";
        const auto& item = arr[i];
        if (!item.contains("name") || !item["name"].is_string()) throw Error(ErrorKind::Schema, "missing name", path + ".name");
        if (!item.contains("rgb") || !item["rgb"].is_array() || item["rgb"].size() != 3) {
            throw Error(ErrorKind::Schema, "rgb must be 3 integers", path + ".rgb");
        }
        PaletteEntry en;
        en.name = item["name"].get<std::string>();
        for (int c = 0; c < 3; ++c) {
            const int v = item["rgb"][c].get<int>();
            if (v < 0 || v > 255) throw Error(ErrorKind::Schema, "rgb out of range", path + ".rgb");
            en.rgb[c] = static_cast<std::uint8_t>(v);
        }
        entries.push_back(std::move(en));
    }
    static constexpr std::array<const char*, category::kReservedCount> reserved = {"void", "wall", "door",
                                                                                  "window", "floor", "ceiling"};
    if (entries.size() < reserved.size()) throw Error(ErrorKind::Schema, "too few entries", "entries");
    for (std::size_t i = 0; i < reserved.size(); ++i) {
        if (entries[i].name != reserved[i]) {
            throw Error(ErrorKind::Schema, std::string("reserved id must be '") + reserved[i] + "'",
                        "entries[" + std::to_string(i) + "].name");
        }
    }
    return CategoryPalette(std::move(entries));
}

std::string CategoryPalette::to_json() const {
    nlohmann::json doc;
    doc["entries"] = nlohmann::json::array();
    for (const auto& en : entries_) {
        doc["entries"].push_back({{"name", en.name}, {"rgb", {en.rgb[0], en.rgb[1], en.rgb[2]}}});
    }
    return doc.dump(2);
}

int CategoryPalette::find(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

std::array<float, 3> CategoryPalette::albedo(CategoryId id) const {
    const auto& rgb = entries_.at(id).rgb;
    return {rgb[0] / 255.0f, rgb[1] / 255.0f, rgb[2] / 255.0f};
}

}  // namespace spatialgen
