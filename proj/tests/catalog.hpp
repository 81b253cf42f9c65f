#pragma once

#include "support.hpp"

#include <string>
#include <vector>

namespace spatialgen::testing {

// Rooms of the given widths and a common 3 m depth, side by side along x,
// with `objects` 0.2 m cubes dealt round-robin over the rooms.
inline SceneLayout catalog_scene(const std::vector<double>& widths, int objects) {
    SceneLayout s;
    std::vector<double> x0;
    double x = 0.0;
    for (double w : widths) {
        s.rooms.push_back(rect_room(x, 0.0, x + w, 3.0));
        x0.push_back(x);
        x += w;
    }
    std::vector<int> placed(widths.size(), 0);
    for (int i = 0; i < objects; ++i) {
        const std::size_t r = static_cast<std::size_t>(i) % widths.size();
        const int cols = static_cast<int>((widths[r] - 0.4) / 0.3);
        const int k = placed[r]++;
        s.boxes.push_back(make_box(i, Vec3(x0[r] + 0.35 + 0.3 * (k % cols), 0.35 + 0.3 * (k / cols), 0.1), Vec3(0.2, 0.2, 0.2)));
    }
    return s;
}

struct CatalogEntry {
    std::string name;
    SceneLayout layout;
    bool accept = false;  // decision under the curation thresholds
};

// Planted violations around each threshold: floor area 18 / 21 m^2, object
// counts 35 / 36, and a 36th object whose edge is 0.05, 0.2 or 2.0 m.
inline std::vector<CatalogEntry> curation_catalog() {
    std::vector<CatalogEntry> c;
    c.push_back({"area_18", catalog_scene({6.0}, 40), false});
    c.push_back({"area_21", catalog_scene({7.0}, 40), true});
    c.push_back({"objects_35", catalog_scene({3.0, 3.0, 3.0}, 35), false});
    c.push_back({"objects_36", catalog_scene({3.0, 3.0, 3.0}, 36), true});
    const struct {
        const char* name;
        double edge;
        bool accept;
    } planted[] = {{"edge_0.05", 0.05, false}, {"edge_0.2", 0.2, true}, {"edge_2.0", 2.0, false}};
    for (const auto& p : planted) {
        auto s = catalog_scene({3.0, 3.0, 3.0}, 35);
        s.boxes.push_back(make_box(35, Vec3(1.5, 2.0, 1.2), Vec3(p.edge, 0.3, 0.3)));
        c.push_back({p.name, s, p.accept});
    }
    return c;
}

}  // namespace spatialgen::testing
