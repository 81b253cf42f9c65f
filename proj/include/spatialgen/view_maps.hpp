#pragma once

#include "spatialgen/raster.hpp"

namespace spatialgen {

// Per-view bundle exchanged between the renderers, the generator backends and
// the point cloud.
struct ViewMaps {
    ColorImage color;          // 3 channels in [0,1]
    SemanticMap semantic;
    DepthMap depth;
    SceneCoordMap scm;
    Image<float> confidence;   // > 1 on valid pixels

    int width() const { return color.width; }
    int height() const { return color.height; }
};

}  // namespace spatialgen
