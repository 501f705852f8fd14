#ifndef EDDYNET_RASTER_HPP
#define EDDYNET_RASTER_HPP

#include <string>
#include <vector>

#include "eddynet/field.hpp"
#include "eddynet/grid_io.hpp"

namespace eddynet::data {

/// A polygon vertex snapped to the grid: col = round((lon - lon0) / res), row = round((lat - lat0) / res).
struct LatticePoint {
    long col = 0;
    long row = 0;
    bool operator==(const LatticePoint&) const = default;
};

std::vector<LatticePoint> snap_to_lattice(const EddyContour& contour, const GridGeometry& geometry);

struct RasterResult {
    SegmentationMask mask;
    std::vector<std::string> warnings;
};

/// Labels every cell whose center is inside a polygon (even-odd rule) or lies exactly on one
/// of its edges. Polygons are painted in input order, later ones overwriting earlier ones;
/// overlaps and polygons reaching outside the grid produce warnings.
RasterResult rasterize_contours(const EddyContourSet& contours, const GridGeometry& geometry);

}  // namespace eddynet::data

#endif  // EDDYNET_RASTER_HPP
