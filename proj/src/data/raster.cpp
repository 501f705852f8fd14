#include "eddynet/raster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace eddynet::data {

namespace {

long floor_div(long a, long b) {
    long q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace

std::vector<LatticePoint> snap_to_lattice(const EddyContour& contour, const GridGeometry& geometry) {
    if (!(geometry.resolution > 0.0)) throw std::invalid_argument("grid resolution must be positive");
    std::vector<LatticePoint> pts;
    pts.reserve(contour.vertices.size());
    for (const auto& [lon, lat] : contour.vertices) {
        pts.push_back({std::lround((lon - geometry.lon0) / geometry.resolution),
                       std::lround((lat - geometry.lat0) / geometry.resolution)});
    }
    return pts;
}

RasterResult rasterize_contours(const EddyContourSet& contours, const GridGeometry& geometry) {
    RasterResult res;
    res.mask = SegmentationMask(geometry.rows, geometry.cols);
    const long rows = static_cast<long>(geometry.rows);
    const long cols = static_cast<long>(geometry.cols);
    std::vector<int> owner(geometry.rows * geometry.cols, -1);
    std::vector<char> hit(geometry.rows * geometry.cols, 0);
    std::vector<long> crossings;

    for (std::size_t pi = 0; pi < contours.size(); ++pi) {
        const auto& contour = contours[pi];
        if (contour.vertices.size() < 3) {
            throw std::invalid_argument("polygon " + std::to_string(pi) + " has fewer than 3 vertices");
        }
        if (contour.label != kAnticyclonic && contour.label != kCyclonic) {
            throw std::invalid_argument("polygon " + std::to_string(pi) + " has class " +
                                        std::to_string(static_cast<int>(contour.label)));
        }
        const auto pts = snap_to_lattice(contour, geometry);
        long min_r = pts[0].row, max_r = pts[0].row, min_c = pts[0].col, max_c = pts[0].col;
        for (const auto& p : pts) {
            min_r = std::min(min_r, p.row);
            max_r = std::max(max_r, p.row);
            min_c = std::min(min_c, p.col);
            max_c = std::max(max_c, p.col);
        }
        if (min_r < 0 || min_c < 0 || max_r >= rows || max_c >= cols) {
            res.warnings.push_back("polygon " + std::to_string(pi) + " extends outside the " +
                                   std::to_string(rows) + "x" + std::to_string(cols) + " grid; clipped");
        }
        std::fill(hit.begin(), hit.end(), 0);

        // Interior: per row, each edge spanning the row in the half-open sense [min y, max y)
        // contributes the last column strictly left of its crossing.
        const std::size_t nv = pts.size();
        for (long y = std::max(min_r, 0L); y <= std::min(max_r, rows - 1); ++y) {
            crossings.clear();
            for (std::size_t i = 0, j = nv - 1; i < nv; j = i++) {
                const auto& a = pts[i];
                const auto& b = pts[j];
                if ((a.row > y) == (b.row > y)) continue;
                long den = b.row - a.row;
                long num = (y - a.row) * (b.col - a.col) + a.col * den;
                if (den < 0) {
                    den = -den;
                    num = -num;
                }
                // x < num/den  <=>  x <= floor((num - 1) / den)
                crossings.push_back(floor_div(num - 1, den));
            }
            std::sort(crossings.begin(), crossings.end());
            std::size_t below = 0;  // crossings with t < x
            const long x_end = std::min(max_c, cols - 1);
            for (long x = std::max(min_c, 0L); x <= x_end; ++x) {
                while (below < crossings.size() && crossings[below] < x) ++below;
                if ((crossings.size() - below) % 2 == 1) hit[static_cast<std::size_t>(y * cols + x)] = 1;
            }
        }
        // Boundary: lattice points on each edge.
        for (std::size_t i = 0, j = nv - 1; i < nv; j = i++) {
            const auto& a = pts[j];
            const auto& b = pts[i];
            const long dx = b.col - a.col, dy = b.row - a.row;
            const long g = std::gcd(std::abs(dx), std::abs(dy));
            const long sx = g == 0 ? 0 : dx / g, sy = g == 0 ? 0 : dy / g;
            for (long k = 0; k <= g; ++k) {
                const long x = a.col + k * sx, y = a.row + k * sy;
                if (x >= 0 && y >= 0 && x < cols && y < rows) hit[static_cast<std::size_t>(y * cols + x)] = 1;
            }
        }

        std::size_t overlapped = 0;
        for (std::size_t k = 0; k < hit.size(); ++k) {
            if (!hit[k]) continue;
            if (owner[k] >= 0 && owner[k] != static_cast<int>(pi)) ++overlapped;
            owner[k] = static_cast<int>(pi);
            res.mask.values[k] = contour.label;
        }
        if (overlapped > 0) {
            res.warnings.push_back("polygon " + std::to_string(pi) + " overlaps earlier polygons in " +
                                   std::to_string(overlapped) + " cells; later polygon wins");
        }
    }
    return res;
}

}  // namespace eddynet::data
