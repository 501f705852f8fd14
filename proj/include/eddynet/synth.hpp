#ifndef EDDYNET_SYNTH_HPP
#define EDDYNET_SYNTH_HPP

#include <vector>

#include "eddynet/dataset.hpp"
#include "eddynet/grid_io.hpp"

namespace eddynet::data {

struct SynthConfig {
    std::size_t grid_size = 64;
    std::size_t n_eddies = 5;
    double radius_min = 2.5;  // Gaussian e-folding radius, cells
    double radius_max = 6.0;
    double amplitude_min = 0.3;  // |peak|, metres
    double amplitude_max = 1.0;
    double noise_sigma = 0.05;
    double lat0 = -45.0;
    double lon0 = -30.0;
    double resolution = 0.25;
    /// Minimum center distance, in units of (radius_a + radius_b).
    double separation = 1.5;
    std::size_t max_attempts = 1000;
};

struct SynthEddy {
    double row = 0.0;
    double col = 0.0;
    double radius = 0.0;
    double amplitude = 0.0;  // > 0 anticyclonic, < 0 cyclonic

    Label label() const { return amplitude > 0.0 ? kAnticyclonic : kCyclonic; }
    /// Distance from the center where |bump| drops to half its peak.
    double label_radius() const;
};

struct SynthScene {
    SshGrid grid;
    SegmentationMask mask;
    std::vector<SynthEddy> eddies;
};

/// Sum of Gaussian bumps plus white noise. A cell is labeled with an eddy's class when that
/// eddy's own bump exceeds half its peak amplitude there. Throws std::runtime_error if the
/// eddies cannot be placed without overlap.
SynthScene synth_scene(const SynthConfig& config, Rng& rng);

/// Polygon approximating each eddy's half-peak circle, in grid lon/lat.
EddyContourSet scene_contours(const SynthScene& scene, std::size_t vertices = 24);

}  // namespace eddynet::data

#endif  // EDDYNET_SYNTH_HPP
