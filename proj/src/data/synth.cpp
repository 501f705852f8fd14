#include "eddynet/synth.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace eddynet::data {

double SynthEddy::label_radius() const { return radius * std::sqrt(2.0 * std::numbers::ln2); }

SynthScene synth_scene(const SynthConfig& cfg, Rng& rng) {
    if (cfg.grid_size == 0) throw std::invalid_argument("synth_scene: grid_size must be positive");
    if (!(cfg.radius_min > 0.0 && cfg.radius_max >= cfg.radius_min))
        throw std::invalid_argument("synth_scene: invalid radius range");
    if (!(cfg.amplitude_min > 0.0 && cfg.amplitude_max >= cfg.amplitude_min))
        throw std::invalid_argument("synth_scene: invalid amplitude range");
    if (!(cfg.noise_sigma >= 0.0)) throw std::invalid_argument("synth_scene: noise_sigma must be >= 0");

    const std::size_t n = cfg.grid_size;
    std::uniform_real_distribution<double> pos(0.0, static_cast<double>(n));
    std::uniform_real_distribution<double> rad(cfg.radius_min, cfg.radius_max);
    std::uniform_real_distribution<double> amp(cfg.amplitude_min, cfg.amplitude_max);
    std::bernoulli_distribution positive(0.5);

    SynthScene scene;
    std::size_t attempts = 0;
    while (scene.eddies.size() < cfg.n_eddies) {
        if (++attempts > cfg.max_attempts) {
            throw std::runtime_error("synth_scene: could not place " + std::to_string(cfg.n_eddies) +
                                     " eddies without overlap in " + std::to_string(cfg.max_attempts) + " attempts");
        }
        SynthEddy e{pos(rng), pos(rng), rad(rng), amp(rng)};
        if (!positive(rng)) e.amplitude = -e.amplitude;
        bool clear = true;
        for (const auto& o : scene.eddies) {
            if (std::hypot(e.row - o.row, e.col - o.col) < cfg.separation * (e.radius + o.radius)) {
                clear = false;
                break;
            }
        }
        if (clear) scene.eddies.push_back(e);
    }

    scene.grid.lat0 = cfg.lat0;
    scene.grid.lon0 = cfg.lon0;
    scene.grid.resolution = cfg.resolution;
    scene.grid.values = Field2D<float>(n, n);
    scene.mask = SegmentationMask(n, n);
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 1.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            double h = 0.0;
            for (const auto& e : scene.eddies) {
                const double d2 = (r - e.row) * (r - e.row) + (c - e.col) * (c - e.col);
                const double b = std::exp(-d2 / (2.0 * e.radius * e.radius));
                h += e.amplitude * b;
                if (b > 0.5) scene.mask.at(r, c) = e.label();
            }
            if (cfg.noise_sigma > 0.0) h += noise(rng);
            scene.grid.values.at(r, c) = static_cast<float>(h);
        }
    }
    return scene;
}

EddyContourSet scene_contours(const SynthScene& scene, std::size_t vertices) {
    if (vertices < 3) throw std::invalid_argument("scene_contours: need at least 3 vertices");
    EddyContourSet out;
    for (const auto& e : scene.eddies) {
        EddyContour c;
        c.label = e.label();
        const double r = e.label_radius();
        for (std::size_t k = 0; k < vertices; ++k) {
            const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(vertices);
            const double row = e.row + r * std::sin(t);
            const double col = e.col + r * std::cos(t);
            c.vertices.emplace_back(scene.grid.lon0 + col * scene.grid.resolution,
                                    scene.grid.lat0 + row * scene.grid.resolution);
        }
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace eddynet::data
