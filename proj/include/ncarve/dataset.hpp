#pragma once

#include "ncarve/camera.hpp"
#include "ncarve/denoiser.hpp"
#include "ncarve/proxy.hpp"
#include "ncarve/rng.hpp"

#include <string>
#include <vector>

namespace ncarve {

/// Ranges the synthetic data generator samples proxy shapes from. Shapes
/// alternate between spheres and tilted capsules so conditions are easy to
/// tell apart; the "clothing" comes from seeded radial bumps.
struct ProxyRanges {
    double min_radius = 0.45;
    double max_radius = 0.8;
    double min_half_length = 0.25;
    double max_half_length = 0.55;
    double max_tilt_deg = 40.0;
    int subdivisions = 3;
    double camera_scale = 0.6;
    BumpParams bumps;
};

/// n (condition, dual map) pairs at the given resolution (<= 64): the
/// condition is the front render of the bare proxy, the front/back targets
/// are renders of the bump-displaced proxy.
std::vector<TrainExample> synth_dataset(int n, int resolution, const ProxyRanges& ranges,
                                        Rng& rng);

/// Cache: one .nmap triple per example plus an index file.
void save_dataset(const std::vector<TrainExample>& dataset, const std::string& dir);
std::vector<TrainExample> load_dataset(const std::string& dir);

}  // namespace ncarve
