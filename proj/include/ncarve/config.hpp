#pragma once

#include "ncarve/carve.hpp"
#include "ncarve/denoiser.hpp"
#include "ncarve/diffusion.hpp"

#include <cstdint>
#include <string>

namespace ncarve {

/// Everything a pipeline run needs, loadable from a flat `key = value` file
/// (see README for the schema). The seed is mandatory and must come from the
/// file or the command line.
struct PipelineConfig {
    uint64_t seed = 0;
    bool seed_set = false;

    int resolution = 32;
    std::string out_dir = "out";
    std::string dataset_dir;
    std::string checkpoint_path;
    int dataset_size = 8;

    int timesteps = 100;
    double beta_start = 0.0;  // 0 = scaled default
    double beta_end = 0.0;

    GuidanceParams guidance{2.0, 0.1};
    ResampleParams resample_params{0.02, 2};

    CarveConfig carve;
    int refine_iterations = 0;  // 0 = same as carve.total_iterations

    int n_views = 36;
    double yaw_step_deg = 10.0;

    double camera_scale = 0.0;  // 0 = auto-fit to the proxy
    double camera_pitch_deg = 0.0;

    std::string proxy_kind = "humanoid";  // sphere | capsule | humanoid
    double proxy_radius = 0.6;
    double proxy_height = 1.7;
    double proxy_arm_angle_deg = 60.0;
    double proxy_leg_angle_deg = 12.0;
    int proxy_subdivisions = 5;

    TrainConfig train;
    DenoiserArch arch;

    VarianceSchedule make_schedule() const;
    void check() const;
};

/// Parse a config file; unknown keys are an error. Later assignments win.
PipelineConfig load_config(const std::string& path);

/// Apply one `key = value` assignment (shared by file parser and CLI).
void apply_config_entry(PipelineConfig& config, const std::string& key,
                        const std::string& value);

}  // namespace ncarve
