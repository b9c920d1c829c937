#pragma once

#include "ncarve/camera.hpp"
#include "ncarve/image.hpp"
#include "ncarve/mesh.hpp"
#include "ncarve/rng.hpp"

#include <optional>
#include <string>

namespace ncarve {

struct LossWeights {
    double normal = 1.0;
    double mask = 2.0;
    double sides = 0.1;
    double laplacian = 10.0;
    double normal_reg = 0.1;

    void check() const;  // all weights must be >= 0
};

/// Knobs of the coarse-to-fine carve loop. The defaults reproduce the
/// reference schedule: 2000 iterations, remesh every 500, 25% step decay and
/// 10% side-weight decay per remesh, 3000 starting vertices.
struct CarveConfig {
    int total_iterations = 2000;
    int remesh_interval = 500;
    double step_decay_per_remesh = 0.25;
    double sides_decay_per_remesh = 0.10;
    int initial_vertices = 3000;
    double initial_step_size = 0.0;  // 0 = auto: 1e-3 * bbox diagonal
    double alpha_threshold = 0.5;
    double softness = 1.5;           // rasterizer silhouette blur, pixels
    double remesh_edge_scale = 0.85; // target edge = current mean * this

    double weight_normal = 1.0;
    double weight_mask = 2.0;
    double weight_sides = 0.1;
    // geometric regularizers ramp linearly across remesh stages
    double laplacian_start = 10.0;
    double laplacian_end = 100.0;
    double normal_reg_start = 0.1;
    double normal_reg_end = 1.0;

    std::string dump_dir;  // when set, the mesh is written at every remesh

    void check() const;
};

struct TargetView {
    Camera camera;
    NormalMap map;
};

/// Optimization targets: any number of views (front/back in the first stage,
/// a full ring in the second) plus the proxy's binarized side-view masks that
/// feed the anti-shrink side loss.
struct CarveTargets {
    std::vector<TargetView> views;
    std::vector<TargetView> side_masks;

    void check() const;  // nonempty, consistent resolutions
};

/// Loss over rendered buffers; d_buffers matches the rendered map layout.
struct BufferLoss {
    double value = 0.0;
    Image d_buffers;
};

/// Mean L1 between decoded normals over pixels where both alphas exceed tau.
/// Zero when the intersection is empty. The pixel domain is treated as
/// constant for the gradient.
BufferLoss normal_loss(const NormalMap& rendered, const NormalMap& target, double tau);

/// Mean squared alpha difference over all pixels.
BufferLoss mask_loss(const NormalMap& rendered, const NormalMap& target);

/// Sum of (1 - rendered alpha)^2 over pixels where the proxy mask is set.
/// Expansion beyond the mask is unpenalized.
BufferLoss side_loss(const NormalMap& rendered, const NormalMap& proxy_mask);

struct ScheduleState {
    LossWeights weights;
    double step_size = 0.0;
    int remesh_count = 0;
};

/// Weights and step size at the given iteration: step and side weight decay
/// per completed remesh, regularizers ramp linearly across remesh stages.
ScheduleState schedule(const CarveConfig& config, double initial_step, int iteration);

struct TotalLoss {
    double value = 0.0;
    std::vector<Vec3> d_vertices;
};

/// Weighted sum of the five loss terms over every target view, with the
/// assembled vertex gradient.
TotalLoss total_loss(const Mesh& mesh, const CarveTargets& targets, const LossWeights& weights,
                     double softness = 1.5, double tau = 0.5);

struct CarveResult {
    Mesh mesh;
    std::vector<double> loss_history;  // per iteration
};

/// Deform the initial mesh to match the targets: adaptive gradient steps with
/// one randomly chosen view per iteration, remeshing at each interval.
/// second_stage drops the side loss (the ring constrains the sides instead).
/// Throws on divergence, naming the iteration.
CarveResult carve(const Mesh& initial, const CarveTargets& targets, const CarveConfig& config,
                  bool second_stage, Rng& rng);

}  // namespace ncarve
