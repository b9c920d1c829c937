#pragma once

#include "ncarve/camera.hpp"
#include "ncarve/image.hpp"
#include "ncarve/mesh.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ncarve {

struct ViewEval {
    double yaw_deg = 0.0;
    double iou = 0.0;
    // absent when the thresholded masks do not intersect
    std::optional<double> mean_angular_error_deg;
};

struct EvalReport {
    std::vector<ViewEval> views;
    double mean_iou = 0.0;
    std::optional<double> mean_angular_error_deg;

    std::string to_string() const;
};

/// Silhouette IoU and mean normal angular error between two renders of the
/// same view; masks thresholded at tau, angles measured over the mask
/// intersection.
ViewEval evaluate_view(const NormalMap& a, const NormalMap& b, double tau);

EvalReport evaluate_renders(const std::vector<NormalMap>& a, const std::vector<NormalMap>& b,
                            const std::vector<Camera>& ring, double tau);

/// Renders both meshes over the ring and compares per view.
EvalReport evaluate_meshes(const Mesh& mesh, const Mesh& reference,
                           const std::vector<Camera>& ring, double tau);

/// Line-delimited key-value records plus a summary block.
void save_report(const EvalReport& report, const std::string& path);
EvalReport load_report(const std::string& path);

}  // namespace ncarve
