#pragma once

#include "ncarve/camera.hpp"
#include "ncarve/image.hpp"
#include "ncarve/mesh.hpp"

namespace ncarve {

/// Gradients of a scalar loss with respect to mesh vertex positions,
/// accumulated through the rasterizer.
struct RasterGradients {
    std::vector<Vec3> d_vertices;
};

/// Render camera-space normals + coverage under the weak-perspective camera.
/// Covered pixels hold the barycentrically interpolated, renormalized vertex
/// normal; background pixels hold rgb (0.5, 0.5, 0.5) and alpha 0.
///
/// softness = 0 gives hard 0/1 coverage. softness > 0 feathers the alpha
/// channel across the silhouette: alpha is a sigmoid of the signed pixel
/// distance to the visible outline (width = softness pixels), which is what
/// makes the mask differentiable with respect to the vertices.
NormalMap rasterize(const Mesh& mesh, const Camera& camera, double softness);

/// Chain-rule gradients for the matching forward call. upstream is the loss
/// gradient with respect to the rendered buffers (4 channels: rgb + alpha).
/// The interior normal path is differentiated exactly; the coverage path
/// flows only through the soft silhouette band (empty when softness = 0).
RasterGradients rasterize_backward(const Mesh& mesh, const Camera& camera, double softness,
                                   const Image& upstream);

}  // namespace ncarve
