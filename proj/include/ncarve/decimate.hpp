#pragma once

#include "ncarve/mesh.hpp"

namespace ncarve {

/// Quadric-error edge-collapse simplification. Collapses are rejected when
/// they would break the link condition, flip a face normal, or create a
/// degenerate triangle, so manifoldness and genus survive. Returns the input
/// unchanged when it already has <= target_vertices vertices.
Mesh decimate(const Mesh& mesh, int target_vertices);

}  // namespace ncarve
