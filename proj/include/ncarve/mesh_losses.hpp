#pragma once

#include "ncarve/mesh.hpp"

namespace ncarve {

struct MeshLoss {
    double value = 0.0;
    std::vector<Vec3> grad;  // d value / d vertex position
};

/// Mean squared norm of the differential coordinates (uniform Laplacian).
MeshLoss laplacian_loss(const Mesh& mesh, const Adjacency& adj);

/// Mean of (1 - n_i . n_j)^2 over face pairs sharing an edge. Pairs touching
/// a degenerate face are skipped. Throws when no valid pair exists.
MeshLoss normal_consistency_loss(const Mesh& mesh, const Adjacency& adj);

}  // namespace ncarve
