#pragma once

#include "ncarve/mesh.hpp"

namespace ncarve {

/// Incremental isotropic remeshing: per iteration, split edges longer than
/// 4/3 of the target, collapse edges shorter than 4/5, flip edges toward
/// valence 6, then relax vertices tangentially. Throws on non-manifold input.
Mesh remesh(const Mesh& mesh, double target_edge_length, int iterations = 5);

}  // namespace ncarve
