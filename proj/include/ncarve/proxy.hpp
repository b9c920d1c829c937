#pragma once

#include "ncarve/mesh.hpp"
#include "ncarve/rng.hpp"

namespace ncarve {

/// Unit icosphere centered at the origin. subdivisions = 0 gives the
/// icosahedron (12 vertices); each level quadruples the face count.
Mesh icosphere(int subdivisions);

enum class ProxyKind { Sphere, Capsule, PosedMultiCapsule };

struct CapsuleSegment {
    Vec3 a = Vec3::Zero();
    Vec3 b = Vec3::Zero();
    double radius = 0.0;
};

/// Parameters of the procedural body proxy. The multi-capsule kind carves a
/// closed genus-0 surface around a capsule skeleton by casting rays from the
/// skeleton centroid through an icosphere tessellation.
struct ProxyParams {
    ProxyKind kind = ProxyKind::Sphere;
    double radius = 1.0;                    // sphere / capsule
    Vec3 axis_a = Vec3(0, -0.5, 0);         // capsule endpoints
    Vec3 axis_b = Vec3(0, 0.5, 0);
    std::vector<CapsuleSegment> segments;   // multi-capsule skeleton
    int subdivisions = 4;
};

/// Closed, manifold, outward-oriented genus-0 mesh around the given shape.
/// Throws on non-positive dimensions or a disconnected skeleton.
Mesh make_body_proxy(const ProxyParams& params);

/// A small posed humanoid skeleton (torso, head, two arms, two legs).
/// arm_angle/leg_angle are in degrees away from the body axis.
std::vector<CapsuleSegment> humanoid_segments(double height = 1.7,
                                              double arm_angle = 60.0,
                                              double leg_angle = 12.0);

struct BumpParams {
    int count = 6;
    double min_amplitude = -0.12;
    double max_amplitude = 0.18;
    double min_width = 0.35;   // radians on the direction sphere
    double max_width = 0.8;
};

/// Seeded radial displacement ("clothing" bumps): each vertex moves along its
/// direction from the centroid by a sum of Gaussian lobes. Keeps topology.
Mesh add_surface_bumps(const Mesh& mesh, const BumpParams& params, Rng& rng);

}  // namespace ncarve
