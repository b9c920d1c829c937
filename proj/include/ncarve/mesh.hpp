#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <string>
#include <vector>

namespace ncarve {

using Vec3 = Eigen::Vector3d;

/// Faces below this area are treated as degenerate: their normal is set to
/// zero and they are excluded from normal-dependent losses.
constexpr double kDegenerateFaceArea = 1e-12;

/// Indexed triangle mesh. Faces are counter-clockwise when seen from
/// outside, so the cross product of the edge vectors points outward.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }

    /// Throws if a face indexes past the vertex array or repeats a vertex.
    void check_indices() const;

    Vec3 bbox_min() const;
    Vec3 bbox_max() const;
    double bbox_diagonal() const;
};

/// Connectivity derived from a mesh: vertex one-rings, edge -> incident
/// faces, and the set of face pairs sharing an edge (used by the normal
/// consistency regularizer).
struct Adjacency {
    std::vector<std::vector<int>> vertex_neighbors;
    // unique undirected edges as (min, max) vertex pairs
    std::vector<std::array<int, 2>> edges;
    // per edge: incident faces, -1 when absent (boundary)
    std::vector<std::array<int, 2>> edge_faces;
    // face pairs sharing an edge
    std::vector<std::array<int, 2>> face_pairs;

    int edge_count() const { return static_cast<int>(edges.size()); }
};

Adjacency build_adjacency(const Mesh& mesh);

struct MeshValidityReport {
    bool is_manifold = false;
    bool oriented_consistently = false;
    int boundary_edge_count = 0;
    int degenerate_face_count = 0;
    int euler_characteristic = 0;
    int vertex_count = 0;
    int edge_count = 0;
    int face_count = 0;

    bool closed_genus0() const {
        return is_manifold && boundary_edge_count == 0 && euler_characteristic == 2;
    }
    std::string to_string() const;
};

/// Exhaustive edge/face scan. Reports, never throws.
MeshValidityReport validate(const Mesh& mesh);

/// Unit face normals (CCW orientation). Degenerate faces get a zero vector.
std::vector<Vec3> face_normals(const Mesh& mesh);

/// Area-weighted average of incident face normals, normalized per vertex.
std::vector<Vec3> vertex_normals(const Mesh& mesh);

/// Differential coordinates of the uniform graph Laplacian:
/// delta_i = v_i - mean of neighbor positions. Throws on isolated vertices.
std::vector<Vec3> differential_coords(const Mesh& mesh, const Adjacency& adj);

double mean_edge_length(const Mesh& mesh);

/// Plain OBJ: v/f records, CCW winding, 1-based indices, no materials.
void save_obj(const Mesh& mesh, const std::string& path);
Mesh load_obj(const std::string& path);

}  // namespace ncarve
