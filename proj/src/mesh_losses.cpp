#include "ncarve/mesh_losses.hpp"

#include <stdexcept>

namespace ncarve {

MeshLoss laplacian_loss(const Mesh& mesh, const Adjacency& adj) {
    const auto delta = differential_coords(mesh, adj);
    const double n = static_cast<double>(mesh.vertices.size());

    MeshLoss out;
    out.grad.assign(mesh.vertices.size(), Vec3::Zero());
    for (size_t i = 0; i < delta.size(); ++i) {
        out.value += delta[i].squaredNorm();
        const Vec3 g = (2.0 / n) * delta[i];
        out.grad[i] += g;
        const double inv_deg = 1.0 / static_cast<double>(adj.vertex_neighbors[i].size());
        for (int j : adj.vertex_neighbors[i]) out.grad[j] -= inv_deg * g;
    }
    out.value /= n;
    return out;
}

MeshLoss normal_consistency_loss(const Mesh& mesh, const Adjacency& adj) {
    if (adj.face_pairs.empty()) {
        throw std::invalid_argument("normal_consistency_loss: mesh has no interior edges");
    }
    const auto normals = face_normals(mesh);

    // count valid pairs first (degenerate faces carry a zero normal)
    std::vector<char> degenerate(mesh.faces.size(), 0);
    for (size_t fi = 0; fi < mesh.faces.size(); ++fi)
        degenerate[fi] = normals[fi].isZero() ? 1 : 0;
    long valid = 0;
    for (const auto& p : adj.face_pairs)
        if (!degenerate[p[0]] && !degenerate[p[1]]) ++valid;
    if (valid == 0) {
        throw std::invalid_argument("normal_consistency_loss: all shared-edge pairs degenerate");
    }
    const double inv_count = 1.0 / static_cast<double>(valid);

    MeshLoss out;
    out.grad.assign(mesh.vertices.size(), Vec3::Zero());
    std::vector<Vec3> grad_n(mesh.faces.size(), Vec3::Zero());

    for (const auto& p : adj.face_pairs) {
        if (degenerate[p[0]] || degenerate[p[1]]) continue;
        const Vec3& ni = normals[p[0]];
        const Vec3& nj = normals[p[1]];
        const double d = 1.0 - ni.dot(nj);
        out.value += d * d;
        grad_n[p[0]] += (-2.0 * d * inv_count) * nj;
        grad_n[p[1]] += (-2.0 * d * inv_count) * ni;
    }
    out.value *= inv_count;

    // chain through n = c / |c|, c = (v1 - v0) x (v2 - v0)
    for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
        if (degenerate[fi] || grad_n[fi].isZero()) continue;
        const auto& f = mesh.faces[fi];
        const Vec3 e1 = mesh.vertices[f[1]] - mesh.vertices[f[0]];
        const Vec3 e2 = mesh.vertices[f[2]] - mesh.vertices[f[0]];
        const Vec3 c = e1.cross(e2);
        const double len = c.norm();
        const Vec3 n = c / len;
        const Vec3 gc = (grad_n[fi] - n * n.dot(grad_n[fi])) / len;
        out.grad[f[0]] += (e1 - e2).cross(gc);
        out.grad[f[1]] += e2.cross(gc);
        out.grad[f[2]] += gc.cross(e1);
    }
    return out;
}

}  // namespace ncarve
