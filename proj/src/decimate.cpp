#include "ncarve/decimate.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <queue>
#include <set>
#include <stdexcept>
#include <vector>

namespace ncarve {

namespace {

using Mat4 = Eigen::Matrix4d;
using Vec4 = Eigen::Vector4d;

struct HeapEntry {
    double cost;
    int a, b;
    uint64_t stamp;  // sum of the two vertex versions when pushed
    bool operator>(const HeapEntry& o) const { return cost > o.cost; }
};

struct Working {
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    std::vector<char> vert_alive;
    std::vector<char> face_alive;
    std::vector<std::set<int>> vert_faces;
    std::vector<uint64_t> version;
    std::vector<Mat4> quadric;
    int alive_vertices = 0;

    std::set<int> neighbors(int v) const {
        std::set<int> nb;
        for (int fi : vert_faces[v]) {
            for (int k = 0; k < 3; ++k)
                if (faces[fi][k] != v) nb.insert(faces[fi][k]);
        }
        return nb;
    }
};

Mat4 plane_quadric(const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 cr = (b - a).cross(c - a);
    const double area2 = cr.norm();
    if (area2 < 2.0 * kDegenerateFaceArea) return Mat4::Zero();
    const Vec3 n = cr / area2;
    const double d = -n.dot(a);
    Vec4 p(n.x(), n.y(), n.z(), d);
    return (0.5 * area2) * (p * p.transpose());
}

double quadric_cost(const Mat4& q, const Vec3& v) {
    Vec4 h(v.x(), v.y(), v.z(), 1.0);
    return h.dot(q * h);
}

Vec3 optimal_position(const Mat4& q, const Vec3& va, const Vec3& vb) {
    Eigen::Matrix3d a = q.topLeftCorner<3, 3>();
    Vec3 rhs = -q.topRightCorner<3, 1>();
    Eigen::FullPivLU<Eigen::Matrix3d> lu(a);
    if (lu.isInvertible() && lu.rcond() > 1e-9) {
        const Vec3 x = lu.solve(rhs);
        // reject wild solutions far from the edge
        if ((x - 0.5 * (va + vb)).norm() < 4.0 * (va - vb).norm() + 1e-12) return x;
    }
    const Vec3 mid = 0.5 * (va + vb);
    Vec3 best = mid;
    double best_cost = quadric_cost(q, mid);
    for (const Vec3& cand : {va, vb}) {
        const double c = quadric_cost(q, cand);
        if (c < best_cost) {
            best_cost = c;
            best = cand;
        }
    }
    return best;
}

// collapse is topologically safe iff the shared neighborhood of a and b is
// exactly the opposite vertices of the faces on edge (a, b)
bool link_condition(const Working& w, int a, int b) {
    std::set<int> na = w.neighbors(a);
    std::set<int> nb = w.neighbors(b);
    std::vector<int> common;
    std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(),
                          std::back_inserter(common));
    std::set<int> opposite;
    for (int fi : w.vert_faces[a]) {
        const auto& f = w.faces[fi];
        bool has_b = f[0] == b || f[1] == b || f[2] == b;
        if (!has_b) continue;
        for (int k = 0; k < 3; ++k)
            if (f[k] != a && f[k] != b) opposite.insert(f[k]);
    }
    if (opposite.size() != 2) return false;  // boundary or non-manifold edge
    return common.size() == opposite.size() &&
           std::equal(common.begin(), common.end(), opposite.begin());
}

bool collapse_keeps_geometry(const Working& w, int a, int b, const Vec3& target) {
    for (int v : {a, b}) {
        for (int fi : w.vert_faces[v]) {
            const auto& f = w.faces[fi];
            const bool dies = (f[0] == a || f[1] == a || f[2] == a) &&
                              (f[0] == b || f[1] == b || f[2] == b);
            if (dies) continue;
            Vec3 p[3], q[3];
            for (int k = 0; k < 3; ++k) {
                p[k] = w.verts[f[k]];
                q[k] = (f[k] == a || f[k] == b) ? target : w.verts[f[k]];
            }
            const Vec3 n_old = (p[1] - p[0]).cross(p[2] - p[0]);
            const Vec3 n_new = (q[1] - q[0]).cross(q[2] - q[0]);
            if (0.5 * n_new.norm() < 1e-10) return false;
            if (n_old.dot(n_new) <= 0.0) return false;
        }
    }
    return true;
}

}  // namespace

Mesh decimate(const Mesh& mesh, int target_vertices) {
    if (target_vertices < 4) {
        throw std::invalid_argument("decimate: target below minimum representable mesh");
    }
    mesh.check_indices();
    if (mesh.vertex_count() <= target_vertices) return mesh;

    Working w;
    w.verts = mesh.vertices;
    w.faces = mesh.faces;
    w.vert_alive.assign(w.verts.size(), 1);
    w.face_alive.assign(w.faces.size(), 1);
    w.vert_faces.resize(w.verts.size());
    w.version.assign(w.verts.size(), 0);
    w.quadric.assign(w.verts.size(), Mat4::Zero());
    w.alive_vertices = mesh.vertex_count();

    for (int fi = 0; fi < mesh.face_count(); ++fi) {
        const auto& f = w.faces[fi];
        const Mat4 q = plane_quadric(w.verts[f[0]], w.verts[f[1]], w.verts[f[2]]);
        for (int k = 0; k < 3; ++k) {
            w.vert_faces[f[k]].insert(fi);
            w.quadric[f[k]] += q;
        }
    }

    std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>> heap;
    auto push_edge = [&](int a, int b) {
        if (a > b) std::swap(a, b);
        const Mat4 q = w.quadric[a] + w.quadric[b];
        const Vec3 pos = optimal_position(q, w.verts[a], w.verts[b]);
        heap.push({quadric_cost(q, pos), a, b, w.version[a] + w.version[b]});
    };
    for (size_t vi = 0; vi < w.verts.size(); ++vi) {
        for (int nb : w.neighbors(static_cast<int>(vi))) {
            if (static_cast<int>(vi) < nb) push_edge(static_cast<int>(vi), nb);
        }
    }

    while (w.alive_vertices > target_vertices && !heap.empty()) {
        const HeapEntry e = heap.top();
        heap.pop();
        if (!w.vert_alive[e.a] || !w.vert_alive[e.b]) continue;
        if (e.stamp != w.version[e.a] + w.version[e.b]) continue;
        if (!link_condition(w, e.a, e.b)) continue;

        const Mat4 q = w.quadric[e.a] + w.quadric[e.b];
        const Vec3 target = optimal_position(q, w.verts[e.a], w.verts[e.b]);
        if (!collapse_keeps_geometry(w, e.a, e.b, target)) continue;

        // collapse b into a
        const int a = e.a, b = e.b;
        w.verts[a] = target;
        w.quadric[a] = q;
        std::vector<int> b_faces(w.vert_faces[b].begin(), w.vert_faces[b].end());
        for (int fi : b_faces) {
            auto& f = w.faces[fi];
            const bool has_a = f[0] == a || f[1] == a || f[2] == a;
            if (has_a) {
                // face spans the collapsed edge; remove it
                w.face_alive[fi] = 0;
                for (int k = 0; k < 3; ++k) w.vert_faces[f[k]].erase(fi);
            } else {
                for (int k = 0; k < 3; ++k)
                    if (f[k] == b) f[k] = a;
                w.vert_faces[b].erase(fi);
                w.vert_faces[a].insert(fi);
            }
        }
        w.vert_alive[b] = 0;
        w.alive_vertices--;
        w.version[a]++;
        w.version[b]++;
        for (int nb : w.neighbors(a)) {
            w.version[nb]++;
        }
        for (int nb : w.neighbors(a)) push_edge(a, nb);
        // second-ring edges whose stamps changed
        for (int nb : w.neighbors(a)) {
            for (int nb2 : w.neighbors(nb)) {
                if (nb2 != a && nb < nb2) push_edge(nb, nb2);
            }
        }
    }

    Mesh out;
    std::vector<int> remap(w.verts.size(), -1);
    for (size_t vi = 0; vi < w.verts.size(); ++vi) {
        if (w.vert_alive[vi] && !w.vert_faces[vi].empty()) {
            remap[vi] = out.vertex_count();
            out.vertices.push_back(w.verts[vi]);
        }
    }
    for (size_t fi = 0; fi < w.faces.size(); ++fi) {
        if (!w.face_alive[fi]) continue;
        const auto& f = w.faces[fi];
        out.faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
    }
    return out;
}

}  // namespace ncarve
