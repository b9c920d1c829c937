#include "ncarve/remesh.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace ncarve {

namespace {

inline uint64_t ekey(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<uint64_t>(a) << 32) | static_cast<uint32_t>(b);
}

struct Dyn {
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    std::vector<char> face_alive;
    std::vector<std::set<int>> vert_faces;
    std::unordered_map<uint64_t, std::array<int, 2>> edge_faces;  // -1 = empty slot

    int add_face(int a, int b, int c) {
        const int fi = static_cast<int>(faces.size());
        faces.push_back({a, b, c});
        face_alive.push_back(1);
        for (int k = 0; k < 3; ++k) {
            vert_faces[faces[fi][k]].insert(fi);
            auto it = edge_faces.find(ekey(faces[fi][k], faces[fi][(k + 1) % 3]));
            if (it == edge_faces.end()) {
                edge_faces[ekey(faces[fi][k], faces[fi][(k + 1) % 3])] = {fi, -1};
            } else if (it->second[0] == -1) {
                it->second[0] = fi;
            } else if (it->second[1] == -1) {
                it->second[1] = fi;
            } else {
                throw std::logic_error("remesh: edge acquired a third face");
            }
        }
        return fi;
    }

    void remove_face(int fi) {
        const auto& f = faces[fi];
        face_alive[fi] = 0;
        for (int k = 0; k < 3; ++k) {
            vert_faces[f[k]].erase(fi);
            auto it = edge_faces.find(ekey(f[k], f[(k + 1) % 3]));
            if (it != edge_faces.end()) {
                if (it->second[0] == fi) it->second[0] = it->second[1];
                it->second[1] = -1;
                if (it->second[0] == -1) edge_faces.erase(it);
            }
        }
    }

    std::array<int, 2> faces_on_edge(int a, int b) const {
        auto it = edge_faces.find(ekey(a, b));
        if (it == edge_faces.end()) return {-1, -1};
        return it->second;
    }

    std::set<int> neighbors(int v) const {
        std::set<int> nb;
        for (int fi : vert_faces[v])
            for (int k = 0; k < 3; ++k)
                if (faces[fi][k] != v) nb.insert(faces[fi][k]);
        return nb;
    }

    int valence(int v) const { return static_cast<int>(neighbors(v).size()); }

    double edge_len(int a, int b) const { return (verts[a] - verts[b]).norm(); }

    std::vector<std::array<int, 2>> collect_edges() const {
        std::vector<std::array<int, 2>> out;
        out.reserve(edge_faces.size());
        for (size_t fi = 0; fi < faces.size(); ++fi) {
            if (!face_alive[fi]) continue;
            const auto& f = faces[fi];
            for (int k = 0; k < 3; ++k) {
                if (f[k] < f[(k + 1) % 3]) out.push_back({f[k], f[(k + 1) % 3]});
            }
        }
        // a face pair shares each interior edge once in each direction
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    Mesh compact() const {
        Mesh m;
        std::vector<int> remap(verts.size(), -1);
        for (size_t fi = 0; fi < faces.size(); ++fi) {
            if (!face_alive[fi]) continue;
            for (int k = 0; k < 3; ++k) {
                int& r = remap[faces[fi][k]];
                if (r == -1) {
                    r = m.vertex_count();
                    m.vertices.push_back(verts[faces[fi][k]]);
                }
            }
            m.faces.push_back({remap[faces[fi][0]], remap[faces[fi][1]], remap[faces[fi][2]]});
        }
        return m;
    }
};

Dyn make_dyn(const Mesh& mesh) {
    Dyn d;
    d.verts = mesh.vertices;
    d.vert_faces.resize(mesh.vertices.size());
    for (const auto& f : mesh.faces) d.add_face(f[0], f[1], f[2]);
    return d;
}

void split_long_edges(Dyn& d, double high) {
    const auto edges = d.collect_edges();
    for (const auto& e : edges) {
        if (d.edge_len(e[0], e[1]) <= high) continue;
        const auto fs = d.faces_on_edge(e[0], e[1]);
        if (fs[0] == -1) continue;
        const int m = static_cast<int>(d.verts.size());
        d.verts.push_back(0.5 * (d.verts[e[0]] + d.verts[e[1]]));
        d.vert_faces.emplace_back();
        for (int fi : {fs[0], fs[1]}) {
            if (fi == -1) continue;
            const auto f = d.faces[fi];
            int i = 0;
            while (!((f[i] == e[0] && f[(i + 1) % 3] == e[1]) ||
                     (f[i] == e[1] && f[(i + 1) % 3] == e[0])))
                ++i;
            d.remove_face(fi);
            d.add_face(f[i], m, f[(i + 2) % 3]);
            d.add_face(m, f[(i + 1) % 3], f[(i + 2) % 3]);
        }
    }
}

bool link_ok(const Dyn& d, int a, int b) {
    const auto fs = d.faces_on_edge(a, b);
    if (fs[0] == -1 || fs[1] == -1) return false;
    std::set<int> opposite;
    for (int fi : {fs[0], fs[1]}) {
        for (int k = 0; k < 3; ++k)
            if (d.faces[fi][k] != a && d.faces[fi][k] != b) opposite.insert(d.faces[fi][k]);
    }
    if (opposite.size() != 2) return false;
    std::set<int> na = d.neighbors(a), nb = d.neighbors(b);
    std::vector<int> common;
    std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(),
                          std::back_inserter(common));
    return common.size() == 2 && opposite.count(common[0]) && opposite.count(common[1]);
}

bool move_keeps_faces(const Dyn& d, int moved_a, int moved_b, const Vec3& target) {
    for (int v : {moved_a, moved_b}) {
        if (v < 0) continue;
        for (int fi : d.vert_faces[v]) {
            const auto& f = d.faces[fi];
            const bool dies = moved_b >= 0 && (f[0] == moved_a || f[1] == moved_a || f[2] == moved_a) &&
                              (f[0] == moved_b || f[1] == moved_b || f[2] == moved_b);
            if (dies) continue;
            Vec3 p[3], q[3];
            for (int k = 0; k < 3; ++k) {
                p[k] = d.verts[f[k]];
                q[k] = (f[k] == moved_a || f[k] == moved_b) ? target : d.verts[f[k]];
            }
            const Vec3 n_old = (p[1] - p[0]).cross(p[2] - p[0]);
            const Vec3 n_new = (q[1] - q[0]).cross(q[2] - q[0]);
            if (0.5 * n_new.norm() < 1e-12) return false;
            if (n_old.dot(n_new) <= 0.0) return false;
        }
    }
    return true;
}

void collapse_short_edges(Dyn& d, double low, double high) {
    const auto edges = d.collect_edges();
    std::vector<char> dead(d.verts.size(), 0);
    for (const auto& e : edges) {
        const int a = e[0], b = e[1];
        if (dead[a] || dead[b]) continue;
        if (d.vert_faces[a].empty() || d.vert_faces[b].empty()) continue;
        if (d.faces_on_edge(a, b)[0] == -1) continue;  // edge vanished
        if (d.edge_len(a, b) >= low) continue;
        if (!link_ok(d, a, b)) continue;
        const Vec3 mid = 0.5 * (d.verts[a] + d.verts[b]);
        // collapsing must not create over-long edges
        bool too_long = false;
        for (int nb : d.neighbors(b)) {
            if (nb != a && (d.verts[nb] - mid).norm() > high) too_long = true;
        }
        for (int nb : d.neighbors(a)) {
            if (nb != b && (d.verts[nb] - mid).norm() > high) too_long = true;
        }
        if (too_long) continue;
        if (!move_keeps_faces(d, a, b, mid)) continue;

        d.verts[a] = mid;
        // remove every face at b first so no edge slot is transiently full
        std::vector<int> b_faces(d.vert_faces[b].begin(), d.vert_faces[b].end());
        std::vector<std::array<int, 3>> rewritten;
        for (int fi : b_faces) {
            const auto f = d.faces[fi];
            const bool has_a = f[0] == a || f[1] == a || f[2] == a;
            d.remove_face(fi);
            if (!has_a) {
                std::array<int, 3> nf = f;
                for (int k = 0; k < 3; ++k)
                    if (nf[k] == b) nf[k] = a;
                rewritten.push_back(nf);
            }
        }
        for (const auto& nf : rewritten) d.add_face(nf[0], nf[1], nf[2]);
        dead[b] = 1;
    }
}

void flip_for_valence(Dyn& d) {
    const auto edges = d.collect_edges();
    for (const auto& e : edges) {
        const int a = e[0], b = e[1];
        const auto fs = d.faces_on_edge(a, b);
        if (fs[0] == -1 || fs[1] == -1) continue;
        int c = -1, dd = -1;
        for (int k = 0; k < 3; ++k) {
            if (d.faces[fs[0]][k] != a && d.faces[fs[0]][k] != b) c = d.faces[fs[0]][k];
            if (d.faces[fs[1]][k] != a && d.faces[fs[1]][k] != b) dd = d.faces[fs[1]][k];
        }
        if (c == -1 || dd == -1 || c == dd) continue;
        if (d.faces_on_edge(c, dd)[0] != -1) continue;  // flipped edge exists
        auto dev = [&](int v, int delta) {
            const int val = d.valence(v) + delta;
            return (val - 6) * (val - 6);
        };
        const int before = dev(a, 0) + dev(b, 0) + dev(c, 0) + dev(dd, 0);
        const int after = dev(a, -1) + dev(b, -1) + dev(c, 1) + dev(dd, 1);
        if (after >= before) continue;
        if (d.valence(a) <= 3 || d.valence(b) <= 3) continue;

        // orient: find the face holding directed edge a->b
        int f_ab = -1, f_ba = -1;
        for (int fi : {fs[0], fs[1]}) {
            const auto& f = d.faces[fi];
            for (int k = 0; k < 3; ++k) {
                if (f[k] == a && f[(k + 1) % 3] == b) f_ab = fi;
                if (f[k] == b && f[(k + 1) % 3] == a) f_ba = fi;
            }
        }
        if (f_ab == -1 || f_ba == -1) continue;
        int c_ab = -1, d_ba = -1;
        for (int k = 0; k < 3; ++k) {
            if (d.faces[f_ab][k] != a && d.faces[f_ab][k] != b) c_ab = d.faces[f_ab][k];
            if (d.faces[f_ba][k] != a && d.faces[f_ba][k] != b) d_ba = d.faces[f_ba][k];
        }
        // new faces (a, d, c) and (d, b, c); reject degenerate or folded results
        const Vec3 n1 = (d.verts[d_ba] - d.verts[a]).cross(d.verts[c_ab] - d.verts[a]);
        const Vec3 n2 = (d.verts[b] - d.verts[d_ba]).cross(d.verts[c_ab] - d.verts[d_ba]);
        const Vec3 o1 = (d.verts[b] - d.verts[a]).cross(d.verts[c_ab] - d.verts[a]);
        const Vec3 o2 = (d.verts[a] - d.verts[b]).cross(d.verts[d_ba] - d.verts[b]);
        if (0.5 * n1.norm() < 1e-12 || 0.5 * n2.norm() < 1e-12) continue;
        const Vec3 avg_old = o1.normalized() + o2.normalized();
        if (n1.dot(avg_old) <= 0.0 || n2.dot(avg_old) <= 0.0) continue;

        d.remove_face(f_ab);
        d.remove_face(f_ba);
        d.add_face(a, d_ba, c_ab);
        d.add_face(d_ba, b, c_ab);
    }
}

void tangential_relax(Dyn& d, double lambda) {
    // vertex normals over live faces
    std::vector<Vec3> vnorm(d.verts.size(), Vec3::Zero());
    for (size_t fi = 0; fi < d.faces.size(); ++fi) {
        if (!d.face_alive[fi]) continue;
        const auto& f = d.faces[fi];
        const Vec3 c = (d.verts[f[1]] - d.verts[f[0]]).cross(d.verts[f[2]] - d.verts[f[0]]);
        for (int k = 0; k < 3; ++k) vnorm[f[k]] += c;
    }
    std::vector<Vec3> updated = d.verts;
    for (size_t vi = 0; vi < d.verts.size(); ++vi) {
        if (d.vert_faces[vi].empty()) continue;
        const auto nb = d.neighbors(static_cast<int>(vi));
        if (nb.empty()) continue;
        Vec3 centroid = Vec3::Zero();
        for (int j : nb) centroid += d.verts[j];
        centroid /= static_cast<double>(nb.size());
        Vec3 n = vnorm[vi];
        const double len = n.norm();
        if (len < 1e-20) continue;
        n /= len;
        const Vec3 move = centroid - d.verts[vi];
        const Vec3 tangential = move - n * n.dot(move);
        const Vec3 target = d.verts[vi] + lambda * tangential;
        if (move_keeps_faces(d, static_cast<int>(vi), -1, target)) updated[vi] = target;
    }
    d.verts = std::move(updated);
}

}  // namespace

Mesh remesh(const Mesh& mesh, double target_edge_length, int iterations) {
    if (target_edge_length <= 0.0) {
        throw std::invalid_argument("remesh: target edge length must be positive");
    }
    const auto report = validate(mesh);
    if (!report.is_manifold) {
        throw std::invalid_argument("remesh: input mesh is not manifold");
    }
    Dyn d = make_dyn(mesh);
    const double high = 4.0 / 3.0 * target_edge_length;
    const double low = 4.0 / 5.0 * target_edge_length;
    for (int it = 0; it < iterations; ++it) {
        split_long_edges(d, high);
        collapse_short_edges(d, low, high);
        flip_for_valence(d);
        tangential_relax(d, 0.5);
    }
    return d.compact();
}

}  // namespace ncarve
