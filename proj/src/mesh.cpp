#include "ncarve/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace ncarve {

void Mesh::check_indices() const {
    const int nv = vertex_count();
    for (size_t fi = 0; fi < faces.size(); ++fi) {
        const auto& f = faces[fi];
        for (int k = 0; k < 3; ++k) {
            if (f[k] < 0 || f[k] >= nv) {
                throw std::invalid_argument("mesh: face " + std::to_string(fi) +
                                            " indexes past vertex array");
            }
        }
        if (f[0] == f[1] || f[1] == f[2] || f[2] == f[0]) {
            throw std::invalid_argument("mesh: face " + std::to_string(fi) +
                                        " repeats a vertex");
        }
    }
}

Vec3 Mesh::bbox_min() const {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    for (const auto& v : vertices) lo = lo.cwiseMin(v);
    return lo;
}

Vec3 Mesh::bbox_max() const {
    Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());
    for (const auto& v : vertices) hi = hi.cwiseMax(v);
    return hi;
}

double Mesh::bbox_diagonal() const {
    if (vertices.empty()) return 0.0;
    return (bbox_max() - bbox_min()).norm();
}

namespace {

inline uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<uint64_t>(a) << 32) | static_cast<uint32_t>(b);
}

}  // namespace

Adjacency build_adjacency(const Mesh& mesh) {
    mesh.check_indices();
    Adjacency adj;
    adj.vertex_neighbors.resize(mesh.vertices.size());

    std::unordered_map<uint64_t, int> edge_index;
    edge_index.reserve(mesh.faces.size() * 2);

    for (int fi = 0; fi < mesh.face_count(); ++fi) {
        const auto& f = mesh.faces[fi];
        for (int k = 0; k < 3; ++k) {
            const int a = f[k];
            const int b = f[(k + 1) % 3];
            const uint64_t key = edge_key(a, b);
            auto it = edge_index.find(key);
            int ei;
            if (it == edge_index.end()) {
                ei = static_cast<int>(adj.edges.size());
                edge_index.emplace(key, ei);
                adj.edges.push_back({std::min(a, b), std::max(a, b)});
                adj.edge_faces.push_back({fi, -1});
                adj.vertex_neighbors[a].push_back(b);
                adj.vertex_neighbors[b].push_back(a);
            } else {
                ei = it->second;
                if (adj.edge_faces[ei][1] == -1 && adj.edge_faces[ei][0] != fi) {
                    adj.edge_faces[ei][1] = fi;
                    adj.face_pairs.push_back({adj.edge_faces[ei][0], fi});
                }
                // a third face on one edge is non-manifold; validate() reports it
            }
        }
    }
    for (auto& nb : adj.vertex_neighbors) std::sort(nb.begin(), nb.end());
    return adj;
}

MeshValidityReport validate(const Mesh& mesh) {
    MeshValidityReport rep;
    rep.vertex_count = mesh.vertex_count();
    rep.face_count = mesh.face_count();

    const int nv = mesh.vertex_count();
    bool indices_ok = true;
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k)
            if (f[k] < 0 || f[k] >= nv) indices_ok = false;
        if (f[0] == f[1] || f[1] == f[2] || f[2] == f[0]) indices_ok = false;
    }
    if (!indices_ok) {
        rep.is_manifold = false;
        return rep;
    }

    // undirected edge -> face count, directed edge multiplicity
    std::unordered_map<uint64_t, int> edge_faces;
    std::unordered_map<uint64_t, int> directed;
    edge_faces.reserve(mesh.faces.size() * 2);
    directed.reserve(mesh.faces.size() * 3);
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            const int a = f[k];
            const int b = f[(k + 1) % 3];
            edge_faces[edge_key(a, b)]++;
            directed[(static_cast<uint64_t>(a) << 32) | static_cast<uint32_t>(b)]++;
        }
    }
    rep.edge_count = static_cast<int>(edge_faces.size());
    rep.euler_characteristic = rep.vertex_count - rep.edge_count + rep.face_count;

    bool edge_manifold = true;
    for (const auto& [key, count] : edge_faces) {
        (void)key;
        if (count == 1) rep.boundary_edge_count++;
        if (count > 2) edge_manifold = false;
    }
    rep.oriented_consistently = true;
    for (const auto& [key, count] : directed) {
        (void)key;
        if (count > 1) rep.oriented_consistently = false;
    }

    for (const auto& f : mesh.faces) {
        const Vec3 c = (mesh.vertices[f[1]] - mesh.vertices[f[0]])
                               .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
        if (0.5 * c.norm() < kDegenerateFaceArea) rep.degenerate_face_count++;
    }

    // vertex link: incident faces must form a single fan
    bool vertex_manifold = true;
    std::vector<std::vector<int>> incident(mesh.vertices.size());
    for (int fi = 0; fi < mesh.face_count(); ++fi)
        for (int k = 0; k < 3; ++k) incident[mesh.faces[fi][k]].push_back(fi);
    for (int v = 0; v < nv && vertex_manifold; ++v) {
        const auto& fs = incident[v];
        if (fs.empty()) continue;
        // walk the fan via shared edges opposite v
        std::map<int, std::vector<int>> next;  // neighbor vertex -> faces using edge (v, neighbor)
        for (int fi : fs) {
            const auto& f = mesh.faces[fi];
            for (int k = 0; k < 3; ++k) {
                if (f[k] == v) {
                    next[f[(k + 1) % 3]].push_back(fi);
                    next[f[(k + 2) % 3]].push_back(fi);
                }
            }
        }
        // connected component search over incident faces
        std::vector<int> stack = {fs[0]};
        std::vector<char> seen_face(mesh.face_count(), 0);
        seen_face[fs[0]] = 1;
        size_t reached = 1;
        while (!stack.empty()) {
            const int fi = stack.back();
            stack.pop_back();
            const auto& f = mesh.faces[fi];
            for (int k = 0; k < 3; ++k) {
                if (f[k] == v) continue;
                for (int other : next[f[k]]) {
                    if (!seen_face[other]) {
                        seen_face[other] = 1;
                        ++reached;
                        stack.push_back(other);
                    }
                }
            }
        }
        if (reached != fs.size()) vertex_manifold = false;
    }

    rep.is_manifold = edge_manifold && vertex_manifold && rep.oriented_consistently;
    return rep;
}

std::string MeshValidityReport::to_string() const {
    std::ostringstream os;
    os << "vertices " << vertex_count << ", edges " << edge_count << ", faces "
       << face_count << "\n"
       << "manifold: " << (is_manifold ? "yes" : "NO") << "\n"
       << "consistent orientation: " << (oriented_consistently ? "yes" : "NO") << "\n"
       << "boundary edges: " << boundary_edge_count << "\n"
       << "degenerate faces: " << degenerate_face_count << "\n"
       << "euler characteristic: " << euler_characteristic;
    return os.str();
}

std::vector<Vec3> face_normals(const Mesh& mesh) {
    std::vector<Vec3> normals(mesh.faces.size());
    for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
        const auto& f = mesh.faces[fi];
        const Vec3 c = (mesh.vertices[f[1]] - mesh.vertices[f[0]])
                               .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
        const double len = c.norm();
        normals[fi] = (0.5 * len < kDegenerateFaceArea) ? Vec3::Zero().eval() : (c / len).eval();
    }
    return normals;
}

std::vector<Vec3> vertex_normals(const Mesh& mesh) {
    std::vector<Vec3> accum(mesh.vertices.size(), Vec3::Zero());
    for (const auto& f : mesh.faces) {
        // cross product length = 2 * area, so this is area weighting
        const Vec3 c = (mesh.vertices[f[1]] - mesh.vertices[f[0]])
                               .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
        for (int k = 0; k < 3; ++k) accum[f[k]] += c;
    }
    for (auto& n : accum) {
        const double len = n.norm();
        if (len > 1e-20) n /= len;
    }
    return accum;
}

std::vector<Vec3> differential_coords(const Mesh& mesh, const Adjacency& adj) {
    std::vector<Vec3> delta(mesh.vertices.size());
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        const auto& nb = adj.vertex_neighbors[i];
        if (nb.empty()) {
            throw std::invalid_argument("differential_coords: isolated vertex " +
                                        std::to_string(i));
        }
        Vec3 sum = Vec3::Zero();
        for (int j : nb) sum += mesh.vertices[i] - mesh.vertices[j];
        delta[i] = sum / static_cast<double>(nb.size());
    }
    return delta;
}

double mean_edge_length(const Mesh& mesh) {
    const Adjacency adj = build_adjacency(mesh);
    if (adj.edges.empty()) return 0.0;
    double total = 0.0;
    for (const auto& e : adj.edges)
        total += (mesh.vertices[e[0]] - mesh.vertices[e[1]]).norm();
    return total / static_cast<double>(adj.edges.size());
}

void save_obj(const Mesh& mesh, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_obj: cannot open " + path);
    f.precision(17);
    for (const auto& v : mesh.vertices) f << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
    for (const auto& face : mesh.faces)
        f << "f " << face[0] + 1 << " " << face[1] + 1 << " " << face[2] + 1 << "\n";
    if (!f) throw std::runtime_error("save_obj: write failed for " + path);
}

Mesh load_obj(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_obj: cannot open " + path);
    Mesh mesh;
    std::string line;
    while (std::getline(f, line)) {
        if (line.size() < 2) continue;
        std::istringstream iss(line);
        std::string tag;
        iss >> tag;
        if (tag == "v") {
            Vec3 v;
            iss >> v.x() >> v.y() >> v.z();
            if (iss.fail()) throw std::runtime_error("load_obj: malformed vertex in " + path);
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (iss >> tok) {
                // accept "i", "i/t", "i//n", "i/t/n"
                idx.push_back(std::stoi(tok.substr(0, tok.find('/'))));
            }
            if (idx.size() != 3) {
                throw std::runtime_error("load_obj: non-triangle face in " + path);
            }
            mesh.faces.push_back({idx[0] - 1, idx[1] - 1, idx[2] - 1});
        }
    }
    mesh.check_indices();
    return mesh;
}

}  // namespace ncarve
