#include "ncarve/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace ncarve {

namespace {

constexpr double kMinProjectedArea = 1e-9;  // px^2 * 2, below this a face is skipped
// alpha saturates to exactly 0/1 at this many softness units from the
// outline; the band search extends a little past it
constexpr double kSaturationFactor = 2.0;
constexpr double kBandMarginPx = 2.0;

inline double saturation_radius(double softness) {
    return std::max(kSaturationFactor * softness, 1.0);
}

inline double cross2(const Vec2& u, const Vec2& v) {
    return u.x() * v.y() - u.y() * v.x();
}

inline Vec2 perp(const Vec2& u) { return Vec2(u.y(), -u.x()); }

inline uint64_t ekey(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<uint64_t>(a) << 32) | static_cast<uint32_t>(b);
}

struct OutlineSegment {
    int va, vb;  // mesh vertex indices
};

struct Forward {
    Mat3 rot;
    std::vector<Vec3> cam_verts;
    std::vector<Vec2> px_verts;
    std::vector<Vec3> vnormal_accum;  // world, unnormalized
    std::vector<Vec3> cam_vnormals;   // camera space, unit
    std::vector<double> face_area2;   // signed, px coords (front < 0)

    // per pixel
    std::vector<int> face_id;         // -1 = background
    std::vector<double> depth;
    std::vector<Vec3> bary;

    // silhouette band
    std::vector<OutlineSegment> outline;
    std::vector<int> band_seg;        // -1 = not in band
    std::vector<double> band_dist;

    int h = 0, w = 0;
    double softness = 0.0;

    size_t pix(int y, int x) const { return static_cast<size_t>(y) * w + x; }
};

double point_segment_distance(const Vec2& c, const Vec2& a, const Vec2& b, double& t_out) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 < 1e-30 ? 0.0 : std::clamp((c - a).dot(ab) / len2, 0.0, 1.0);
    t_out = t;
    return (c - (a + t * ab)).norm();
}

// rescaled logistic: exactly 0 at -R, 1 at +R, 0.5 at the outline
double band_alpha(double d, double softness, double radius) {
    const double lo = 1.0 / (1.0 + std::exp(radius / softness));
    const double hi = 1.0 / (1.0 + std::exp(-radius / softness));
    const double s = 1.0 / (1.0 + std::exp(-d / softness));
    return std::clamp((s - lo) / (hi - lo), 0.0, 1.0);
}

double band_alpha_deriv(double d, double softness, double radius) {
    const double lo = 1.0 / (1.0 + std::exp(radius / softness));
    const double hi = 1.0 / (1.0 + std::exp(-radius / softness));
    const double s = 1.0 / (1.0 + std::exp(-d / softness));
    return s * (1.0 - s) / (softness * (hi - lo));
}

Forward run_forward(const Mesh& mesh, const Camera& camera, double softness) {
    camera.check();
    if (softness < 0.0) throw std::invalid_argument("rasterize: softness must be >= 0");
    mesh.check_indices();

    Forward fw;
    fw.h = camera.height;
    fw.w = camera.width;
    fw.softness = softness;
    fw.rot = camera.rotation();

    const size_t nv = mesh.vertices.size();
    fw.cam_verts.resize(nv);
    fw.px_verts.resize(nv);
    for (size_t i = 0; i < nv; ++i) {
        fw.cam_verts[i] = fw.rot * mesh.vertices[i];
        fw.px_verts[i] = camera.ndc_to_px(camera.project(fw.cam_verts[i]));
    }

    fw.vnormal_accum.assign(nv, Vec3::Zero());
    for (const auto& f : mesh.faces) {
        const Vec3 c = (mesh.vertices[f[1]] - mesh.vertices[f[0]])
                               .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
        for (int k = 0; k < 3; ++k) fw.vnormal_accum[f[k]] += c;
    }
    fw.cam_vnormals.resize(nv);
    for (size_t i = 0; i < nv; ++i) {
        const double len = fw.vnormal_accum[i].norm();
        fw.cam_vnormals[i] =
                len > 1e-20 ? (fw.rot * (fw.vnormal_accum[i] / len)).eval() : Vec3::Zero().eval();
    }

    const size_t npix = static_cast<size_t>(fw.h) * fw.w;
    fw.face_id.assign(npix, -1);
    fw.depth.assign(npix, -std::numeric_limits<double>::infinity());
    fw.bary.assign(npix, Vec3::Zero());
    fw.face_area2.resize(mesh.faces.size());

    for (int fi = 0; fi < mesh.face_count(); ++fi) {
        const auto& f = mesh.faces[fi];
        const Vec2& p0 = fw.px_verts[f[0]];
        const Vec2& p1 = fw.px_verts[f[1]];
        const Vec2& p2 = fw.px_verts[f[2]];
        const double area2 = cross2(p1 - p0, p2 - p0);
        fw.face_area2[fi] = area2;
        if (area2 >= -kMinProjectedArea) continue;  // backfacing or degenerate

        const int x0 = std::max(0, static_cast<int>(std::floor(
                                           std::min({p0.x(), p1.x(), p2.x()}) - 0.5)));
        const int x1 = std::min(fw.w - 1, static_cast<int>(std::ceil(
                                                  std::max({p0.x(), p1.x(), p2.x()}) - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::floor(
                                           std::min({p0.y(), p1.y(), p2.y()}) - 0.5)));
        const int y1 = std::min(fw.h - 1, static_cast<int>(std::ceil(
                                                  std::max({p0.y(), p1.y(), p2.y()}) - 0.5)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const Vec2 p(x + 0.5, y + 0.5);
                const double w0 = cross2(p2 - p1, p - p1) / area2;
                const double w1 = cross2(p0 - p2, p - p2) / area2;
                const double w2 = cross2(p1 - p0, p - p0) / area2;
                if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
                const double z = w0 * fw.cam_verts[f[0]].z() + w1 * fw.cam_verts[f[1]].z() +
                                 w2 * fw.cam_verts[f[2]].z();
                const size_t idx = fw.pix(y, x);
                if (z > fw.depth[idx]) {
                    fw.depth[idx] = z;
                    fw.face_id[idx] = fi;
                    fw.bary[idx] = Vec3(w0, w1, w2);
                }
            }
        }
    }

    if (softness > 0.0) {
        // silhouette candidates: edges whose incident faces change facing
        std::unordered_map<uint64_t, std::array<int, 2>> edge_faces;
        edge_faces.reserve(mesh.faces.size() * 2);
        for (int fi = 0; fi < mesh.face_count(); ++fi) {
            const auto& f = mesh.faces[fi];
            for (int k = 0; k < 3; ++k) {
                auto& slot = edge_faces.try_emplace(ekey(f[k], f[(k + 1) % 3]),
                                                    std::array<int, 2>{-1, -1})
                                     .first->second;
                if (slot[0] == -1) slot[0] = fi;
                else if (slot[1] == -1 && slot[0] != fi) slot[1] = fi;
            }
        }
        auto facing = [&](int fi) { return fi >= 0 && fw.face_area2[fi] < -kMinProjectedArea; };
        auto covered = [&](const Vec2& p) {
            const int x = static_cast<int>(std::floor(p.x()));
            const int y = static_cast<int>(std::floor(p.y()));
            if (x < 0 || y < 0 || x >= fw.w || y >= fw.h) return false;
            return fw.face_id[fw.pix(y, x)] >= 0;
        };
        // iterate faces (not the map) for deterministic segment order
        for (int fi = 0; fi < mesh.face_count(); ++fi) {
            const auto& f = mesh.faces[fi];
            for (int k = 0; k < 3; ++k) {
                const int a = f[k], b = f[(k + 1) % 3];
                const auto& slot = edge_faces[ekey(a, b)];
                if (slot[0] != fi) continue;  // claim each edge once
                const bool fa = facing(slot[0]);
                const bool fb = facing(slot[1]);
                if (fa == fb) continue;
                // outline only when hard coverage changes across the edge
                const Vec2 pa = fw.px_verts[a], pb = fw.px_verts[b];
                const Vec2 dir = pb - pa;
                if (dir.norm() < 1e-12) continue;
                const Vec2 n = perp(dir).normalized();
                const Vec2 mid = 0.5 * (pa + pb);
                if (covered(mid + 1.5 * n) == covered(mid - 1.5 * n)) continue;
                fw.outline.push_back({a, b});
            }
        }

        fw.band_seg.assign(npix, -1);
        fw.band_dist.assign(npix, std::numeric_limits<double>::infinity());
        const double radius = saturation_radius(softness) + kBandMarginPx;
        for (size_t si = 0; si < fw.outline.size(); ++si) {
            const Vec2 pa = fw.px_verts[fw.outline[si].va];
            const Vec2 pb = fw.px_verts[fw.outline[si].vb];
            const int x0 = std::max(0, static_cast<int>(std::floor(std::min(pa.x(), pb.x()) - radius)));
            const int x1 = std::min(fw.w - 1,
                                    static_cast<int>(std::ceil(std::max(pa.x(), pb.x()) + radius)));
            const int y0 = std::max(0, static_cast<int>(std::floor(std::min(pa.y(), pb.y()) - radius)));
            const int y1 = std::min(fw.h - 1,
                                    static_cast<int>(std::ceil(std::max(pa.y(), pb.y()) + radius)));
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    double t;
                    const double dist =
                            point_segment_distance(Vec2(x + 0.5, y + 0.5), pa, pb, t);
                    if (dist > radius) continue;
                    const size_t idx = fw.pix(y, x);
                    if (dist < fw.band_dist[idx]) {
                        fw.band_dist[idx] = dist;
                        fw.band_seg[idx] = static_cast<int>(si);
                    }
                }
            }
        }
    }
    return fw;
}

}  // namespace

NormalMap rasterize(const Mesh& mesh, const Camera& camera, double softness) {
    const Forward fw = run_forward(mesh, camera, softness);
    NormalMap out = make_background(camera.height, camera.width);
    const auto fnormals = face_normals(mesh);
    const double radius = saturation_radius(softness);

    for (int y = 0; y < fw.h; ++y) {
        for (int x = 0; x < fw.w; ++x) {
            const size_t idx = fw.pix(y, x);
            const int fi = fw.face_id[idx];
            if (fi >= 0) {
                const auto& f = mesh.faces[fi];
                const Vec3& w = fw.bary[idx];
                Vec3 m = w[0] * fw.cam_vnormals[f[0]] + w[1] * fw.cam_vnormals[f[1]] +
                         w[2] * fw.cam_vnormals[f[2]];
                const double len = m.norm();
                const Vec3 n = len > 1e-9 ? (m / len).eval() : (fw.rot * fnormals[fi]).eval();
                out.at(0, y, x) = 0.5 * (n.x() + 1.0);
                out.at(1, y, x) = 0.5 * (n.y() + 1.0);
                out.at(2, y, x) = 0.5 * (n.z() + 1.0);
                out.at(3, y, x) = 1.0;
            }
            if (softness > 0.0 && fw.band_seg[idx] >= 0) {
                const double sign = fi >= 0 ? 1.0 : -1.0;
                out.at(3, y, x) = band_alpha(sign * fw.band_dist[idx], softness, radius);
            }
        }
    }
    return out;
}

RasterGradients rasterize_backward(const Mesh& mesh, const Camera& camera, double softness,
                                   const Image& upstream) {
    if (upstream.channels != 4 || upstream.height != camera.height ||
        upstream.width != camera.width) {
        throw std::invalid_argument("rasterize_backward: upstream buffer shape mismatch");
    }
    const Forward fw = run_forward(mesh, camera, softness);
    const double radius = saturation_radius(softness);

    const size_t nv = mesh.vertices.size();
    std::vector<Vec3> g_cam_normal(nv, Vec3::Zero());  // wrt unit camera-space vertex normal
    std::vector<Vec2> g_px(nv, Vec2::Zero());          // wrt pixel-space vertex position
    RasterGradients out;
    out.d_vertices.assign(nv, Vec3::Zero());

    // interior pass: normals via barycentric interpolation
    for (int y = 0; y < fw.h; ++y) {
        for (int x = 0; x < fw.w; ++x) {
            const size_t idx = fw.pix(y, x);
            const int fi = fw.face_id[idx];
            if (fi < 0) continue;
            const Vec3 g_rgb(upstream.at(0, y, x), upstream.at(1, y, x), upstream.at(2, y, x));
            if (g_rgb.isZero()) continue;
            const auto& f = mesh.faces[fi];
            const Vec3& w = fw.bary[idx];
            const Vec3 m = w[0] * fw.cam_vnormals[f[0]] + w[1] * fw.cam_vnormals[f[1]] +
                           w[2] * fw.cam_vnormals[f[2]];
            const double len = m.norm();
            if (len < 1e-9) continue;  // face-normal fallback pixel: treated as constant
            const Vec3 n = m / len;
            const Vec3 g_n = 0.5 * g_rgb;  // rgb = (n+1)/2
            const Vec3 g_m = (g_n - n * n.dot(g_n)) / len;

            double g_w[3];
            for (int k = 0; k < 3; ++k) {
                g_cam_normal[f[k]] += w[k] * g_m;
                g_w[k] = fw.cam_vnormals[f[k]].dot(g_m);
            }

            // barycentric weights wrt the three projected corners
            const Vec2& p0 = fw.px_verts[f[0]];
            const Vec2& p1 = fw.px_verts[f[1]];
            const Vec2& p2 = fw.px_verts[f[2]];
            const Vec2 p(x + 0.5, y + 0.5);
            const double area2 = fw.face_area2[fi];
            const Vec2 dA[3] = {perp(p1 - p2), perp(p2 - p0), perp(p0 - p1)};
            // dN_i/dp_j: nonzero only for j = i+1 (perp(p_{i+2} - p)) and j = i+2 (perp(p - p_{i+1}))
            const Vec2* pv[3] = {&p0, &p1, &p2};
            for (int i = 0; i < 3; ++i) {
                const int j1 = (i + 1) % 3, j2 = (i + 2) % 3;
                const Vec2 dN_dj1 = perp(*pv[j2] - p);
                const Vec2 dN_dj2 = perp(p - *pv[j1]);
                const double wi = w[i];
                g_px[f[j1]] += g_w[i] * (dN_dj1 - wi * dA[j1]) / area2;
                g_px[f[j2]] += g_w[i] * (dN_dj2 - wi * dA[j2]) / area2;
                g_px[f[i]] += g_w[i] * (-wi * dA[i]) / area2;
            }
        }
    }

    // silhouette pass: alpha via signed distance to the outline
    if (softness > 0.0) {
        for (int y = 0; y < fw.h; ++y) {
            for (int x = 0; x < fw.w; ++x) {
                const size_t idx = fw.pix(y, x);
                const int si = fw.band_seg[idx];
                if (si < 0) continue;
                const double g_alpha = upstream.at(3, y, x);
                if (g_alpha == 0.0) continue;
                const double sign = fw.face_id[idx] >= 0 ? 1.0 : -1.0;
                const double d = sign * fw.band_dist[idx];
                if (std::abs(d) >= radius) continue;  // clamped region, zero slope
                const double g_d = g_alpha * band_alpha_deriv(d, softness, radius);
                const int va = fw.outline[si].va, vb = fw.outline[si].vb;
                const Vec2 pa = fw.px_verts[va], pb = fw.px_verts[vb];
                double t;
                const double dist = point_segment_distance(Vec2(x + 0.5, y + 0.5), pa, pb, t);
                if (dist < 1e-9) continue;
                const Vec2 q = pa + t * (pb - pa);
                const Vec2 u = (Vec2(x + 0.5, y + 0.5) - q) / dist;
                // envelope theorem: d dist = -u . dq with t held at the minimizer
                g_px[va] += g_d * sign * (-(1.0 - t)) * u;
                g_px[vb] += g_d * sign * (-t) * u;
            }
        }
    }

    // chain pixel-position gradients through the projection
    const double sx = 0.5 * camera.width * camera.scale;
    const double sy = -0.5 * camera.height * camera.scale;
    for (size_t i = 0; i < nv; ++i) {
        if (g_px[i].isZero()) continue;
        const Vec3 g_cam(sx * g_px[i].x(), sy * g_px[i].y(), 0.0);
        out.d_vertices[i] += fw.rot.transpose() * g_cam;
    }

    // chain vertex-normal gradients through normalization, rotation and the
    // area-weighted cross-product accumulation
    std::vector<Vec3> g_accum(nv, Vec3::Zero());
    for (size_t i = 0; i < nv; ++i) {
        if (g_cam_normal[i].isZero()) continue;
        const double len = fw.vnormal_accum[i].norm();
        if (len < 1e-20) continue;
        const Vec3 n_world = fw.vnormal_accum[i] / len;
        const Vec3 g_world = fw.rot.transpose() * g_cam_normal[i];
        g_accum[i] = (g_world - n_world * n_world.dot(g_world)) / len;
    }
    for (const auto& f : mesh.faces) {
        const Vec3 g_c = g_accum[f[0]] + g_accum[f[1]] + g_accum[f[2]];
        if (g_c.isZero()) continue;
        const Vec3 e1 = mesh.vertices[f[1]] - mesh.vertices[f[0]];
        const Vec3 e2 = mesh.vertices[f[2]] - mesh.vertices[f[0]];
        out.d_vertices[f[0]] += (e1 - e2).cross(g_c);
        out.d_vertices[f[1]] += e2.cross(g_c);
        out.d_vertices[f[2]] += g_c.cross(e1);
    }
    return out;
}

}  // namespace ncarve
