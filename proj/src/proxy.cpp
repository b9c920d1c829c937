#include "ncarve/proxy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace ncarve {

Mesh icosphere(int subdivisions) {
    if (subdivisions < 0 || subdivisions > 7) {
        throw std::invalid_argument("icosphere: subdivisions out of range");
    }
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    Mesh mesh;
    mesh.vertices = {
            {-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
            {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
            {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1},
    };
    for (auto& v : mesh.vertices) v.normalize();
    mesh.faces = {
            {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
            {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
            {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
            {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
    };

    for (int level = 0; level < subdivisions; ++level) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const int idx = mesh.vertex_count();
            mesh.vertices.push_back((mesh.vertices[a] + mesh.vertices[b]).normalized());
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(mesh.faces.size() * 4);
        for (const auto& f : mesh.faces) {
            const int ab = mid(f[0], f[1]);
            const int bc = mid(f[1], f[2]);
            const int ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        mesh.faces = std::move(next);
    }
    return mesh;
}

namespace {

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 < 1e-30) return (p - a).norm();
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

double skeleton_sdf(const Vec3& p, const std::vector<CapsuleSegment>& segments) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& s : segments) {
        d = std::min(d, point_segment_distance(p, s.a, s.b) - s.radius);
    }
    return d;
}

// largest t in (0, t_max] with sdf(center + t dir) <= 0, found by a coarse
// outward march followed by bisection
double last_inside_radius(const Vec3& center, const Vec3& dir,
                          const std::vector<CapsuleSegment>& segments, double t_max,
                          double step) {
    double last_in = -1.0, first_out_after = t_max;
    double prev = 0.0;
    bool prev_in = skeleton_sdf(center, segments) <= 0.0;
    for (double t = step; t <= t_max + step; t += step) {
        const bool in = skeleton_sdf(center + t * dir, segments) <= 0.0;
        if (in) {
            last_in = t;
        } else if (prev_in) {
            first_out_after = t;
        }
        prev = t;
        prev_in = in;
    }
    (void)prev;
    if (last_in < 0.0) return 0.0;
    // bracket [last_in, last_in + step] contains the final crossing
    double lo = last_in, hi = std::min(last_in + step, t_max + step);
    (void)first_out_after;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (skeleton_sdf(center + mid * dir, segments) <= 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return lo;
}

void check_connected(const std::vector<CapsuleSegment>& segments) {
    const size_t n = segments.size();
    std::vector<size_t> parent(n);
    std::iota(parent.begin(), parent.end(), size_t{0});
    std::function<size_t(size_t)> find = [&](size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    auto seg_distance = [](const CapsuleSegment& s, const CapsuleSegment& t) {
        // min distance between two segments via sampling both (adequate here)
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 16; ++i) {
            const Vec3 p = s.a + (s.b - s.a) * (i / 16.0);
            best = std::min(best, point_segment_distance(p, t.a, t.b));
        }
        for (int i = 0; i <= 16; ++i) {
            const Vec3 p = t.a + (t.b - t.a) * (i / 16.0);
            best = std::min(best, point_segment_distance(p, s.a, s.b));
        }
        return best;
    };
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            if (seg_distance(segments[i], segments[j]) <=
                segments[i].radius + segments[j].radius) {
                parent[find(i)] = find(j);
            }
        }
    }
    for (size_t i = 1; i < n; ++i) {
        if (find(i) != find(0)) {
            throw std::invalid_argument("make_body_proxy: capsule skeleton is disconnected");
        }
    }
}

}  // namespace

Mesh make_body_proxy(const ProxyParams& params) {
    std::vector<CapsuleSegment> segments;
    switch (params.kind) {
        case ProxyKind::Sphere:
            if (params.radius <= 0.0) {
                throw std::invalid_argument("make_body_proxy: non-positive radius");
            }
            segments.push_back({Vec3::Zero(), Vec3::Zero(), params.radius});
            break;
        case ProxyKind::Capsule:
            if (params.radius <= 0.0) {
                throw std::invalid_argument("make_body_proxy: non-positive radius");
            }
            segments.push_back({params.axis_a, params.axis_b, params.radius});
            break;
        case ProxyKind::PosedMultiCapsule:
            segments = params.segments;
            if (segments.empty()) {
                throw std::invalid_argument("make_body_proxy: empty skeleton");
            }
            for (const auto& s : segments) {
                if (s.radius <= 0.0) {
                    throw std::invalid_argument("make_body_proxy: non-positive radius");
                }
            }
            check_connected(segments);
            break;
    }

    Vec3 center = Vec3::Zero();
    double weight = 0.0;
    for (const auto& s : segments) {
        center += s.a + s.b;
        weight += 2.0;
    }
    center /= weight;
    if (skeleton_sdf(center, segments) > 0.0) {
        // centroid outside the union (exotic poses); fall back to a segment midpoint
        center = 0.5 * (segments[0].a + segments[0].b);
    }

    double t_max = 0.0;
    double min_radius = std::numeric_limits<double>::infinity();
    for (const auto& s : segments) {
        t_max = std::max({t_max, (s.a - center).norm() + s.radius,
                          (s.b - center).norm() + s.radius});
        min_radius = std::min(min_radius, s.radius);
    }
    const double step = std::max(min_radius / 4.0, t_max / 4096.0);

    Mesh mesh = icosphere(params.subdivisions);
    for (auto& v : mesh.vertices) {
        const Vec3 dir = v;  // icosphere vertices are unit directions
        const double r = last_inside_radius(center, dir, segments, t_max, step);
        v = center + r * dir;
    }
    return mesh;
}

std::vector<CapsuleSegment> humanoid_segments(double height, double arm_angle,
                                              double leg_angle) {
    if (height <= 0.0) throw std::invalid_argument("humanoid_segments: non-positive height");
    const double h = height;
    const double torso_r = 0.16 * h;
    const double limb_r = 0.07 * h;
    const double head_r = 0.12 * h;

    auto polar = [](double deg, double len) {
        const double a = deg * M_PI / 180.0;
        return Vec3(std::sin(a) * len, -std::cos(a) * len, 0.0);
    };

    std::vector<CapsuleSegment> seg;
    const Vec3 pelvis(0, 0.52 * h, 0);
    const Vec3 neck(0, 0.82 * h, 0);
    seg.push_back({pelvis, neck, torso_r});                               // torso
    seg.push_back({neck + Vec3(0, 0.06 * h, 0), neck + Vec3(0, 0.10 * h, 0), head_r});
    const Vec3 shoulder_l = neck + Vec3(-0.10 * h, -0.02 * h, 0);
    const Vec3 shoulder_r = neck + Vec3(0.10 * h, -0.02 * h, 0);
    seg.push_back({shoulder_l, shoulder_l + polar(-arm_angle, 0.34 * h), limb_r});  // left arm
    seg.push_back({shoulder_r, shoulder_r + polar(arm_angle, 0.34 * h), limb_r});   // right arm
    const Vec3 hip_l = pelvis + Vec3(-0.08 * h, 0, 0);
    const Vec3 hip_r = pelvis + Vec3(0.08 * h, 0, 0);
    seg.push_back({hip_l, hip_l + polar(-leg_angle, 0.48 * h), limb_r});  // left leg
    seg.push_back({hip_r, hip_r + polar(leg_angle, 0.48 * h), limb_r});   // right leg

    // recenter about the skeleton midpoint so the proxy sits near the origin
    Vec3 c = Vec3::Zero();
    for (auto& s : seg) c += s.a + s.b;
    c /= static_cast<double>(2 * seg.size());
    for (auto& s : seg) {
        s.a -= c;
        s.b -= c;
    }
    return seg;
}

Mesh add_surface_bumps(const Mesh& mesh, const BumpParams& params, Rng& rng) {
    Vec3 centroid = Vec3::Zero();
    for (const auto& v : mesh.vertices) centroid += v;
    centroid /= static_cast<double>(mesh.vertices.size());

    struct Bump {
        Vec3 dir;
        double amplitude;
        double inv_w2;
    };
    std::vector<Bump> bumps;
    for (int i = 0; i < params.count; ++i) {
        Vec3 d(rng.normal(), rng.normal(), rng.normal());
        if (d.norm() < 1e-9) d = Vec3(0, 0, 1);
        d.normalize();
        const double amp = rng.uniform(params.min_amplitude, params.max_amplitude);
        const double w = rng.uniform(params.min_width, params.max_width);
        bumps.push_back({d, amp, 1.0 / (w * w)});
    }

    Mesh out = mesh;
    for (auto& v : out.vertices) {
        const Vec3 rel = v - centroid;
        const double r = rel.norm();
        if (r < 1e-12) continue;
        const Vec3 dir = rel / r;
        double disp = 0.0;
        for (const auto& b : bumps) {
            const double angle = std::acos(std::clamp(dir.dot(b.dir), -1.0, 1.0));
            disp += b.amplitude * std::exp(-angle * angle * b.inv_w2);
        }
        v = centroid + (r + disp) * dir;
    }
    return out;
}

}  // namespace ncarve
