#include "ncarve/carve.hpp"

#include "ncarve/mesh_losses.hpp"
#include "ncarve/raster.hpp"
#include "ncarve/remesh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ncarve {

void LossWeights::check() const {
    for (double w : {normal, mask, sides, laplacian, normal_reg}) {
        if (w < 0.0 || !std::isfinite(w)) {
            throw std::invalid_argument("loss weights must be nonnegative");
        }
    }
}

void CarveConfig::check() const {
    if (total_iterations <= 0 || remesh_interval <= 0) {
        throw std::invalid_argument("carve config: iteration counts must be positive");
    }
    if (total_iterations % remesh_interval != 0) {
        throw std::invalid_argument("carve config: remesh interval must divide total iterations");
    }
    for (double d : {step_decay_per_remesh, sides_decay_per_remesh}) {
        if (d < 0.0 || d >= 1.0) throw std::invalid_argument("carve config: decay outside [0,1)");
    }
    if (alpha_threshold <= 0.0 || alpha_threshold >= 1.0) {
        throw std::invalid_argument("carve config: alpha threshold outside (0,1)");
    }
    if (initial_vertices < 4) throw std::invalid_argument("carve config: too few vertices");
}

void CarveTargets::check() const {
    if (views.empty()) throw std::invalid_argument("carve targets: no views");
    const int h = views[0].map.height, w = views[0].map.width;
    for (const auto& v : views) {
        if (v.map.channels != 4 || v.map.height != h || v.map.width != w) {
            throw std::invalid_argument("carve targets: inconsistent view buffers");
        }
        if (v.camera.height != h || v.camera.width != w) {
            throw std::invalid_argument("carve targets: camera resolution differs from buffer");
        }
    }
    for (const auto& s : side_masks) {
        if (s.map.height != h || s.map.width != w) {
            throw std::invalid_argument("carve targets: side mask resolution differs");
        }
    }
}

BufferLoss normal_loss(const NormalMap& rendered, const NormalMap& target, double tau) {
    if (!rendered.same_shape(target)) {
        throw std::invalid_argument("normal_loss: resolution mismatch");
    }
    BufferLoss out;
    out.d_buffers = Image(4, rendered.height, rendered.width, 0.0);
    long count = 0;
    for (int y = 0; y < rendered.height; ++y) {
        for (int x = 0; x < rendered.width; ++x) {
            if (rendered.at(3, y, x) > tau && target.at(3, y, x) > tau) ++count;
        }
    }
    if (count == 0) return out;
    const double inv = 1.0 / static_cast<double>(count);
    for (int y = 0; y < rendered.height; ++y) {
        for (int x = 0; x < rendered.width; ++x) {
            if (!(rendered.at(3, y, x) > tau && target.at(3, y, x) > tau)) continue;
            for (int c = 0; c < 3; ++c) {
                // decoded normals differ by 2x the rgb difference
                const double diff = 2.0 * (rendered.at(c, y, x) - target.at(c, y, x));
                out.value += std::abs(diff) * inv;
                const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                out.d_buffers.at(c, y, x) = 2.0 * s * inv;
            }
        }
    }
    return out;
}

BufferLoss mask_loss(const NormalMap& rendered, const NormalMap& target) {
    if (rendered.height != target.height || rendered.width != target.width) {
        throw std::invalid_argument("mask_loss: resolution mismatch");
    }
    BufferLoss out;
    out.d_buffers = Image(4, rendered.height, rendered.width, 0.0);
    const double inv = 1.0 / (static_cast<double>(rendered.height) * rendered.width);
    for (int y = 0; y < rendered.height; ++y) {
        for (int x = 0; x < rendered.width; ++x) {
            const double diff = rendered.at(3, y, x) - target.at(3, y, x);
            out.value += diff * diff * inv;
            out.d_buffers.at(3, y, x) = 2.0 * diff * inv;
        }
    }
    return out;
}

BufferLoss side_loss(const NormalMap& rendered, const NormalMap& proxy_mask) {
    if (rendered.height != proxy_mask.height || rendered.width != proxy_mask.width) {
        throw std::invalid_argument("side_loss: resolution mismatch");
    }
    const int alpha_ch = proxy_mask.channels - 1;
    BufferLoss out;
    out.d_buffers = Image(4, rendered.height, rendered.width, 0.0);
    for (int y = 0; y < rendered.height; ++y) {
        for (int x = 0; x < rendered.width; ++x) {
            if (proxy_mask.at(alpha_ch, y, x) < 0.5) continue;
            const double gap = 1.0 - rendered.at(3, y, x);
            out.value += gap * gap;
            out.d_buffers.at(3, y, x) = -2.0 * gap;
        }
    }
    return out;
}

ScheduleState schedule(const CarveConfig& config, double initial_step, int iteration) {
    if (iteration < 0 || iteration >= config.total_iterations) {
        throw std::out_of_range("schedule: iteration outside [0, total)");
    }
    ScheduleState st;
    st.remesh_count = iteration / config.remesh_interval;
    st.step_size = initial_step * std::pow(1.0 - config.step_decay_per_remesh, st.remesh_count);

    const int stages = config.total_iterations / config.remesh_interval;
    const double ramp =
            stages > 1 ? static_cast<double>(st.remesh_count) / (stages - 1) : 0.0;
    st.weights.normal = config.weight_normal;
    st.weights.mask = config.weight_mask;
    st.weights.sides = config.weight_sides *
                       std::pow(1.0 - config.sides_decay_per_remesh, st.remesh_count);
    st.weights.laplacian =
            config.laplacian_start + ramp * (config.laplacian_end - config.laplacian_start);
    st.weights.normal_reg =
            config.normal_reg_start + ramp * (config.normal_reg_end - config.normal_reg_start);
    st.weights.check();
    return st;
}

namespace {

// loss over a subset of views plus sides and regularizers
TotalLoss loss_over_views(const Mesh& mesh, const Adjacency& adj, const CarveTargets& targets,
                          const LossWeights& weights, double softness, double tau,
                          const std::vector<size_t>& view_ids) {
    TotalLoss out;
    out.d_vertices.assign(mesh.vertices.size(), Vec3::Zero());

    const double view_scale = view_ids.empty() ? 0.0 : 1.0 / static_cast<double>(view_ids.size());
    for (size_t vid : view_ids) {
        const auto& view = targets.views[vid];
        const NormalMap rendered = rasterize(mesh, view.camera, softness);
        const BufferLoss ln = normal_loss(rendered, view.map, tau);
        const BufferLoss lm = mask_loss(rendered, view.map);
        out.value += view_scale * (weights.normal * ln.value + weights.mask * lm.value);

        Image upstream(4, rendered.height, rendered.width, 0.0);
        for (size_t i = 0; i < upstream.data.size(); ++i) {
            upstream.data[i] = view_scale * (weights.normal * ln.d_buffers.data[i] +
                                             weights.mask * lm.d_buffers.data[i]);
        }
        const RasterGradients g = rasterize_backward(mesh, view.camera, softness, upstream);
        for (size_t i = 0; i < out.d_vertices.size(); ++i) out.d_vertices[i] += g.d_vertices[i];
    }

    if (weights.sides > 0.0) {
        for (const auto& side : targets.side_masks) {
            const NormalMap rendered = rasterize(mesh, side.camera, softness);
            const BufferLoss ls = side_loss(rendered, side.map);
            out.value += weights.sides * ls.value;
            Image upstream = ls.d_buffers;
            for (auto& v : upstream.data) v *= weights.sides;
            const RasterGradients g = rasterize_backward(mesh, side.camera, softness, upstream);
            for (size_t i = 0; i < out.d_vertices.size(); ++i)
                out.d_vertices[i] += g.d_vertices[i];
        }
    }

    if (weights.laplacian > 0.0) {
        const MeshLoss lap = laplacian_loss(mesh, adj);
        out.value += weights.laplacian * lap.value;
        for (size_t i = 0; i < out.d_vertices.size(); ++i)
            out.d_vertices[i] += weights.laplacian * lap.grad[i];
    }
    if (weights.normal_reg > 0.0 && !adj.face_pairs.empty()) {
        const MeshLoss reg = normal_consistency_loss(mesh, adj);
        out.value += weights.normal_reg * reg.value;
        for (size_t i = 0; i < out.d_vertices.size(); ++i)
            out.d_vertices[i] += weights.normal_reg * reg.grad[i];
    }
    return out;
}

struct Adam {
    std::vector<Vec3> m, v;
    long t = 0;
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    void reset(size_t n) {
        m.assign(n, Vec3::Zero());
        v.assign(n, Vec3::Zero());
        t = 0;
    }

    void step(std::vector<Vec3>& params, const std::vector<Vec3>& grad, double lr) {
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i].cwiseProduct(grad[i]);
            const Vec3 mhat = m[i] / c1;
            const Vec3 vhat = v[i] / c2;
            for (int k = 0; k < 3; ++k) {
                params[i][k] -= lr * mhat[k] / (std::sqrt(vhat[k]) + eps);
            }
        }
    }
};

double grad_norm(const std::vector<Vec3>& g) {
    double s = 0.0;
    for (const auto& v : g) s += v.squaredNorm();
    return std::sqrt(s);
}

}  // namespace

TotalLoss total_loss(const Mesh& mesh, const CarveTargets& targets, const LossWeights& weights,
                     double softness, double tau) {
    weights.check();
    targets.check();
    const Adjacency adj = build_adjacency(mesh);
    std::vector<size_t> all(targets.views.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    return loss_over_views(mesh, adj, targets, weights, softness, tau, all);
}

CarveResult carve(const Mesh& initial, const CarveTargets& targets, const CarveConfig& config,
                  bool second_stage, Rng& rng) {
    config.check();
    targets.check();
    if (second_stage && targets.views.size() < 3) {
        throw std::invalid_argument("carve: second stage expects a multi-view ring");
    }

    CarveResult result;
    result.mesh = initial;
    Adjacency adj = build_adjacency(result.mesh);

    const double initial_step = config.initial_step_size > 0.0
                                        ? config.initial_step_size
                                        : 1e-3 * initial.bbox_diagonal();
    Adam adam;
    adam.reset(result.mesh.vertices.size());
    std::vector<double> norm_history;

    for (int iter = 0; iter < config.total_iterations; ++iter) {
        if (iter > 0 && iter % config.remesh_interval == 0) {
            const double target_edge = mean_edge_length(result.mesh) * config.remesh_edge_scale;
            result.mesh = remesh(result.mesh, target_edge);
            adj = build_adjacency(result.mesh);
            adam.reset(result.mesh.vertices.size());
            norm_history.clear();
            if (!config.dump_dir.empty()) {
                save_obj(result.mesh,
                         config.dump_dir + "/carve_iter_" + std::to_string(iter) + ".obj");
            }
        }

        ScheduleState st = schedule(config, initial_step, iter);
        if (second_stage) st.weights.sides = 0.0;

        const size_t vid = rng.uniform_index(targets.views.size());
        TotalLoss loss = loss_over_views(result.mesh, adj, targets, st.weights, config.softness,
                                         config.alpha_threshold, {vid});
        if (!std::isfinite(loss.value)) {
            throw std::runtime_error("carve: loss diverged (NaN) at iteration " +
                                     std::to_string(iter));
        }

        // clip runaway gradients against the running median norm
        const double norm = grad_norm(loss.d_vertices);
        if (!norm_history.empty()) {
            std::vector<double> sorted = norm_history;
            std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
            const double median = sorted[sorted.size() / 2];
            if (median > 0.0 && norm > 10.0 * median) {
                const double scale = 10.0 * median / norm;
                for (auto& g : loss.d_vertices) g *= scale;
            }
        }
        norm_history.push_back(norm);

        adam.step(result.mesh.vertices, loss.d_vertices, st.step_size);
        result.loss_history.push_back(loss.value);
    }

    const auto report = validate(result.mesh);
    if (!report.is_manifold) {
        throw std::runtime_error("carve: produced a non-manifold mesh");
    }
    return result;
}

}  // namespace ncarve
