#include "ncarve/pipeline.hpp"

#include "ncarve/dataset.hpp"
#include "ncarve/decimate.hpp"
#include "ncarve/proxy.hpp"
#include "ncarve/raster.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace ncarve {

namespace {

// stable stream tags per stage
enum StreamTag : uint64_t {
    kStreamData = 1,
    kStreamInit = 2,
    kStreamTrain = 3,
    kStreamGenerate = 4,
    kStreamCarve = 5,
    kStreamRefine = 6,
    kStreamGuided = 7,
};

NormalMap binarize_alpha(const NormalMap& map, double tau) {
    NormalMap out = map;
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.at(3, y, x) = out.at(3, y, x) > tau ? 1.0 : 0.0;
    return out;
}

CarveTargets dual_targets(const PipelineConfig& config, const Mesh& proxy, const Camera& front,
                          const NormalMap& front_map, const NormalMap& back_map) {
    CarveTargets targets;
    Camera back = front;
    back.yaw_deg = front.yaw_deg + 180.0;
    targets.views.push_back({front, front_map});
    targets.views.push_back({back, back_map});

    Camera left = front, right = front;
    left.yaw_deg = front.yaw_deg + 90.0;
    right.yaw_deg = front.yaw_deg + 270.0;
    const double tau = config.carve.alpha_threshold;
    targets.side_masks.push_back({left, binarize_alpha(rasterize(proxy, left, 0.0), tau)});
    targets.side_masks.push_back({right, binarize_alpha(rasterize(proxy, right, 0.0), tau)});
    return targets;
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

}  // namespace

Mesh build_proxy(const PipelineConfig& config) {
    ProxyParams pp;
    pp.subdivisions = config.proxy_subdivisions;
    if (config.proxy_kind == "sphere") {
        pp.kind = ProxyKind::Sphere;
        pp.radius = config.proxy_radius;
    } else if (config.proxy_kind == "capsule") {
        pp.kind = ProxyKind::Capsule;
        pp.radius = config.proxy_radius;
        pp.axis_a = Vec3(0, -0.5 * config.proxy_height, 0);
        pp.axis_b = Vec3(0, 0.5 * config.proxy_height, 0);
    } else if (config.proxy_kind == "humanoid") {
        pp.kind = ProxyKind::PosedMultiCapsule;
        pp.segments = humanoid_segments(config.proxy_height, config.proxy_arm_angle_deg,
                                        config.proxy_leg_angle_deg);
    } else {
        throw std::invalid_argument("config: unknown proxy kind '" + config.proxy_kind + "'");
    }
    return make_body_proxy(pp);
}

Camera base_camera(const PipelineConfig& config, const Mesh& proxy) {
    Camera cam;
    cam.height = cam.width = config.resolution;
    cam.pitch_deg = config.camera_pitch_deg;
    if (config.camera_scale > 0.0) {
        cam.scale = config.camera_scale;
    } else {
        double max_r = 0.0;
        for (const auto& v : proxy.vertices) max_r = std::max(max_r, v.norm());
        cam.scale = max_r > 0.0 ? 0.85 / max_r : 1.0;
    }
    return cam;
}

std::vector<NormalMap> render_ring(const Mesh& mesh, const std::vector<Camera>& ring,
                                   double softness) {
    std::vector<NormalMap> out;
    out.reserve(ring.size());
    for (const auto& cam : ring) out.push_back(rasterize(mesh, cam, softness));
    return out;
}

std::string hash_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("hash_file: cannot open " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!f) break;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

std::string cmd_synth_data(const PipelineConfig& config) {
    config.check();
    const std::string dir =
            config.dataset_dir.empty() ? join(config.out_dir, "dataset") : config.dataset_dir;
    Rng rng = Rng(config.seed).fork(kStreamData);
    ProxyRanges ranges;
    const auto dataset = synth_dataset(config.dataset_size, config.resolution, ranges, rng);
    save_dataset(dataset, dir);
    return dir;
}

std::vector<double> cmd_train(const PipelineConfig& config) {
    config.check();
    const std::string dir =
            config.dataset_dir.empty() ? join(config.out_dir, "dataset") : config.dataset_dir;
    const auto dataset = load_dataset(dir);
    const VarianceSchedule sched = config.make_schedule();

    Rng init_rng = Rng(config.seed).fork(kStreamInit);
    ToyDenoiser net(config.arch, init_rng);
    Rng train_rng = Rng(config.seed).fork(kStreamTrain);
    TrainConfig tc = config.train;
    tc.dropout_prob = config.guidance.dropout_prob;
    const TrainResult result = train(net, dataset, tc, sched, train_rng);

    const std::string ckpt = config.checkpoint_path.empty()
                                     ? join(config.out_dir, "denoiser.ckpt")
                                     : config.checkpoint_path;
    fs::create_directories(fs::path(ckpt).parent_path());
    save_checkpoint(net, ckpt);

    std::ofstream curve(join(config.out_dir, "train_loss.txt"));
    for (size_t i = 0; i < result.loss_curve.size(); ++i) {
        curve << i << " " << result.loss_curve[i] << "\n";
    }
    return result.loss_curve;
}

GenerateOutput cmd_generate(const PipelineConfig& config) {
    config.check();
    const std::string ckpt = config.checkpoint_path.empty()
                                     ? join(config.out_dir, "denoiser.ckpt")
                                     : config.checkpoint_path;
    const ToyDenoiser net = load_checkpoint(ckpt);
    const VarianceSchedule sched = config.make_schedule();

    const Mesh proxy = build_proxy(config);
    const Camera cam = base_camera(config, proxy);
    const NormalMap cond = rasterize(proxy, cam, 0.0);

    Rng rng = Rng(config.seed).fork(kStreamGenerate);
    const ClampedDenoiser stable(net, sched);
    const Image dual = sample(stable, &cond, sched, config.guidance, 8, config.resolution,
                              config.resolution, rng);

    GenerateOutput out;
    out.front = clamp01(from_signal(front_half(dual)));
    out.back = clamp01(from_signal(back_half(dual)));
    fs::create_directories(config.out_dir);
    out.front_path = join(config.out_dir, "front.nmap");
    out.back_path = join(config.out_dir, "back.nmap");
    save_nmap(out.front, out.front_path);
    save_nmap(out.back, out.back_path);
    save_png16(out.front, join(config.out_dir, "front.png"));
    save_png16(out.back, join(config.out_dir, "back.png"));
    save_nmap(cond, join(config.out_dir, "condition.nmap"));
    return out;
}

CarveOutput cmd_carve(const PipelineConfig& config, const std::string& front_path,
                      const std::string& back_path) {
    config.check();
    const NormalMap front_map = load_nmap(front_path);
    const NormalMap back_map = load_nmap(back_path);
    if (front_map.height != config.resolution || front_map.width != config.resolution) {
        throw std::invalid_argument("cmd_carve: map resolution differs from config");
    }

    const Mesh proxy = build_proxy(config);
    const Camera cam = base_camera(config, proxy);
    const CarveTargets targets = dual_targets(config, proxy, cam, front_map, back_map);

    const Mesh initial = decimate(proxy, config.carve.initial_vertices);
    Rng rng = Rng(config.seed).fork(kStreamCarve);
    CarveResult result = carve(initial, targets, config.carve, /*second_stage=*/false, rng);

    CarveOutput out;
    out.mesh = std::move(result.mesh);
    out.loss_history = std::move(result.loss_history);
    fs::create_directories(config.out_dir);
    out.obj_path = join(config.out_dir, "carved.obj");
    save_obj(out.mesh, out.obj_path);
    std::ofstream rep(join(config.out_dir, "carved_validity.txt"));
    rep << validate(out.mesh).to_string() << "\n";
    return out;
}

CarveOutput cmd_refine(const PipelineConfig& config, const std::string& mesh_path) {
    config.check();
    if (config.n_views % 2 != 0) {
        throw std::invalid_argument("cmd_refine: n_views must be even to form opposite pairs");
    }
    const Mesh mesh = load_obj(mesh_path);
    const std::string ckpt = config.checkpoint_path.empty()
                                     ? join(config.out_dir, "denoiser.ckpt")
                                     : config.checkpoint_path;
    const ToyDenoiser net = load_checkpoint(ckpt);
    const VarianceSchedule sched = config.make_schedule();

    const Mesh proxy = build_proxy(config);
    const Camera cam = base_camera(config, proxy);
    const auto ring = camera_ring(config.n_views, config.yaw_step_deg, cam);

    std::vector<NormalMap> rendered = render_ring(mesh, ring);
    std::vector<NormalMap> conditions = render_ring(proxy, ring);

    Rng rng = Rng(config.seed).fork(kStreamRefine);
    const ClampedDenoiser stable(net, sched);
    std::vector<NormalMap> refined(rendered.size());
    for (int i = 0; i < config.n_views / 2; ++i) {
        const int j = opposite_view(i, config.n_views);
        const Image pair = to_signal(concat_dual(rendered[i], rendered[j]));
        const Image result = resample(pair, stable, &conditions[i], config.resample_params,
                                      sched, config.guidance, rng);
        refined[i] = clamp01(from_signal(front_half(result)));
        refined[j] = clamp01(from_signal(back_half(result)));
    }

    CarveTargets targets;
    for (int i = 0; i < config.n_views; ++i) targets.views.push_back({ring[i], refined[i]});

    CarveConfig cc = config.carve;
    if (config.refine_iterations > 0) {
        cc.total_iterations = config.refine_iterations;
        cc.remesh_interval = std::max(1, config.refine_iterations /
                                         std::max(1, config.carve.total_iterations /
                                                             config.carve.remesh_interval));
        if (cc.total_iterations % cc.remesh_interval != 0) {
            cc.remesh_interval = cc.total_iterations;
        }
    }
    CarveResult result = carve(mesh, targets, cc, /*second_stage=*/true, rng);

    CarveOutput out;
    out.mesh = std::move(result.mesh);
    out.loss_history = std::move(result.loss_history);
    fs::create_directories(config.out_dir);
    out.obj_path = join(config.out_dir, "refined.obj");
    save_obj(out.mesh, out.obj_path);
    for (int i = 0; i < config.n_views; ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "refined_view_%03d.nmap", i);
        save_nmap(refined[i], join(config.out_dir, name));
    }
    return out;
}

GenerateOutput cmd_guided(const PipelineConfig& config, const std::string& front_path) {
    config.check();
    const NormalMap front_map = load_nmap(front_path);
    if (front_map.height != config.resolution || front_map.width != config.resolution) {
        throw std::invalid_argument("cmd_guided: front map resolution differs from config");
    }
    const std::string ckpt = config.checkpoint_path.empty()
                                     ? join(config.out_dir, "denoiser.ckpt")
                                     : config.checkpoint_path;
    const ToyDenoiser net = load_checkpoint(ckpt);
    const VarianceSchedule sched = config.make_schedule();

    const Mesh proxy = build_proxy(config);
    const Camera cam = base_camera(config, proxy);
    const NormalMap cond = rasterize(proxy, cam, 0.0);

    Rng rng = Rng(config.seed).fork(kStreamGuided);
    const ClampedDenoiser stable(net, sched);
    auto [front_signal, back_signal] =
            guided_dual_complete(to_signal(front_map), stable, &cond, sched, config.guidance, rng);
    (void)front_signal;

    GenerateOutput out;
    out.front = front_map;  // the known half is the input, bit for bit
    out.back = clamp01(from_signal(back_signal));
    fs::create_directories(config.out_dir);
    out.front_path = join(config.out_dir, "guided_front.nmap");
    out.back_path = join(config.out_dir, "guided_back.nmap");
    save_nmap(out.front, out.front_path);
    save_nmap(out.back, out.back_path);
    save_png16(out.back, join(config.out_dir, "guided_back.png"));
    return out;
}

std::vector<std::string> cmd_render(const PipelineConfig& config, const std::string& mesh_path) {
    config.check();
    const Mesh mesh = load_obj(mesh_path);
    const Mesh proxy = build_proxy(config);
    const Camera cam = base_camera(config, proxy);
    const auto ring = camera_ring(config.n_views, config.yaw_step_deg, cam);
    fs::create_directories(config.out_dir);
    std::vector<std::string> paths;
    for (size_t i = 0; i < ring.size(); ++i) {
        const NormalMap map = rasterize(mesh, ring[i], 0.0);
        char name[64];
        std::snprintf(name, sizeof(name), "view_%03zu.nmap", i);
        const std::string path = join(config.out_dir, name);
        save_nmap(map, path);
        std::snprintf(name, sizeof(name), "view_%03zu.png", i);
        save_png16(map, join(config.out_dir, name));
        paths.push_back(path);
    }
    return paths;
}

EvalReport cmd_eval(const PipelineConfig& config, const std::string& mesh_path,
                    const std::string& reference_path) {
    config.check();
    const Mesh mesh = load_obj(mesh_path);
    const Mesh proxy = build_proxy(config);
    const Camera cam = base_camera(config, proxy);
    const auto ring = camera_ring(config.n_views, config.yaw_step_deg, cam);

    EvalReport report;
    if (reference_path.size() > 4 &&
        reference_path.compare(reference_path.size() - 4, 4, ".obj") == 0) {
        const Mesh reference = load_obj(reference_path);
        report = evaluate_meshes(mesh, reference, ring, config.carve.alpha_threshold);
    } else {
        // directory of view_%03d.nmap renders
        std::vector<NormalMap> ref;
        for (size_t i = 0; i < ring.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "view_%03zu.nmap", i);
            ref.push_back(load_nmap(join(reference_path, name)));
        }
        report = evaluate_renders(render_ring(mesh, ring), ref, ring,
                                  config.carve.alpha_threshold);
    }
    fs::create_directories(config.out_dir);
    save_report(report, join(config.out_dir, "eval_report.txt"));
    return report;
}

std::string cmd_e2e(const PipelineConfig& config) {
    config.check();
    fs::create_directories(config.out_dir);
    std::vector<std::string> artifacts;

    auto stage = [&](const std::string& name, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            throw std::runtime_error("e2e: stage '" + name + "' failed: " + e.what());
        }
    };

    PipelineConfig c = config;
    c.dataset_dir = join(config.out_dir, "dataset");
    c.checkpoint_path = join(config.out_dir, "denoiser.ckpt");

    stage("synth-data", [&] { cmd_synth_data(c); });
    artifacts.push_back(join(c.dataset_dir, "index.txt"));
    stage("train", [&] { cmd_train(c); });
    artifacts.push_back(c.checkpoint_path);
    artifacts.push_back(join(c.out_dir, "train_loss.txt"));

    GenerateOutput gen;
    stage("generate", [&] { gen = cmd_generate(c); });
    artifacts.push_back(gen.front_path);
    artifacts.push_back(gen.back_path);

    CarveOutput carved;
    stage("carve", [&] { carved = cmd_carve(c, gen.front_path, gen.back_path); });
    artifacts.push_back(carved.obj_path);

    CarveOutput refined;
    stage("refine", [&] { refined = cmd_refine(c, carved.obj_path); });
    artifacts.push_back(refined.obj_path);

    stage("eval", [&] {
        // compare the final mesh against the generated duals on front/back views
        const Mesh mesh = load_obj(refined.obj_path);
        const Mesh proxy = build_proxy(c);
        const Camera front = base_camera(c, proxy);
        Camera back = front;
        back.yaw_deg += 180.0;
        const std::vector<Camera> duo = {front, back};
        const EvalReport report = evaluate_renders(
                render_ring(mesh, duo), {load_nmap(gen.front_path), load_nmap(gen.back_path)},
                duo, c.carve.alpha_threshold);
        save_report(report, join(c.out_dir, "report.txt"));
    });
    artifacts.push_back(join(c.out_dir, "report.txt"));

    const std::string manifest_path = join(c.out_dir, "manifest.txt");
    std::ofstream manifest(manifest_path);
    if (!manifest) throw std::runtime_error("e2e: cannot write manifest");
    manifest << "seed = " << c.seed << "\n";
    manifest << "resolution = " << c.resolution << "\n";
    for (const auto& path : artifacts) {
        manifest << hash_file(path) << "  " << fs::path(path).lexically_relative(c.out_dir).string()
                 << "\n";
    }
    return manifest_path;
}

}  // namespace ncarve
