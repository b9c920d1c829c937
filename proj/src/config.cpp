#include "ncarve/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ncarve {

VarianceSchedule PipelineConfig::make_schedule() const {
    if (beta_start > 0.0 && beta_end > 0.0) {
        return linear_schedule(timesteps, beta_start, beta_end);
    }
    return default_schedule(timesteps);
}

void PipelineConfig::check() const {
    if (!seed_set) throw std::invalid_argument("config: seed is mandatory");
    if (resolution < 8) throw std::invalid_argument("config: resolution below 8");
    if (n_views < 2 || n_views * yaw_step_deg > 360.0 + 1e-9) {
        throw std::invalid_argument("config: invalid view ring");
    }
    carve.check();
    arch.check();
    resample_params.perturb_step(timesteps);  // validates t0 and K
    if (guidance.dropout_prob < 0.0 || guidance.dropout_prob > 1.0) {
        throw std::invalid_argument("config: dropout probability outside [0,1]");
    }
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<int> parse_int_list(const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

}  // namespace

void apply_config_entry(PipelineConfig& c, const std::string& key, const std::string& value) {
    auto as_d = [&] { return std::stod(value); };
    auto as_i = [&] { return std::stoi(value); };

    if (key == "seed") {
        c.seed = std::stoull(value);
        c.seed_set = true;
    } else if (key == "resolution") c.resolution = as_i();
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "dataset_dir") c.dataset_dir = value;
    else if (key == "checkpoint") c.checkpoint_path = value;
    else if (key == "dataset_size") c.dataset_size = as_i();
    else if (key == "schedule.timesteps") c.timesteps = as_i();
    else if (key == "schedule.beta_start") c.beta_start = as_d();
    else if (key == "schedule.beta_end") c.beta_end = as_d();
    else if (key == "guidance.lambda") c.guidance.lambda = as_d();
    else if (key == "guidance.dropout_prob") c.guidance.dropout_prob = as_d();
    else if (key == "resample.t0") c.resample_params.t0 = as_d();
    else if (key == "resample.k") c.resample_params.repeats = as_i();
    else if (key == "ring.n_views") c.n_views = as_i();
    else if (key == "ring.yaw_step") c.yaw_step_deg = as_d();
    else if (key == "camera.scale") c.camera_scale = as_d();
    else if (key == "camera.pitch") c.camera_pitch_deg = as_d();
    else if (key == "proxy.kind") c.proxy_kind = value;
    else if (key == "proxy.radius") c.proxy_radius = as_d();
    else if (key == "proxy.height") c.proxy_height = as_d();
    else if (key == "proxy.arm_angle") c.proxy_arm_angle_deg = as_d();
    else if (key == "proxy.leg_angle") c.proxy_leg_angle_deg = as_d();
    else if (key == "proxy.subdivisions") c.proxy_subdivisions = as_i();
    else if (key == "carve.total_iterations") c.carve.total_iterations = as_i();
    else if (key == "carve.remesh_interval") c.carve.remesh_interval = as_i();
    else if (key == "carve.step_decay") c.carve.step_decay_per_remesh = as_d();
    else if (key == "carve.sides_decay") c.carve.sides_decay_per_remesh = as_d();
    else if (key == "carve.initial_vertices") c.carve.initial_vertices = as_i();
    else if (key == "carve.initial_step_size") c.carve.initial_step_size = as_d();
    else if (key == "carve.alpha_threshold") c.carve.alpha_threshold = as_d();
    else if (key == "carve.softness") c.carve.softness = as_d();
    else if (key == "carve.remesh_edge_scale") c.carve.remesh_edge_scale = as_d();
    else if (key == "carve.weight_normal") c.carve.weight_normal = as_d();
    else if (key == "carve.weight_mask") c.carve.weight_mask = as_d();
    else if (key == "carve.weight_sides") c.carve.weight_sides = as_d();
    else if (key == "carve.laplacian_start") c.carve.laplacian_start = as_d();
    else if (key == "carve.laplacian_end") c.carve.laplacian_end = as_d();
    else if (key == "carve.normal_reg_start") c.carve.normal_reg_start = as_d();
    else if (key == "carve.normal_reg_end") c.carve.normal_reg_end = as_d();
    else if (key == "carve.dump_dir") c.carve.dump_dir = value;
    else if (key == "refine.iterations") c.refine_iterations = as_i();
    else if (key == "train.epochs") c.train.epochs = as_i();
    else if (key == "train.batch_size") c.train.batch_size = as_i();
    else if (key == "train.learning_rate") c.train.learning_rate = as_d();
    else if (key == "train.dropout_prob") c.train.dropout_prob = as_d();
    else if (key == "arch.hidden") c.arch.hidden = parse_int_list(value);
    else if (key == "arch.temb_dim") c.arch.temb_dim = as_i();
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_config: cannot open " + path);
    PipelineConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("load_config: missing '=' at " + path + ":" +
                                     std::to_string(lineno));
        }
        apply_config_entry(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

}  // namespace ncarve
