#include "ncarve/dataset.hpp"

#include "ncarve/raster.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ncarve {

std::vector<TrainExample> synth_dataset(int n, int resolution, const ProxyRanges& ranges,
                                        Rng& rng) {
    if (n < 1) throw std::invalid_argument("synth_dataset: need at least one example");
    if (resolution < 8 || resolution > 64) {
        throw std::invalid_argument("synth_dataset: resolution must be in [8, 64]");
    }

    Camera front;
    front.scale = ranges.camera_scale;
    front.height = front.width = resolution;
    Camera back = front;
    back.yaw_deg = 180.0;

    std::vector<TrainExample> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        ProxyParams pp;
        pp.subdivisions = ranges.subdivisions;
        if (i % 2 == 0) {
            pp.kind = ProxyKind::Sphere;
            pp.radius = rng.uniform(ranges.min_radius, ranges.max_radius);
        } else {
            pp.kind = ProxyKind::Capsule;
            pp.radius = rng.uniform(0.55 * ranges.min_radius, 0.7 * ranges.max_radius);
            const double half = rng.uniform(ranges.min_half_length, ranges.max_half_length);
            const double tilt = rng.uniform(-ranges.max_tilt_deg, ranges.max_tilt_deg) *
                                M_PI / 180.0;
            // tilt in the image plane so the condition captures it
            const Vec3 axis(std::sin(tilt), std::cos(tilt), 0.0);
            pp.axis_a = -half * axis;
            pp.axis_b = half * axis;
        }
        if (pp.kind == ProxyKind::Sphere && pp.radius <= 0.0) {
            throw std::invalid_argument("synth_dataset: degenerate proxy parameters");
        }

        const Mesh proxy = make_body_proxy(pp);
        const Mesh clothed = add_surface_bumps(proxy, ranges.bumps, rng);

        TrainExample ex;
        ex.cond = rasterize(proxy, front, 0.0);
        ex.front = rasterize(clothed, front, 0.0);
        ex.back = rasterize(clothed, back, 0.0);
        out.push_back(std::move(ex));
    }
    return out;
}

void save_dataset(const std::vector<TrainExample>& dataset, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream index(dir + "/index.txt");
    if (!index) throw std::runtime_error("save_dataset: cannot open index in " + dir);
    index << "count = " << dataset.size() << "\n";
    if (!dataset.empty()) {
        index << "resolution = " << dataset[0].front.height << "\n";
    }
    char name[64];
    for (size_t i = 0; i < dataset.size(); ++i) {
        std::snprintf(name, sizeof(name), "ex_%04zu", i);
        save_nmap(dataset[i].front, dir + "/" + name + "_front.nmap");
        save_nmap(dataset[i].back, dir + "/" + name + "_back.nmap");
        save_nmap(dataset[i].cond, dir + "/" + name + "_cond.nmap");
        index << name << "\n";
    }
}

std::vector<TrainExample> load_dataset(const std::string& dir) {
    std::ifstream index(dir + "/index.txt");
    if (!index) throw std::runtime_error("load_dataset: cannot open index in " + dir);
    std::string line;
    size_t count = 0;
    std::vector<std::string> names;
    while (std::getline(index, line)) {
        if (line.rfind("count = ", 0) == 0) {
            count = std::stoul(line.substr(8));
        } else if (line.rfind("ex_", 0) == 0) {
            names.push_back(line);
        }
    }
    if (names.size() != count) {
        throw std::runtime_error("load_dataset: index inconsistent in " + dir);
    }
    std::vector<TrainExample> out;
    out.reserve(count);
    for (const auto& name : names) {
        TrainExample ex;
        ex.front = load_nmap(dir + "/" + name + "_front.nmap");
        ex.back = load_nmap(dir + "/" + name + "_back.nmap");
        ex.cond = load_nmap(dir + "/" + name + "_cond.nmap");
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace ncarve
