#include "ncarve/eval.hpp"

#include "ncarve/raster.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ncarve {

ViewEval evaluate_view(const NormalMap& a, const NormalMap& b, double tau) {
    if (a.height != b.height || a.width != b.width) {
        throw std::invalid_argument("evaluate_view: resolution mismatch");
    }
    ViewEval ev;
    long inter = 0, uni = 0;
    double angle_sum = 0.0;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            const bool pa = a.at(3, y, x) > tau;
            const bool pb = b.at(3, y, x) > tau;
            uni += (pa || pb);
            if (pa && pb) {
                ++inter;
                const Vec3 na = decode_normal(Vec3(a.at(0, y, x), a.at(1, y, x), a.at(2, y, x)));
                const Vec3 nb = decode_normal(Vec3(b.at(0, y, x), b.at(1, y, x), b.at(2, y, x)));
                const double d = std::clamp(na.dot(nb), -1.0, 1.0);
                angle_sum += std::acos(d) * 180.0 / M_PI;
            }
        }
    }
    ev.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    if (inter > 0) ev.mean_angular_error_deg = angle_sum / static_cast<double>(inter);
    return ev;
}

EvalReport evaluate_renders(const std::vector<NormalMap>& a, const std::vector<NormalMap>& b,
                            const std::vector<Camera>& ring, double tau) {
    if (a.size() != b.size() || a.size() != ring.size()) {
        throw std::invalid_argument("evaluate_renders: view count mismatch");
    }
    EvalReport rep;
    double iou_sum = 0.0, angle_sum = 0.0;
    int angle_count = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        ViewEval ev = evaluate_view(a[i], b[i], tau);
        ev.yaw_deg = ring[i].yaw_deg;
        iou_sum += ev.iou;
        if (ev.mean_angular_error_deg) {
            angle_sum += *ev.mean_angular_error_deg;
            ++angle_count;
        }
        rep.views.push_back(ev);
    }
    rep.mean_iou = a.empty() ? 0.0 : iou_sum / static_cast<double>(a.size());
    if (angle_count > 0) rep.mean_angular_error_deg = angle_sum / angle_count;
    return rep;
}

EvalReport evaluate_meshes(const Mesh& mesh, const Mesh& reference,
                           const std::vector<Camera>& ring, double tau) {
    std::vector<NormalMap> a, b;
    a.reserve(ring.size());
    b.reserve(ring.size());
    for (const auto& cam : ring) {
        a.push_back(rasterize(mesh, cam, 0.0));
        b.push_back(rasterize(reference, cam, 0.0));
    }
    return evaluate_renders(a, b, ring, tau);
}

std::string EvalReport::to_string() const {
    std::ostringstream os;
    os.precision(6);
    os << "views = " << views.size() << "\n";
    for (size_t i = 0; i < views.size(); ++i) {
        os << "view." << i << ".yaw_deg = " << views[i].yaw_deg << "\n";
        os << "view." << i << ".iou = " << views[i].iou << "\n";
        os << "view." << i << ".angular_error_deg = ";
        if (views[i].mean_angular_error_deg) {
            os << *views[i].mean_angular_error_deg;
        } else {
            os << "absent";
        }
        os << "\n";
    }
    os << "summary.mean_iou = " << mean_iou << "\n";
    os << "summary.mean_angular_error_deg = ";
    if (mean_angular_error_deg) {
        os << *mean_angular_error_deg;
    } else {
        os << "absent";
    }
    os << "\n";
    return os.str();
}

void save_report(const EvalReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_report: cannot open " + path);
    f << report.to_string();
}

EvalReport load_report(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_report: cannot open " + path);
    EvalReport rep;
    std::string line;
    auto value_of = [](const std::string& l) { return l.substr(l.find(" = ") + 3); };
    while (std::getline(f, line)) {
        if (line.rfind("views = ", 0) == 0) {
            rep.views.resize(std::stoul(value_of(line)));
        } else if (line.rfind("view.", 0) == 0) {
            const size_t dot = line.find('.', 5);
            const size_t idx = std::stoul(line.substr(5, dot - 5));
            if (idx >= rep.views.size()) throw std::runtime_error("load_report: bad view index");
            const std::string field = line.substr(dot + 1, line.find(' ', dot) - dot - 1);
            const std::string value = value_of(line);
            if (field == "yaw_deg") {
                rep.views[idx].yaw_deg = std::stod(value);
            } else if (field == "iou") {
                rep.views[idx].iou = std::stod(value);
            } else if (field == "angular_error_deg" && value != "absent") {
                rep.views[idx].mean_angular_error_deg = std::stod(value);
            }
        } else if (line.rfind("summary.mean_iou", 0) == 0) {
            rep.mean_iou = std::stod(value_of(line));
        } else if (line.rfind("summary.mean_angular_error_deg", 0) == 0) {
            const std::string value = value_of(line);
            if (value != "absent") rep.mean_angular_error_deg = std::stod(value);
        }
    }
    return rep;
}

}  // namespace ncarve
