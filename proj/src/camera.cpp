#include "ncarve/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace ncarve {

void Camera::check() const {
    if (scale <= 0.0) throw std::invalid_argument("camera: scale must be positive");
    if (height < 8 || width < 8) throw std::invalid_argument("camera: resolution below 8x8");
}

Mat3 Camera::rotation() const {
    const double yaw = yaw_deg * M_PI / 180.0;
    const double pitch = pitch_deg * M_PI / 180.0;
    Mat3 ry, rx;
    ry << std::cos(yaw), 0.0, -std::sin(yaw),
          0.0, 1.0, 0.0,
          std::sin(yaw), 0.0, std::cos(yaw);
    rx << 1.0, 0.0, 0.0,
          0.0, std::cos(pitch), -std::sin(pitch),
          0.0, std::sin(pitch), std::cos(pitch);
    return rx * ry;
}

std::vector<Camera> camera_ring(int n_views, double yaw_step_deg, const Camera& base) {
    if (n_views <= 0) throw std::invalid_argument("camera_ring: n_views must be positive");
    if (n_views * yaw_step_deg > 360.0 + 1e-9) {
        throw std::invalid_argument("camera_ring: ring exceeds 360 degrees");
    }
    std::vector<Camera> ring(n_views, base);
    for (int i = 0; i < n_views; ++i) ring[i].yaw_deg = base.yaw_deg + i * yaw_step_deg;
    return ring;
}

}  // namespace ncarve
