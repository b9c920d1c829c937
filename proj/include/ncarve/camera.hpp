#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <vector>

namespace ncarve {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Mat3 = Eigen::Matrix3d;

/// Weak-perspective yaw camera: orthographic projection after a yaw (and
/// optional pitch) rotation, with a global world-to-NDC scale. The camera at
/// yaw 0 looks down -z; camera-space +z points toward the viewer, so depth
/// comparisons keep the largest z.
struct Camera {
    double yaw_deg = 0.0;
    double pitch_deg = 0.0;
    double scale = 1.0;               // world units to NDC
    Vec2 principal_offset = Vec2::Zero();
    int height = 128;
    int width = 128;

    void check() const;

    /// world -> camera rotation
    Mat3 rotation() const;

    Vec3 to_camera(const Vec3& p) const { return rotation() * p; }

    /// NDC in [-1, 1]^2, y up
    Vec2 project(const Vec3& p_cam) const {
        return Vec2(scale * p_cam.x() + principal_offset.x(),
                    scale * p_cam.y() + principal_offset.y());
    }

    /// NDC -> pixel coordinates (x right, y down), pixel centers at +0.5
    Vec2 ndc_to_px(const Vec2& ndc) const {
        return Vec2((ndc.x() + 1.0) * 0.5 * width, (1.0 - ndc.y()) * 0.5 * height);
    }
};

/// n cameras stepped in yaw from the base camera; all other fields copied.
std::vector<Camera> camera_ring(int n_views, double yaw_step_deg, const Camera& base);

/// Index of the view rendered from the back of view i in an n-view ring.
inline int opposite_view(int i, int n_views) { return (i + n_views / 2) % n_views; }

}  // namespace ncarve
