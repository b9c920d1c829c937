#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <string>
#include <vector>

namespace ncarve {

using Vec3 = Eigen::Vector3d;

/// Planar multi-channel image, double precision, row-major per channel.
/// Normal maps are the 4-channel case: channels 0-2 hold rgb = (n+1)/2 for a
/// camera-space unit normal n, channel 3 holds alpha coverage in [0,1].
/// Diffusion samples reuse the same container with 8 channels (front || back).
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Image() = default;
    Image(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          data(static_cast<size_t>(c) * h * w, fill) {}

    double& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }

    size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

using NormalMap = Image;  // 4 channels

constexpr double kBackgroundGray = 0.5;  // rgb of the zero normal

/// rgb = (n + 1) / 2. Requires |n| in [0.9, 1.1]; input is renormalized.
Vec3 encode_normal(const Vec3& n);
/// n = normalize(2 rgb - 1). Requires rgb components in [0, 1].
Vec3 decode_normal(const Vec3& rgb);

/// Blank map: alpha 0 everywhere, rgb at the background constant.
NormalMap make_background(int height, int width);

NormalMap front_half(const Image& dual);   // channels 0-3
NormalMap back_half(const Image& dual);    // channels 4-7
Image concat_dual(const NormalMap& front, const NormalMap& back);

Image hflip(const Image& img);

/// Clamp every channel into [0,1] (diffusion samples are unconstrained).
Image clamp01(const Image& img);

/// Map [0,1] image data to the [-1,1] signal range diffusion runs in,
/// and back. from_signal does not clamp.
Image to_signal(const Image& img);
Image from_signal(const Image& img);

/// Intersection-over-union of alpha masks thresholded at tau.
double mask_iou(const Image& a, const Image& b, double tau, int alpha_channel = 3);

/// Lossless float32 container: magic "NMAP", u32 height, u32 width,
/// u32 channels, then channel-interleaved row-major float32 data.
void save_nmap(const Image& img, const std::string& path);
Image load_nmap(const std::string& path);

/// 16-bit RGBA PNG for interchange. Values clamped to [0,1]; maps with more
/// than 4 channels are rejected.
void save_png16(const Image& img, const std::string& path);
Image load_png16(const std::string& path);

}  // namespace ncarve
