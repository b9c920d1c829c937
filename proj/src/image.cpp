#include "ncarve/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ncarve {

Vec3 encode_normal(const Vec3& n) {
    const double len = n.norm();
    if (len < 0.9 || len > 1.1) {
        throw std::invalid_argument("encode_normal: |n| = " + std::to_string(len) +
                                    " outside [0.9, 1.1]");
    }
    const Vec3 u = n / len;
    return 0.5 * (u + Vec3::Ones());
}

Vec3 decode_normal(const Vec3& rgb) {
    for (int i = 0; i < 3; ++i) {
        if (rgb[i] < 0.0 || rgb[i] > 1.0) {
            throw std::invalid_argument("decode_normal: rgb component outside [0, 1]");
        }
    }
    Vec3 n = 2.0 * rgb - Vec3::Ones();
    const double len = n.norm();
    if (len < 1e-12) return Vec3(0, 0, 0);
    return n / len;
}

NormalMap make_background(int height, int width) {
    NormalMap m(4, height, width, 0.0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) m.at(c, y, x) = kBackgroundGray;
    return m;
}

NormalMap front_half(const Image& dual) {
    if (dual.channels != 8) throw std::invalid_argument("front_half: expected 8 channels");
    NormalMap out(4, dual.height, dual.width);
    std::copy(dual.data.begin(), dual.data.begin() + out.size(), out.data.begin());
    return out;
}

NormalMap back_half(const Image& dual) {
    if (dual.channels != 8) throw std::invalid_argument("back_half: expected 8 channels");
    NormalMap out(4, dual.height, dual.width);
    std::copy(dual.data.begin() + out.size(), dual.data.end(), out.data.begin());
    return out;
}

Image concat_dual(const NormalMap& front, const NormalMap& back) {
    if (!front.same_shape(back) || front.channels != 4) {
        throw std::invalid_argument("concat_dual: inputs must be matching 4-channel maps");
    }
    Image dual(8, front.height, front.width);
    std::copy(front.data.begin(), front.data.end(), dual.data.begin());
    std::copy(back.data.begin(), back.data.end(), dual.data.begin() + front.size());
    return dual;
}

Image hflip(const Image& img) {
    Image out(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
    return out;
}

Image clamp01(const Image& img) {
    Image out = img;
    for (auto& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

Image to_signal(const Image& img) {
    Image out = img;
    for (auto& v : out.data) v = 2.0 * v - 1.0;
    return out;
}

Image from_signal(const Image& img) {
    Image out = img;
    for (auto& v : out.data) v = 0.5 * (v + 1.0);
    return out;
}

double mask_iou(const Image& a, const Image& b, double tau, int alpha_channel) {
    if (a.height != b.height || a.width != b.width) {
        throw std::invalid_argument("mask_iou: resolution mismatch");
    }
    long inter = 0, uni = 0;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            const bool pa = a.at(alpha_channel, y, x) > tau;
            const bool pb = b.at(alpha_channel, y, x) > tau;
            inter += (pa && pb);
            uni += (pa || pb);
        }
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

void write_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    f.write(reinterpret_cast<char*>(b), 4);
}

uint32_t read_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_nmap(const Image& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_nmap: cannot open " + path);
    f.write("NMAP", 4);
    write_u32(f, static_cast<uint32_t>(img.height));
    write_u32(f, static_cast<uint32_t>(img.width));
    write_u32(f, static_cast<uint32_t>(img.channels));
    std::vector<float> row(static_cast<size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                row[static_cast<size_t>(x) * img.channels + c] =
                        static_cast<float>(img.at(c, y, x));
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!f) throw std::runtime_error("save_nmap: write failed for " + path);
}

Image load_nmap(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_nmap: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "NMAP", 4) != 0) {
        throw std::runtime_error("load_nmap: bad magic in " + path);
    }
    const uint32_t h = read_u32(f);
    const uint32_t w = read_u32(f);
    const uint32_t c = read_u32(f);
    if (!f || h == 0 || w == 0 || c == 0 || c > 16 || h > 1 << 16 || w > 1 << 16) {
        throw std::runtime_error("load_nmap: bad header in " + path);
    }
    Image img(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
    std::vector<float> row(static_cast<size_t>(w) * c);
    for (uint32_t y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()),
               static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!f) throw std::runtime_error("load_nmap: truncated file " + path);
        for (uint32_t x = 0; x < w; ++x)
            for (uint32_t ch = 0; ch < c; ++ch)
                img.at(static_cast<int>(ch), static_cast<int>(y), static_cast<int>(x)) =
                        row[static_cast<size_t>(x) * c + ch];
    }
    return img;
}

void save_png16(const Image& img, const std::string& path) {
    if (img.channels > 4) throw std::invalid_argument("save_png16: more than 4 channels");
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("save_png16: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        std::fclose(fp);
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("save_png16: libpng failure for " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, img.width, img.height, 16, PNG_COLOR_TYPE_RGBA,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<uint16_t> row(static_cast<size_t>(img.width) * 4);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 4; ++c) {
                double v = c < img.channels ? img.at(c, y, x) : (c == 3 ? 1.0 : 0.0);
                v = std::clamp(v, 0.0, 1.0);
                uint16_t q = static_cast<uint16_t>(std::lround(v * 65535.0));
                // PNG is big-endian
                row[static_cast<size_t>(x) * 4 + c] = static_cast<uint16_t>((q >> 8) | (q << 8));
            }
        }
        png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

Image load_png16(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("load_png16: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        std::fclose(fp);
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("load_png16: libpng failure for " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_expand(png);
    if (png_get_bit_depth(png, info) < 16) png_set_expand_16(png);
    png_byte color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_GRAY ||
        color == PNG_COLOR_TYPE_PALETTE) {
        png_set_add_alpha(png, 0xffff, PNG_FILLER_AFTER);
    }
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    Image img(4, h, w);
    std::vector<uint16_t> row(static_cast<size_t>(w) * 4);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, reinterpret_cast<png_bytep>(row.data()), nullptr);
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 4; ++c) {
                uint16_t q = row[static_cast<size_t>(x) * 4 + c];
                q = static_cast<uint16_t>((q >> 8) | (q << 8));
                img.at(c, y, x) = static_cast<double>(q) / 65535.0;
            }
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

}  // namespace ncarve
