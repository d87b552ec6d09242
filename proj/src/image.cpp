#include "vcat/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace vcat {

ImageF clamp01(const ImageF& x) { return clamp_range(x, 0.0f, 1.0f); }

ImageF clamp_range(const ImageF& x, float lo, float hi) {
    ImageF out = x;
    for (float& p : out.v) p = std::min(hi, std::max(lo, p));
    return out;
}

ImageF add(const ImageF& a, const ImageF& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("image add: shape mismatch");
    ImageF out = a;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
    return out;
}

ImageF sub(const ImageF& a, const ImageF& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("image sub: shape mismatch");
    ImageF out = a;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.v[i];
    return out;
}

float max_abs(const ImageF& x) {
    float m = 0.0f;
    for (float p : x.v) m = std::max(m, std::fabs(p));
    return m;
}

float max_abs_diff(const ImageF& a, const ImageF& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    float m = 0.0f;
    for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::fabs(a.v[i] - b.v[i]));
    return m;
}

ImageF resize_bilinear(const ImageF& x, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize: non-positive output size");
    ImageF out(out_h, out_w, x.c);
    const float sy = static_cast<float>(x.h) / out_h;
    const float sx = static_cast<float>(x.w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        float fy = (oy + 0.5f) * sy - 0.5f;
        int y0 = static_cast<int>(std::floor(fy));
        float wy = fy - y0;
        int y0c = std::clamp(y0, 0, x.h - 1);
        int y1c = std::clamp(y0 + 1, 0, x.h - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            float fx = (ox + 0.5f) * sx - 0.5f;
            int x0 = static_cast<int>(std::floor(fx));
            float wx = fx - x0;
            int x0c = std::clamp(x0, 0, x.w - 1);
            int x1c = std::clamp(x0 + 1, 0, x.w - 1);
            for (int ch = 0; ch < x.c; ++ch) {
                float v00 = x.at(y0c, x0c, ch), v01 = x.at(y0c, x1c, ch);
                float v10 = x.at(y1c, x0c, ch), v11 = x.at(y1c, x1c, ch);
                out.at(oy, ox, ch) = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                     wy * ((1 - wx) * v10 + wx * v11);
            }
        }
    }
    return out;
}

double psnr(const ImageF& a, const ImageF& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        double d = static_cast<double>(a.v[i]) - b.v[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.v.size());
    if (mse <= 0.0) return 1e9;  // identical
    return 10.0 * std::log10(1.0 / mse);
}

ImageF quantize(const ImageF& img, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("quantize: depth must be 8 or 16");
    const float maxv = bit_depth == 8 ? 255.0f : 65535.0f;
    ImageF out = img;
    for (float& p : out.v) {
        float q = std::round(std::min(1.0f, std::max(0.0f, p)) * maxv);
        p = q / maxv;
    }
    return out;
}

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

ImageF read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("read_png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("read_png: init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("read_png: info init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: decode error in " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);

    // Normalize everything to 8- or 16-bit RGB.
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);  // little-endian reads below
    png_read_update_info(png, info);
    depth = png_get_bit_depth(png, info);

    ImageF img(static_cast<int>(h), static_cast<int>(w), 3);
    const size_t stride = png_get_rowbytes(png, info);
    std::vector<uint8_t> row(stride);
    const float maxv = depth == 16 ? 65535.0f : 255.0f;
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                float val;
                if (depth == 16) {
                    uint16_t raw;
                    std::memcpy(&raw, &row[(x * 3 + ch) * 2], 2);
                    val = raw / maxv;
                } else {
                    val = row[x * 3 + ch] / maxv;
                }
                img.at(static_cast<int>(y), static_cast<int>(x), ch) = val;
            }
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::string& path, const ImageF& img, int bit_depth) {
    if (img.c != 3) throw std::invalid_argument("write_png: expects 3 channels");
    if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("write_png: depth must be 8 or 16");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("write_png: cannot open " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("write_png: init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("write_png: info init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: encode error for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.w, img.h, bit_depth, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const float maxv = bit_depth == 8 ? 255.0f : 65535.0f;
    if (bit_depth == 8) {
        std::vector<uint8_t> row(static_cast<size_t>(img.w) * 3);
        for (int y = 0; y < img.h; ++y) {
            for (int x = 0; x < img.w; ++x)
                for (int ch = 0; ch < 3; ++ch) {
                    float p = std::min(1.0f, std::max(0.0f, img.at(y, x, ch)));
                    row[x * 3 + ch] = static_cast<uint8_t>(std::lround(p * maxv));
                }
            png_write_row(png, row.data());
        }
    } else {
        std::vector<uint8_t> row(static_cast<size_t>(img.w) * 6);
        for (int y = 0; y < img.h; ++y) {
            for (int x = 0; x < img.w; ++x)
                for (int ch = 0; ch < 3; ++ch) {
                    float p = std::min(1.0f, std::max(0.0f, img.at(y, x, ch)));
                    uint16_t q = static_cast<uint16_t>(std::lround(p * maxv));
                    // PNG is big-endian on the wire
                    row[(x * 3 + ch) * 2] = static_cast<uint8_t>(q >> 8);
                    row[(x * 3 + ch) * 2 + 1] = static_cast<uint8_t>(q & 0xff);
                }
            png_write_row(png, row.data());
        }
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace vcat
