#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vcat {

/// Planar-free HWC float image, values nominally in [0,1].
struct ImageF {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<float> v;

    ImageF() = default;
    ImageF(int h_, int w_, int c_, float fill = 0.0f)
        : h(h_), w(w_), c(c_), v(static_cast<size_t>(h_) * w_ * c_, fill) {}

    float& at(int y, int x, int ch) { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
    float at(int y, int x, int ch) const { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }

    size_t size() const { return v.size(); }
    bool same_shape(const ImageF& o) const { return h == o.h && w == o.w && c == o.c; }
};

ImageF clamp01(const ImageF& x);
ImageF clamp_range(const ImageF& x, float lo, float hi);

/// out = a + b, shapes must match.
ImageF add(const ImageF& a, const ImageF& b);
/// out = a - b, shapes must match.
ImageF sub(const ImageF& a, const ImageF& b);

float max_abs(const ImageF& x);
float max_abs_diff(const ImageF& a, const ImageF& b);

/// Bilinear resize (antialias off, half-pixel centers). Non-differentiable
/// utility path; the optimization pipeline uses the graph op in ad.hpp.
ImageF resize_bilinear(const ImageF& x, int out_h, int out_w);

/// PSNR in dB between two same-shaped images on a [0,1] scale.
double psnr(const ImageF& a, const ImageF& b);

/// Lossless PNG IO. bit_depth is 8 or 16 on write; reads promote to float.
ImageF read_png(const std::string& path);
void write_png(const std::string& path, const ImageF& img, int bit_depth = 8);

/// Quantize to the PNG integer grid without touching disk (dedicated for
/// export bound checks and cache hashing).
ImageF quantize(const ImageF& img, int bit_depth);

}  // namespace vcat
