#include "vcat/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vcat::augment {

using ad::Graph;

void AugmentPolicy::validate() const {
    auto prob = [](float p) { return p >= 0.0f && p <= 1.0f; };
    if (!prob(p_noise) || !prob(p_crop) || !prob(p_pad) || !prob(p_jpeg))
        throw std::invalid_argument("augment: branch probabilities must lie in [0,1]");
    if (jpeg_quality_lo <= 0.0f || jpeg_quality_hi > 1.0f || jpeg_quality_lo > jpeg_quality_hi)
        throw std::invalid_argument("augment: jpeg quality range must be within (0,1]");
    if (noise_scale_divisor <= 0.0f)
        throw std::invalid_argument("augment: noise_scale_divisor must be positive");
    if (crop_area_lo <= 0.0f || crop_area_hi > 1.0f || crop_area_lo > crop_area_hi)
        throw std::invalid_argument("augment: crop area range invalid");
}

void to_json(nlohmann::json& j, const AugmentPolicy& p) {
    j = nlohmann::json{{"p_noise", p.p_noise},
                       {"p_crop", p.p_crop},
                       {"p_pad", p.p_pad},
                       {"p_jpeg", p.p_jpeg},
                       {"noise_scale_divisor", p.noise_scale_divisor},
                       {"jpeg_quality_lo", p.jpeg_quality_lo},
                       {"jpeg_quality_hi", p.jpeg_quality_hi},
                       {"crop_area_lo", p.crop_area_lo},
                       {"crop_area_hi", p.crop_area_hi},
                       {"crop_ratio_lo", p.crop_ratio_lo},
                       {"crop_ratio_hi", p.crop_ratio_hi}};
}

void from_json(const nlohmann::json& j, AugmentPolicy& p) {
    AugmentPolicy d;
    p.p_noise = j.value("p_noise", d.p_noise);
    p.p_crop = j.value("p_crop", d.p_crop);
    p.p_pad = j.value("p_pad", d.p_pad);
    p.p_jpeg = j.value("p_jpeg", d.p_jpeg);
    p.noise_scale_divisor = j.value("noise_scale_divisor", d.noise_scale_divisor);
    p.jpeg_quality_lo = j.value("jpeg_quality_lo", d.jpeg_quality_lo);
    p.jpeg_quality_hi = j.value("jpeg_quality_hi", d.jpeg_quality_hi);
    p.crop_area_lo = j.value("crop_area_lo", d.crop_area_lo);
    p.crop_area_hi = j.value("crop_area_hi", d.crop_area_hi);
    p.crop_ratio_lo = j.value("crop_ratio_lo", d.crop_ratio_lo);
    p.crop_ratio_hi = j.value("crop_ratio_hi", d.crop_ratio_hi);
}

CropRect sample_resized_crop(int H, int W, Rng& rng, const AugmentPolicy& pol) {
    if (H < 8 || W < 8) throw std::invalid_argument("random_crop: input smaller than 8x8");
    const double area = static_cast<double>(H) * W;
    const double log_lo = std::log(pol.crop_ratio_lo), log_hi = std::log(pol.crop_ratio_hi);
    for (int attempt = 0; attempt < 10; ++attempt) {
        double target_area = area * rng.uniform(pol.crop_area_lo, pol.crop_area_hi);
        double ratio = std::exp(rng.uniform(log_lo, log_hi));
        int w = static_cast<int>(std::lround(std::sqrt(target_area * ratio)));
        int h = static_cast<int>(std::lround(std::sqrt(target_area / ratio)));
        if (w > 0 && w <= W && h > 0 && h <= H) {
            int y0 = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(H - h + 1)));
            int x0 = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(W - w + 1)));
            return {y0, x0, h, w};
        }
    }
    // Center-crop fallback with the aspect ratio clamped into range.
    double in_ratio = static_cast<double>(W) / H;
    int h = H, w = W;
    if (in_ratio < pol.crop_ratio_lo) {
        w = W;
        h = static_cast<int>(std::lround(w / pol.crop_ratio_lo));
    } else if (in_ratio > pol.crop_ratio_hi) {
        h = H;
        w = static_cast<int>(std::lround(h * pol.crop_ratio_hi));
    }
    return {(H - h) / 2, (W - w) / 2, h, w};
}

namespace {

std::vector<float> draw_normal(size_t n, Rng& rng) {
    std::vector<float> z(n);
    for (float& v : z) v = static_cast<float>(rng.normal());
    return z;
}

ImageF from_node(const Graph& g, Graph::Id id) {
    const auto& s = g.shape(id);
    ImageF out(s[0], s[1], s.size() == 3 ? s[2] : 1);
    auto v = g.val(id);
    std::copy(v.begin(), v.end(), out.v.begin());
    return out;
}

}  // namespace

ImageF gaussian_noise(const ImageF& x, float eps, Rng& rng, float scale_divisor) {
    if (eps <= 0.0f) throw std::invalid_argument("gaussian_noise: eps must be positive");
    ImageF out = x;
    const float sd = eps / scale_divisor;
    for (float& v : out.v) v = v + sd * static_cast<float>(rng.normal());
    return clamp01(out);
}

ImageF random_crop(const ImageF& x, Rng& rng, const AugmentPolicy& pol) {
    CropRect r = sample_resized_crop(x.h, x.w, rng, pol);
    ImageF out(r.h, r.w, x.c);
    for (int y = 0; y < r.h; ++y)
        for (int xx = 0; xx < r.w; ++xx)
            for (int ch = 0; ch < x.c; ++ch) out.at(y, xx, ch) = x.at(r.y0 + y, r.x0 + xx, ch);
    return out;
}

ImageF random_pad(const ImageF& x, int D, Rng& rng) {
    if (D <= 0) throw std::invalid_argument("random_pad: D must be positive");
    int top = 0, bottom = 0, left = 0, right = 0;
    if (x.h < D) {
        int total = D - x.h;
        top = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(total + 1)));
        bottom = total - top;
    }
    if (x.w < D) {
        int total = D - x.w;
        left = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(total + 1)));
        right = total - left;
    }
    if (top == 0 && bottom == 0 && left == 0 && right == 0) return x;
    ImageF out(x.h + top + bottom, x.w + left + right, x.c, 0.0f);
    for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx)
            for (int ch = 0; ch < x.c; ++ch) out.at(top + y, left + xx, ch) = x.at(y, xx, ch);
    return out;
}

ImageF diff_jpeg(const ImageF& x, float quality) {
    Graph g;
    Graph::Id in = g.constant({x.h, x.w, x.c}, x.v);
    return from_node(g, diff_jpeg_op(g, in, quality));
}

std::array<int, 64> quant_table(bool luma, float quality) {
    if (quality <= 0.0f || quality > 1.0f)
        throw std::invalid_argument("diff_jpeg: quality must lie in (0,1]");
    static const int kLuma[64] = {
        16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
    static const int kChroma[64] = {
        17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
        24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};
    int q = std::clamp(static_cast<int>(std::lround(quality * 100.0f)), 1, 100);
    long scale = q < 50 ? 5000 / q : 200 - 2 * q;
    std::array<int, 64> out{};
    const int* base = luma ? kLuma : kChroma;
    for (int i = 0; i < 64; ++i) {
        long v = (base[i] * scale + 50) / 100;
        out[static_cast<size_t>(i)] = static_cast<int>(std::clamp(v, 1L, 255L));
    }
    return out;
}

Graph::Id diff_jpeg_op(Graph& g, Graph::Id x, float quality) {
    const auto& s = g.shape(x);
    if (s.size() != 3 || s[2] != 3) throw std::invalid_argument("diff_jpeg: expects [h,w,3]");
    const int h = s[0], w = s[1];
    const auto ql = quant_table(true, quality);
    const auto qc = quant_table(false, quality);

    // To centered YCbCr on the 0..255 scale.
    static const float kToYcc[9] = {0.299f,     0.587f,     0.114f,      //
                                    -0.168736f, -0.331264f, 0.5f,        //
                                    0.5f,       -0.418688f, -0.081312f};
    static const float kToYccBias[3] = {-128.0f, 0.0f, 0.0f};
    static const float kToRgb[9] = {1.0f, 0.0f,       1.402f,     //
                                    1.0f, -0.344136f, -0.714136f,  //
                                    1.0f, 1.772f,     0.0f};
    static const float kToRgbBias[3] = {128.0f, 128.0f, 128.0f};

    Graph::Id ycc = g.color_transform(g.scale(x, 255.0f), kToYcc, kToYccBias);

    const int h8 = (h + 7) / 8 * 8, w8 = (w + 7) / 8 * 8;
    auto plane_quant = [&](Graph::Id plane, const std::array<int, 64>& qt) {
        if (h8 != h || w8 != w) plane = g.pad_replicate2d(plane, h8 - h, w8 - w);
        Graph::Id coef = g.dct8x8(plane, /*forward=*/true);
        // Tile the table over the plane, once as reciprocal, once direct.
        std::vector<float> recip(static_cast<size_t>(h8) * w8), direct(recip.size());
        for (int y = 0; y < h8; ++y)
            for (int xx = 0; xx < w8; ++xx) {
                float qv = static_cast<float>(qt[static_cast<size_t>(y % 8) * 8 + (xx % 8)]);
                recip[static_cast<size_t>(y) * w8 + xx] = 1.0f / qv;
                direct[static_cast<size_t>(y) * w8 + xx] = qv;
            }
        Graph::Id qd = g.soft_round(g.mul(coef, g.constant({h8, w8}, std::move(recip))));
        Graph::Id deq = g.mul(qd, g.constant({h8, w8}, std::move(direct)));
        Graph::Id rec = g.dct8x8(deq, /*forward=*/false);
        if (h8 != h || w8 != w)
            rec = g.reshape(g.crop2d(g.reshape(rec, {h8, w8, 1}), 0, 0, h, w), {h, w});
        return rec;
    };

    Graph::Id yr = plane_quant(g.split_channel(ycc, 0), ql);
    Graph::Id cb = plane_quant(g.split_channel(ycc, 1), qc);
    Graph::Id cr = plane_quant(g.split_channel(ycc, 2), qc);
    Graph::Id rgb = g.color_transform(g.merge_channels(yr, cb, cr), kToRgb, kToRgbBias);
    return g.clamp(g.scale(rgb, 1.0f / 255.0f), 0.0f, 1.0f);
}

Graph::Id pipeline_op(Graph& g, Graph::Id x_delta, float eps, const AugmentPolicy& pol,
                      int D, Rng& rng, PipelineTrace* trace) {
    pol.validate();
    if (D <= 0) throw std::invalid_argument("augment_pipeline: D must be positive");
    PipelineTrace local;
    PipelineTrace& tr = trace ? *trace : local;
    Graph::Id x = g.clamp(x_delta, 0.0f, 1.0f);

    if (rng.uniform() < pol.p_noise) {
        tr.noise = true;
        const auto& s = g.shape(x);
        size_t n = static_cast<size_t>(s[0]) * s[1] * s[2];
        Graph::Id z = g.constant({s[0], s[1], s[2]}, draw_normal(n, rng));
        x = g.clamp(g.add(x, g.scale(z, eps / pol.noise_scale_divisor)), 0.0f, 1.0f);
    }
    if (rng.uniform() < pol.p_crop) {
        tr.crop = true;
        const auto& s = g.shape(x);
        CropRect r = sample_resized_crop(s[0], s[1], rng, pol);
        tr.crop_rect = r;
        x = g.crop2d(x, r.y0, r.x0, r.h, r.w);
    }
    if (rng.uniform() < pol.p_pad) {
        tr.pad = true;
        const auto& s = g.shape(x);
        int top = 0, bottom = 0, left = 0, right = 0;
        if (s[0] < D) {
            int total = D - s[0];
            top = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(total + 1)));
            bottom = total - top;
        }
        if (s[1] < D) {
            int total = D - s[1];
            left = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(total + 1)));
            right = total - left;
        }
        if (top || bottom || left || right) x = g.pad2d(x, top, bottom, left, right, 0.0f);
    }
    if (rng.uniform() < pol.p_jpeg) {
        tr.jpeg = true;
        float quality = static_cast<float>(rng.uniform(pol.jpeg_quality_lo, pol.jpeg_quality_hi));
        tr.jpeg_quality = quality;
        x = diff_jpeg_op(g, x, quality);
    }
    const auto& s = g.shape(x);
    if (s[0] != D || s[1] != D) x = g.resize_bilinear(x, D, D);
    return x;
}

ImageF augment_pipeline(const ImageF& x_image, const ImageF& delta, const AugmentPolicy& pol,
                        int D, float eps, Rng& rng, PipelineTrace* trace) {
    if (!x_image.same_shape(delta))
        throw std::invalid_argument("augment_pipeline: image/delta shape mismatch");
    Graph g;
    Graph::Id xd = g.constant({x_image.h, x_image.w, x_image.c}, add(x_image, delta).v);
    return from_node(g, pipeline_op(g, xd, eps, pol, D, rng, trace));
}

}  // namespace vcat::augment
