#pragma once

#include <array>

#include "vcat/ad.hpp"
#include "vcat/image.hpp"
#include "vcat/rng.hpp"

#include <nlohmann/json.hpp>

namespace vcat::augment {

/// Branch probabilities and knobs of the stochastic augmentation pipeline.
/// Defaults are the pipeline's literal constants.
struct AugmentPolicy {
    float p_noise = 0.5f;
    float p_crop = 0.5f;
    float p_pad = 0.5f;
    float p_jpeg = 0.2f;
    float noise_scale_divisor = 4.0f;
    float jpeg_quality_lo = 0.5f;
    float jpeg_quality_hi = 1.0f;
    float crop_area_lo = 0.08f;
    float crop_area_hi = 1.0f;
    float crop_ratio_lo = 3.0f / 4.0f;
    float crop_ratio_hi = 4.0f / 3.0f;

    void validate() const;
};

void to_json(nlohmann::json& j, const AugmentPolicy& p);
void from_json(const nlohmann::json& j, AugmentPolicy& p);

struct CropRect {
    int y0 = 0, x0 = 0, h = 0, w = 0;
};

/// RandomResizedCrop sampling law: area fraction uniform in
/// [crop_area_lo, crop_area_hi], aspect ratio log-uniform in
/// [crop_ratio_lo, crop_ratio_hi], uniform position, center-crop fallback
/// after 10 failed draws.
CropRect sample_resized_crop(int H, int W, Rng& rng, const AugmentPolicy& pol);

// Standalone op forms. Each consumes rng draws in a fixed order, so a fixed
// seed replays bitwise.
ImageF gaussian_noise(const ImageF& x, float eps, Rng& rng,
                      float scale_divisor = 4.0f);
ImageF random_crop(const ImageF& x, Rng& rng, const AugmentPolicy& pol = {});
ImageF random_pad(const ImageF& x, int D, Rng& rng);
ImageF diff_jpeg(const ImageF& x, float quality);

/// Which branches fired in one pipeline invocation, for tests and manifests.
struct PipelineTrace {
    bool noise = false, crop = false, pad = false, jpeg = false;
    CropRect crop_rect;
    float jpeg_quality = 0.0f;
};

ImageF augment_pipeline(const ImageF& x_image, const ImageF& delta,
                        const AugmentPolicy& pol, int D, float eps, Rng& rng,
                        PipelineTrace* trace = nullptr);

// Graph builders used inside the optimization loop. x is an [h,w,3] node.
ad::Graph::Id diff_jpeg_op(ad::Graph& g, ad::Graph::Id x, float quality);
ad::Graph::Id pipeline_op(ad::Graph& g, ad::Graph::Id x_delta, float eps,
                          const AugmentPolicy& pol, int D, Rng& rng,
                          PipelineTrace* trace = nullptr);

/// libjpeg-compatible quantization table (row-major natural order) at
/// quality in (0,1]; quality=1 yields the all-ones table (no compression).
std::array<int, 64> quant_table(bool luma, float quality);

}  // namespace vcat::augment
