#pragma once

#include <cstdint>
#include <string>

#include "vcat/image.hpp"

namespace vcat::perturb {

/// The optimized offset delta plus its moving-average shadow. Both live in
/// continuous [0,1] pixel scale and stay inside the l-inf ball of radius eps;
/// quantization to integer depths happens only at export.
struct Perturbation {
    ImageF delta;
    ImageF delta_ma;
    float eps = 0.0f;
    int64_t step_count = 0;
    uint64_t seed = 0;

    static Perturbation zeros(int h, int w, float eps, uint64_t seed);
    bool invariants_hold() const;
};

struct PerturbedImage {
    ImageF pixels;  // all components in [0,1]
};

/// Componentwise clamp of delta into [-eps, eps]. Idempotent.
ImageF project_linf(const ImageF& delta, float eps);

/// clamp(image + delta, 0, 1). Shapes must match, image in [0,1].
PerturbedImage apply_perturbation(const ImageF& image, const ImageF& delta);

/// Keeps image + delta inside [0,1] exactly: delta' = clamp(delta, -image, 1-image).
ImageF clamp_valid(const ImageF& delta, const ImageF& image);

/// delta_ma * 0.99 + delta * 0.01.
ImageF ma_update(const ImageF& delta_ma, const ImageF& delta);

constexpr float kMaDecay = 0.99f;

struct ExportResult {
    std::string image_path;
    std::string manifest_path;
};

/// Writes clamp(base + delta_ma, 0, 1) losslessly (PNG, 8- or 16-bit) plus a
/// JSON sidecar manifest. The moving average is the shipped artifact.
ExportResult export_adversarial(const Perturbation& p, const ImageF& base,
                                const std::string& out_prefix, int bit_depth,
                                const std::string& scenario_id,
                                const std::vector<std::string>& surrogate_ids);

}  // namespace vcat::perturb
