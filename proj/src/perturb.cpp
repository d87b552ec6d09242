#include "vcat/perturb.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "vcat/hash.hpp"

namespace vcat::perturb {

using nlohmann::json;

Perturbation Perturbation::zeros(int h, int w, float eps, uint64_t seed) {
    if (eps <= 0.0f) throw std::invalid_argument("perturbation: eps must be positive");
    Perturbation p;
    p.delta = ImageF(h, w, 3, 0.0f);
    p.delta_ma = p.delta;
    p.eps = eps;
    p.step_count = 0;
    p.seed = seed;
    return p;
}

bool Perturbation::invariants_hold() const {
    if (!delta.same_shape(delta_ma)) return false;
    if (step_count < 0) return false;
    const float slack = eps * 1e-6f;
    return max_abs(delta) <= eps + slack && max_abs(delta_ma) <= eps + slack;
}

ImageF project_linf(const ImageF& delta, float eps) {
    if (eps <= 0.0f) throw std::invalid_argument("project_linf: eps must be positive");
    return clamp_range(delta, -eps, eps);
}

PerturbedImage apply_perturbation(const ImageF& image, const ImageF& delta) {
    if (!image.same_shape(delta)) throw std::invalid_argument("apply_perturbation: shape mismatch");
    return PerturbedImage{clamp01(add(image, delta))};
}

ImageF clamp_valid(const ImageF& delta, const ImageF& image) {
    if (!image.same_shape(delta)) throw std::invalid_argument("clamp_valid: shape mismatch");
    ImageF out = delta;
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = std::min(1.0f - image.v[i], std::max(-image.v[i], out.v[i]));
    return out;
}

ImageF ma_update(const ImageF& delta_ma, const ImageF& delta) {
    if (!delta_ma.same_shape(delta)) throw std::invalid_argument("ma_update: shape mismatch");
    ImageF out = delta_ma;
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = kMaDecay * out.v[i] + (1.0f - kMaDecay) * delta.v[i];
    return out;
}

ExportResult export_adversarial(const Perturbation& p, const ImageF& base,
                                const std::string& out_prefix, int bit_depth,
                                const std::string& scenario_id,
                                const std::vector<std::string>& surrogate_ids) {
    if (!base.same_shape(p.delta_ma))
        throw std::invalid_argument("export: base/delta shape mismatch");
    ImageF adv = clamp01(add(base, p.delta_ma));

    ExportResult r;
    r.image_path = out_prefix + ".png";
    r.manifest_path = out_prefix + ".manifest.json";
    write_png(r.image_path, adv, bit_depth);

    json m;
    m["eps"] = p.eps;
    m["seed"] = p.seed;
    m["step_count"] = p.step_count;
    m["surrogates"] = surrogate_ids;
    m["scenario_id"] = scenario_id;
    m["base_image_sha256"] = sha256_hex(base.v);
    m["bit_depth"] = bit_depth;
    m["artifact"] = "delta_ma";
    std::ofstream out(r.manifest_path);
    if (!out) throw std::runtime_error("export: cannot write manifest " + r.manifest_path);
    out << m.dump(2) << "\n";
    return r;
}

}  // namespace vcat::perturb
