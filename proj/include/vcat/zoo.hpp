#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcat/ad.hpp"
#include "vcat/image.hpp"
#include "vcat/rng.hpp"
#include "vcat/tensorio.hpp"

namespace vcat::zoo {

enum class Family { clip, visual_only, vllm_tower, adv_trained };
enum class Arch { identity, linear, mlp, vit, mixer };

Family family_from_string(const std::string& s);
std::string to_string(Family f);
Arch arch_from_string(const std::string& s);
std::string to_string(Arch a);

/// One surrogate visual encoder: geometry, regularization knobs, and a
/// weights reference ("seed:<n>" for procedurally initialized weights,
/// "file:<path>" for a tensor container on disk).
struct SurrogateSpec {
    std::string id;
    Family family = Family::clip;
    Arch arch = Arch::vit;
    int input_size = 0;  // D
    int patch = 8;
    int dim = 32;
    int num_blocks = 0;  // L
    int heads = 2;
    int embed_dim = 32;
    float droppath_max = 0.0f;    // p
    float patchdrop_frac = 0.0f;  // fraction of visual patches dropped
    std::string weights;

    void validate() const;
    bool is_vit() const { return arch == Arch::vit; }
    bool has_text_encoder() const {
        return family == Family::clip || family == Family::vllm_tower;
    }
    int num_patches() const { return (input_size / patch) * (input_size / patch); }
};

/// Residual block skip decision: skip with probability i*p/L for the i-th
/// (1-based) of L blocks. Always consumes exactly one uniform draw.
bool droppath_gate(int block_index, int L, float p, Rng& rng);

/// Kept-patch indices (0-based, ascending): exactly round(n*(1-frac)) of n,
/// uniformly without replacement. Class/register tokens are not part of the
/// index space; callers prepend them unconditionally.
std::vector<int> patchdrop_mask(int num_patches, float frac, Rng& rng);

/// Parses a registry config (see README for the schema), validating ids are
/// unique and weight references resolve. Fails fast on missing weight files.
std::vector<SurrogateSpec> load_registry(const nlohmann::json& config);
std::vector<SurrogateSpec> load_registry_file(const std::string& path);

/// Deterministic weight synthesis for "seed:" references.
TensorMap synthesize_weights(const SurrogateSpec& spec, uint64_t seed);

class Encoder {
  public:
    explicit Encoder(SurrogateSpec spec);

    const SurrogateSpec& spec() const { return spec_; }
    int embed_dim() const;

    /// Embedding node of an image node already sized [D,D,3]. In train_mode
    /// the DropPath/PatchDrop wrappers are active and draw from rng; eval
    /// mode is a pure function of the pixels.
    ad::Graph::Id encode_op(ad::Graph& g, ad::Graph::Id image, Rng& rng,
                            bool train_mode) const;

    std::vector<float> encode(const ImageF& image, Rng& rng, bool train_mode) const;

    /// Joint-space text embedding; throws for families without a text tower.
    std::vector<float> encode_text(const std::string& text) const;

  private:
    SurrogateSpec spec_;
    TensorMap weights_;

    const NamedTensor& weight(const std::string& name) const;
    ad::Graph::Id wconst(ad::Graph& g, const std::string& name) const;
    ad::Graph::Id tiled_bias(ad::Graph& g, const std::string& name, int rows) const;
};

}  // namespace vcat::zoo
