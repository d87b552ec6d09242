#include "vcat/zoo.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

namespace vcat::zoo {

using ad::Graph;
using nlohmann::json;

Family family_from_string(const std::string& s) {
    if (s == "clip") return Family::clip;
    if (s == "visual_only") return Family::visual_only;
    if (s == "vllm_tower") return Family::vllm_tower;
    if (s == "adv_trained") return Family::adv_trained;
    throw std::invalid_argument("zoo: unknown family '" + s + "'");
}

std::string to_string(Family f) {
    switch (f) {
        case Family::clip: return "clip";
        case Family::visual_only: return "visual_only";
        case Family::vllm_tower: return "vllm_tower";
        case Family::adv_trained: return "adv_trained";
    }
    return "?";
}

Arch arch_from_string(const std::string& s) {
    if (s == "identity") return Arch::identity;
    if (s == "linear") return Arch::linear;
    if (s == "mlp") return Arch::mlp;
    if (s == "vit") return Arch::vit;
    if (s == "mixer") return Arch::mixer;
    throw std::invalid_argument("zoo: unknown arch '" + s + "'");
}

std::string to_string(Arch a) {
    switch (a) {
        case Arch::identity: return "identity";
        case Arch::linear: return "linear";
        case Arch::mlp: return "mlp";
        case Arch::vit: return "vit";
        case Arch::mixer: return "mixer";
    }
    return "?";
}

void SurrogateSpec::validate() const {
    if (id.empty()) throw std::invalid_argument("surrogate: empty id");
    if (input_size <= 0) throw std::invalid_argument("surrogate " + id + ": input_size must be > 0");
    if (droppath_max < 0.0f || droppath_max > 1.0f)
        throw std::invalid_argument("surrogate " + id + ": droppath_max must lie in [0,1]");
    if (patchdrop_frac < 0.0f || patchdrop_frac >= 1.0f)
        throw std::invalid_argument("surrogate " + id + ": patchdrop_frac must lie in [0,1)");
    if (arch == Arch::vit || arch == Arch::mixer) {
        if (patch <= 0 || input_size % patch != 0)
            throw std::invalid_argument("surrogate " + id + ": input_size must be a multiple of patch");
        if (num_blocks < 1) throw std::invalid_argument("surrogate " + id + ": blocks must be >= 1");
        if (dim < 1 || embed_dim < 1)
            throw std::invalid_argument("surrogate " + id + ": dims must be >= 1");
        if (arch == Arch::vit && (heads < 1 || dim % heads != 0))
            throw std::invalid_argument("surrogate " + id + ": dim must divide into heads");
    }
}

bool droppath_gate(int block_index, int L, float p, Rng& rng) {
    if (block_index < 1 || block_index > L)
        throw std::invalid_argument("droppath_gate: block index out of range");
    double u = rng.uniform();
    if (p <= 0.0f) return false;
    return u <= static_cast<double>(block_index) * p / L;
}

std::vector<int> patchdrop_mask(int num_patches, float frac, Rng& rng) {
    if (frac < 0.0f || frac >= 1.0f) throw std::invalid_argument("patchdrop_mask: frac must lie in [0,1)");
    if (num_patches < 0) throw std::invalid_argument("patchdrop_mask: negative patch count");
    const int keep = static_cast<int>(std::lround(num_patches * (1.0 - static_cast<double>(frac))));
    std::vector<int> idx(static_cast<size_t>(num_patches));
    for (int i = 0; i < num_patches; ++i) idx[static_cast<size_t>(i)] = i;
    // Partial Fisher-Yates: the first `keep` entries end up a uniform sample.
    for (int i = 0; i < keep; ++i) {
        int j = i + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(num_patches - i)));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    idx.resize(static_cast<size_t>(keep));
    std::sort(idx.begin(), idx.end());
    return idx;
}

namespace {

SurrogateSpec spec_from_json(const json& e) {
    SurrogateSpec s;
    s.id = e.at("id").get<std::string>();
    s.family = family_from_string(e.value("family", "clip"));
    s.arch = arch_from_string(e.value("arch", "vit"));
    s.input_size = e.at("input_size").get<int>();
    s.patch = e.value("patch", 8);
    s.dim = e.value("dim", 32);
    s.num_blocks = e.value("blocks", s.arch == Arch::vit || s.arch == Arch::mixer ? 2 : 0);
    s.heads = e.value("heads", 2);
    s.embed_dim = e.value("embed_dim", 32);
    s.droppath_max = e.value("droppath_max", 0.0f);
    s.patchdrop_frac = e.value("patchdrop_frac", 0.0f);
    s.weights = e.value("weights", "seed:0");
    return s;
}

}  // namespace

std::vector<SurrogateSpec> load_registry(const json& config) {
    std::vector<SurrogateSpec> specs;
    if (!config.contains("surrogates")) return specs;
    std::set<std::string> seen;
    for (const auto& e : config.at("surrogates")) {
        SurrogateSpec s = spec_from_json(e);
        s.validate();
        if (!seen.insert(s.id).second)
            throw std::invalid_argument("registry: duplicate surrogate id '" + s.id + "'");
        if (s.weights.rfind("file:", 0) == 0) {
            std::string path = s.weights.substr(5);
            if (!std::filesystem::exists(path))
                throw std::runtime_error("registry: missing weights file for '" + s.id + "': " + path);
        } else if (s.weights.rfind("seed:", 0) != 0 && s.arch != Arch::identity) {
            throw std::invalid_argument("registry: weights for '" + s.id +
                                        "' must be 'seed:<n>' or 'file:<path>'");
        }
        specs.push_back(std::move(s));
    }
    return specs;
}

std::vector<SurrogateSpec> load_registry_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("registry: cannot open " + path);
    json config = json::parse(in);
    return load_registry(config);
}

// ---------------------------------------------------------------------------
// weights

namespace {

NamedTensor init_tensor(std::vector<int> shape, uint64_t seed, const std::string& name,
                        float scale) {
    NamedTensor t;
    t.shape = std::move(shape);
    t.data.resize(t.numel());
    Rng rng(derive_seed(seed, name));
    for (float& v : t.data) v = static_cast<float>(rng.normal()) * scale;
    return t;
}

constexpr int kTextVocab = 2048;
constexpr int kTextDim = 64;

}  // namespace

TensorMap synthesize_weights(const SurrogateSpec& spec, uint64_t seed) {
    TensorMap w;
    const int D = spec.input_size;
    const int p3 = spec.patch * spec.patch * 3;
    const int n = spec.num_patches();
    const int dim = spec.dim;
    auto put = [&](const std::string& name, std::vector<int> shape, float scale) {
        w[name] = init_tensor(std::move(shape), seed, name, scale);
    };

    switch (spec.arch) {
        case Arch::identity:
            break;  // no parameters
        case Arch::linear:
            put("w", {D * D * 3, spec.embed_dim}, 1.0f / std::sqrt(static_cast<float>(D * D * 3)));
            break;
        case Arch::mlp:
            put("w1", {D * D * 3, dim}, 1.0f / std::sqrt(static_cast<float>(D * D * 3)));
            put("b1", {dim}, 0.02f);
            put("w2", {dim, spec.embed_dim}, 1.0f / std::sqrt(static_cast<float>(dim)));
            break;
        case Arch::vit: {
            put("patch_embed", {p3, dim}, 1.0f / std::sqrt(static_cast<float>(p3)));
            put("patch_bias", {dim}, 0.02f);
            put("pos_embed", {n, dim}, 0.02f);
            put("cls_token", {1, dim}, 0.02f);
            const int dh = dim / spec.heads;
            const float sw = 1.0f / std::sqrt(static_cast<float>(dim));
            for (int b = 0; b < spec.num_blocks; ++b) {
                std::string pre = "block" + std::to_string(b) + ".";
                for (int h = 0; h < spec.heads; ++h) {
                    std::string hp = pre + "head" + std::to_string(h) + ".";
                    put(hp + "wq", {dim, dh}, sw);
                    put(hp + "wk", {dim, dh}, sw);
                    put(hp + "wv", {dim, dh}, sw);
                    put(hp + "wo", {dh, dim}, 1.0f / std::sqrt(static_cast<float>(dh)));
                }
                put(pre + "ln1.g", {dim}, 0.0f);
                put(pre + "ln1.b", {dim}, 0.0f);
                put(pre + "ln2.g", {dim}, 0.0f);
                put(pre + "ln2.b", {dim}, 0.0f);
                put(pre + "mlp.w1", {dim, 4 * dim}, sw);
                put(pre + "mlp.b1", {4 * dim}, 0.02f);
                put(pre + "mlp.w2", {4 * dim, dim}, 1.0f / std::sqrt(4.0f * dim));
                put(pre + "mlp.b2", {dim}, 0.02f);
            }
            put("ln_f.g", {dim}, 0.0f);
            put("ln_f.b", {dim}, 0.0f);
            put("proj", {dim, spec.embed_dim}, 1.0f / std::sqrt(static_cast<float>(dim)));
            break;
        }
        case Arch::mixer: {
            put("patch_embed", {p3, dim}, 1.0f / std::sqrt(static_cast<float>(p3)));
            put("patch_bias", {dim}, 0.02f);
            put("pos_embed", {n, dim}, 0.02f);
            const float sw = 1.0f / std::sqrt(static_cast<float>(dim));
            for (int b = 0; b < spec.num_blocks; ++b) {
                std::string pre = "block" + std::to_string(b) + ".";
                put(pre + "token_mix", {n, n}, 1.0f / std::sqrt(static_cast<float>(n)));
                put(pre + "ln1.g", {dim}, 0.0f);
                put(pre + "ln1.b", {dim}, 0.0f);
                put(pre + "ln2.g", {dim}, 0.0f);
                put(pre + "ln2.b", {dim}, 0.0f);
                put(pre + "mlp.w1", {dim, 4 * dim}, sw);
                put(pre + "mlp.b1", {4 * dim}, 0.02f);
                put(pre + "mlp.w2", {4 * dim, dim}, 1.0f / std::sqrt(4.0f * dim));
                put(pre + "mlp.b2", {dim}, 0.02f);
            }
            put("ln_f.g", {dim}, 0.0f);
            put("ln_f.b", {dim}, 0.0f);
            put("proj", {dim, spec.embed_dim}, 1.0f / std::sqrt(static_cast<float>(dim)));
            break;
        }
    }
    // LayerNorm gains start at 1 (synthesized as offsets around 0 above).
    for (auto& [name, t] : w)
        if (name.find("ln") != std::string::npos && name.size() > 2 &&
            name[name.size() - 1] == 'g')
            for (float& v : t.data) v += 1.0f;

    if (spec.has_text_encoder()) {
        w["text.embed"] = init_tensor({kTextVocab, kTextDim}, seed, "text.embed", 0.5f);
        w["text.proj"] = init_tensor({kTextDim, spec.embed_dim}, seed, "text.proj",
                                     1.0f / std::sqrt(static_cast<float>(kTextDim)));
    }
    return w;
}

// ---------------------------------------------------------------------------
// encoder

Encoder::Encoder(SurrogateSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    if (spec_.arch == Arch::identity) return;
    if (spec_.weights.rfind("seed:", 0) == 0) {
        uint64_t seed = std::stoull(spec_.weights.substr(5));
        weights_ = synthesize_weights(spec_, seed);
    } else if (spec_.weights.rfind("file:", 0) == 0) {
        weights_ = load_tensors(spec_.weights.substr(5));
        // Shape-check against what this spec expects.
        TensorMap expect = synthesize_weights(spec_, 0);
        for (const auto& [name, t] : expect) {
            auto it = weights_.find(name);
            if (it == weights_.end())
                throw std::runtime_error("encoder " + spec_.id + ": weights missing tensor " + name);
            if (it->second.shape != t.shape)
                throw std::runtime_error("encoder " + spec_.id + ": bad shape for tensor " + name);
        }
    } else {
        throw std::invalid_argument("encoder " + spec_.id + ": unsupported weights ref '" +
                                    spec_.weights + "'");
    }
}

int Encoder::embed_dim() const {
    if (spec_.arch == Arch::identity) return spec_.input_size * spec_.input_size * 3;
    return spec_.embed_dim;
}

const NamedTensor& Encoder::weight(const std::string& name) const {
    auto it = weights_.find(name);
    if (it == weights_.end())
        throw std::runtime_error("encoder " + spec_.id + ": no tensor " + name);
    return it->second;
}

Graph::Id Encoder::wconst(Graph& g, const std::string& name) const {
    const NamedTensor& t = weight(name);
    return g.constant(t.shape, t.data);
}

Graph::Id Encoder::tiled_bias(Graph& g, const std::string& name, int rows) const {
    const NamedTensor& t = weight(name);
    const int n = static_cast<int>(t.data.size());
    std::vector<float> tiled(static_cast<size_t>(rows) * n);
    for (int r = 0; r < rows; ++r)
        std::copy(t.data.begin(), t.data.end(), tiled.begin() + static_cast<size_t>(r) * n);
    return g.constant({rows, n}, std::move(tiled));
}

Graph::Id Encoder::encode_op(Graph& g, Graph::Id image, Rng& rng, bool train_mode) const {
    const auto& s = g.shape(image);
    const int D = spec_.input_size;
    if (s.size() != 3 || s[0] != D || s[1] != D || s[2] != 3)
        throw std::invalid_argument("encode: image must be [" + std::to_string(D) + "," +
                                    std::to_string(D) + ",3] for surrogate " + spec_.id);

    if (spec_.arch == Arch::identity) return g.reshape(image, {D * D * 3});
    if (spec_.arch == Arch::linear) {
        Graph::Id flat = g.reshape(image, {1, D * D * 3});
        return g.reshape(g.matmul(flat, wconst(g, "w")), {spec_.embed_dim});
    }
    if (spec_.arch == Arch::mlp) {
        Graph::Id flat = g.reshape(image, {1, D * D * 3});
        Graph::Id h1 = g.gelu(g.add(g.matmul(flat, wconst(g, "w1")), tiled_bias(g, "b1", 1)));
        return g.reshape(g.matmul(h1, wconst(g, "w2")), {spec_.embed_dim});
    }

    // Tokenized architectures.
    const int P = spec_.patch;
    const int side = D / P;
    const int n = side * side;
    const int p3 = P * P * 3;

    std::vector<int> patch_idx(static_cast<size_t>(n) * p3);
    {
        size_t k = 0;
        for (int py = 0; py < side; ++py)
            for (int px = 0; px < side; ++px)
                for (int y = 0; y < P; ++y)
                    for (int x = 0; x < P; ++x)
                        for (int c = 0; c < 3; ++c)
                            patch_idx[k++] =
                                ((py * P + y) * D + (px * P + x)) * 3 + c;
    }
    Graph::Id patches = g.reshape(g.select(image, std::move(patch_idx)), {n, p3});
    Graph::Id tokens = g.add(g.matmul(patches, wconst(g, "patch_embed")), tiled_bias(g, "patch_bias", n));
    tokens = g.add(tokens, wconst(g, "pos_embed"));

    const int dim = spec_.dim;
    auto ln = [&](Graph::Id x, const std::string& pre) {
        return g.layernorm_rows(x, wconst(g, pre + ".g"), wconst(g, pre + ".b"));
    };
    auto mlp_block = [&](Graph::Id x, const std::string& pre, int rows) {
        Graph::Id h = g.add(g.matmul(x, wconst(g, pre + ".w1")), tiled_bias(g, pre + ".b1", rows));
        return g.add(g.matmul(g.gelu(h), wconst(g, pre + ".w2")), tiled_bias(g, pre + ".b2", rows));
    };

    if (spec_.arch == Arch::vit) {
        Graph::Id x = g.concat_rows(wconst(g, "cls_token"), tokens);
        int rows = n + 1;
        if (train_mode && spec_.patchdrop_frac > 0.0f) {
            std::vector<int> kept = patchdrop_mask(n, spec_.patchdrop_frac, rng);
            std::vector<int> rowsel;
            rowsel.reserve(kept.size() + 1);
            rowsel.push_back(0);  // class token always kept
            for (int k : kept) rowsel.push_back(k + 1);
            x = g.gather_rows(x, rowsel);
            rows = static_cast<int>(kept.size()) + 1;
        }
        const int dh = dim / spec_.heads;
        for (int b = 0; b < spec_.num_blocks; ++b) {
            if (train_mode && droppath_gate(b + 1, spec_.num_blocks, spec_.droppath_max, rng))
                continue;  // whole block passes through
            std::string pre = "block" + std::to_string(b);
            Graph::Id h = ln(x, pre + ".ln1");
            Graph::Id attn_out = -1;
            for (int hd = 0; hd < spec_.heads; ++hd) {
                std::string hp = pre + ".head" + std::to_string(hd) + ".";
                Graph::Id q = g.matmul(h, wconst(g, hp + "wq"));
                Graph::Id k = g.matmul(h, wconst(g, hp + "wk"));
                Graph::Id v = g.matmul(h, wconst(g, hp + "wv"));
                Graph::Id scores =
                    g.softmax_rows(g.scale(g.matmul(q, g.transpose(k)), 1.0f / std::sqrt(static_cast<float>(dh))));
                Graph::Id o = g.matmul(g.matmul(scores, v), wconst(g, hp + "wo"));
                attn_out = attn_out < 0 ? o : g.add(attn_out, o);
            }
            x = g.add(x, attn_out);
            x = g.add(x, mlp_block(ln(x, pre + ".ln2"), pre + ".mlp", rows));
        }
        Graph::Id cls = g.slice_rows(ln(x, "ln_f"), 0, 1);
        return g.reshape(g.matmul(cls, wconst(g, "proj")), {spec_.embed_dim});
    }

    // mixer: PatchDrop is a no-op (no class token, fixed token grid);
    // DropPath gates the residual stages.
    Graph::Id x = tokens;
    for (int b = 0; b < spec_.num_blocks; ++b) {
        if (train_mode && droppath_gate(b + 1, spec_.num_blocks, spec_.droppath_max, rng))
            continue;
        std::string pre = "block" + std::to_string(b);
        x = g.add(x, g.matmul(wconst(g, pre + ".token_mix"), ln(x, pre + ".ln1")));
        x = g.add(x, mlp_block(ln(x, pre + ".ln2"), pre + ".mlp", n));
    }
    Graph::Id pooled = g.reshape(g.mean_rows(ln(x, "ln_f")), {1, dim});
    return g.reshape(g.matmul(pooled, wconst(g, "proj")), {spec_.embed_dim});
}

std::vector<float> Encoder::encode(const ImageF& image, Rng& rng, bool train_mode) const {
    Graph g;
    Graph::Id in = g.constant({image.h, image.w, image.c}, image.v);
    Graph::Id emb = encode_op(g, in, rng, train_mode);
    auto v = g.val(emb);
    return {v.begin(), v.end()};
}

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

}  // namespace

std::vector<float> Encoder::encode_text(const std::string& text) const {
    if (!spec_.has_text_encoder())
        throw std::invalid_argument("encoder " + spec_.id + ": family '" + to_string(spec_.family) +
                                    "' has no text encoder");
    auto words = tokenize(text);
    if (words.empty()) throw std::invalid_argument("encode_text: empty text");
    const NamedTensor& table = weight("text.embed");
    std::vector<float> pooled(static_cast<size_t>(kTextDim), 0.0f);
    for (const auto& w : words) {
        size_t row = static_cast<size_t>(fnv1a(w) % kTextVocab);
        for (int j = 0; j < kTextDim; ++j)
            pooled[static_cast<size_t>(j)] += table.data[row * kTextDim + static_cast<size_t>(j)];
    }
    for (float& v : pooled) v /= static_cast<float>(words.size());
    const NamedTensor& proj = weight("text.proj");
    std::vector<float> out(static_cast<size_t>(spec_.embed_dim), 0.0f);
    for (int i = 0; i < kTextDim; ++i) {
        float pv = std::tanh(pooled[static_cast<size_t>(i)]);
        for (int j = 0; j < spec_.embed_dim; ++j)
            out[static_cast<size_t>(j)] += pv * proj.data[static_cast<size_t>(i) * spec_.embed_dim + j];
    }
    return out;
}

}  // namespace vcat::zoo
