#include "vcat/engine.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "vcat/rng.hpp"
#include "vcat/tensorio.hpp"

namespace vcat::engine {

using ad::Graph;
using nlohmann::json;
using objective::ExemplarSet;
using objective::LossValue;
using perturb::Perturbation;

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "vcl") return LossKind::vcl;
    if (s == "text_baseline") return LossKind::text_baseline;
    throw std::invalid_argument("engine: unknown loss kind '" + s + "'");
}

std::string to_string(LossKind k) { return k == LossKind::vcl ? "vcl" : "text_baseline"; }

void AttackConfig::validate() const {
    if (eps <= 0.0f) throw std::invalid_argument("attack: eps must be positive");
    if (alpha() <= 0.0f) throw std::invalid_argument("attack: step size must be positive");
    if (num_steps < 1) throw std::invalid_argument("attack: num_steps must be >= 1");
    if (views_per_surrogate < 1) throw std::invalid_argument("attack: views_per_surrogate >= 1");
    policy.validate();
}

json AttackConfig::to_json() const {
    json j;
    j["eps"] = eps;
    j["step_size"] = alpha();
    j["num_steps"] = num_steps;
    j["surrogates"] = surrogate_ids;
    j["loss"] = to_string(loss);
    j["policy"] = policy;
    j["seed"] = seed;
    j["checkpoint_every"] = checkpoint_every;
    j["views_per_surrogate"] = views_per_surrogate;
    return j;
}

namespace {

const ExemplarSet& exemplars_for(const std::map<std::string, ExemplarSet>& exemplars,
                                 const std::string& id) {
    auto it = exemplars.find(id);
    if (it == exemplars.end())
        throw std::invalid_argument("engine: no exemplar set for surrogate '" + id + "'");
    return it->second;
}

}  // namespace

EnsembleEval ensemble_loss_grad(const ImageF& image, const ImageF& delta,
                                const std::vector<zoo::Encoder>& surrogates,
                                const std::map<std::string, ExemplarSet>& exemplars,
                                const AttackConfig& cfg, uint64_t step_seed, bool want_grad) {
    if (surrogates.empty()) throw std::invalid_argument("engine: empty surrogate list");
    if (!image.same_shape(delta)) throw std::invalid_argument("engine: image/delta shape mismatch");

    Graph g;
    Graph::Id din = g.input({delta.h, delta.w, delta.c}, delta.v);
    Graph::Id base = g.constant({image.h, image.w, image.c}, image.v);
    Graph::Id x_delta = g.add(base, din);

    EnsembleEval ev;
    Graph::Id total = -1;
    for (const auto& enc : surrogates) {
        const auto& spec = enc.spec();
        const ExemplarSet& ex = exemplars_for(exemplars, spec.id);
        Graph::Id surr_loss = -1;
        for (int v = 0; v < cfg.views_per_surrogate; ++v) {
            Rng aug_rng(derive_seed(step_seed, spec.id + ":aug", static_cast<uint64_t>(v)));
            Rng reg_rng(derive_seed(step_seed, spec.id + ":reg", static_cast<uint64_t>(v)));
            Graph::Id view = augment::pipeline_op(g, x_delta, cfg.eps, cfg.policy,
                                                  spec.input_size, aug_rng);
            Graph::Id emb = enc.encode_op(g, view, reg_rng, /*train_mode=*/true);
            Graph::Id l;
            if (cfg.loss == LossKind::vcl) {
                l = objective::vcl_op(g, emb, ex);
            } else {
                l = objective::text_baseline_op(g, emb, ex.positives.front(), ex.negatives.front());
            }
            surr_loss = surr_loss < 0 ? l : g.add(surr_loss, l);
        }
        if (cfg.views_per_surrogate > 1)
            surr_loss = g.scale(surr_loss, 1.0f / static_cast<float>(cfg.views_per_surrogate));
        const double lv = g.val(surr_loss)[0];
        if (!std::isfinite(lv))
            throw std::runtime_error("engine: non-finite loss for surrogate '" + spec.id + "'");
        ev.loss.per_surrogate[spec.id] = lv;
        total = total < 0 ? surr_loss : g.add(total, surr_loss);
    }
    ev.loss.value = g.val(total)[0];
    if (!std::isfinite(ev.loss.value)) throw std::runtime_error("engine: non-finite total loss");

    if (want_grad) {
        g.backward(total);
        auto gd = g.grad(din);
        ev.grad_delta = ImageF(delta.h, delta.w, delta.c);
        std::copy(gd.begin(), gd.end(), ev.grad_delta.v.begin());
        for (float gv : ev.grad_delta.v)
            if (!std::isfinite(gv)) throw std::runtime_error("engine: non-finite gradient");
    }
    return ev;
}

LossValue ensemble_loss(const ImageF& image, const ImageF& delta,
                        const std::vector<zoo::Encoder>& surrogates,
                        const std::map<std::string, ExemplarSet>& exemplars,
                        const AttackConfig& cfg, uint64_t step_seed) {
    return ensemble_loss_grad(image, delta, surrogates, exemplars, cfg, step_seed,
                              /*want_grad=*/false)
        .loss;
}

Perturbation attack_step(const Perturbation& state, const AttackConfig& cfg, const ImageF& base,
                         const std::vector<zoo::Encoder>& surrogates,
                         const std::map<std::string, ExemplarSet>& exemplars,
                         LossValue* out_loss) {
    cfg.validate();
    const uint64_t step_seed =
        derive_seed(state.seed, "step", static_cast<uint64_t>(state.step_count));
    EnsembleEval ev = ensemble_loss_grad(base, state.delta, surrogates, exemplars, cfg, step_seed);
    if (out_loss) *out_loss = ev.loss;

    Perturbation next = state;
    const float a = cfg.alpha();
    for (size_t i = 0; i < next.delta.v.size(); ++i) {
        float gi = ev.grad_delta.v[i];
        float s = gi > 0.0f ? 1.0f : (gi < 0.0f ? -1.0f : 0.0f);
        next.delta.v[i] -= a * s;
    }
    next.delta = perturb::clamp_valid(perturb::project_linf(next.delta, cfg.eps), base);
    // The affine average of in-ball, in-range iterates stays in-ball and
    // in-range; re-projecting removes float rounding drift so the invariants
    // hold bitwise at every step.
    next.delta_ma = perturb::clamp_valid(
        perturb::project_linf(perturb::ma_update(state.delta_ma, next.delta), cfg.eps), base);
    next.step_count = state.step_count + 1;
    return next;
}

AttackResult run_attack(const AttackConfig& cfg, const ImageF& base,
                        const std::vector<zoo::Encoder>& surrogates,
                        const std::map<std::string, ExemplarSet>& exemplars,
                        std::optional<Perturbation> resume_from, std::ostream* progress) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    Perturbation state = resume_from
                             ? std::move(*resume_from)
                             : Perturbation::zeros(base.h, base.w, cfg.eps, cfg.seed);
    if (!state.delta.same_shape(base))
        throw std::invalid_argument("run_attack: perturbation/base shape mismatch");
    if (state.step_count == 0) state.delta_ma = state.delta;  // MA starts as a copy

    AttackResult res;
    while (state.step_count < cfg.num_steps) {
        LossValue loss;
        state = attack_step(state, cfg, base, surrogates, exemplars, &loss);
        res.loss_trace.push_back(loss.value);
        if (progress) {
            (*progress) << "step=" << state.step_count << " loss=" << loss.value;
            for (const auto& [id, lv] : loss.per_surrogate) (*progress) << " " << id << "=" << lv;
            (*progress) << "\n";
        }
        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
            state.step_count % cfg.checkpoint_every == 0 && state.step_count < cfg.num_steps) {
            save_checkpoint(cfg.checkpoint_dir + "/ckpt_step" + std::to_string(state.step_count),
                            state, cfg);
        }
    }
    res.perturbation = std::move(state);
    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.manifest = cfg.to_json();
    res.manifest["steps_run"] = res.loss_trace.size();
    res.manifest["final_step"] = res.perturbation.step_count;
    return res;
}

void save_checkpoint(const std::string& path_prefix, const Perturbation& p,
                     const AttackConfig& cfg) {
    TensorMap t;
    t["delta"] = NamedTensor{{p.delta.h, p.delta.w, p.delta.c}, p.delta.v};
    t["delta_ma"] = NamedTensor{{p.delta_ma.h, p.delta_ma.w, p.delta_ma.c}, p.delta_ma.v};
    save_tensors(path_prefix + ".vct", t);

    json m;
    m["eps"] = p.eps;
    m["seed"] = p.seed;
    m["step_count"] = p.step_count;
    m["config"] = cfg.to_json();
    std::ofstream out(path_prefix + ".json");
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path_prefix + ".json");
    out << m.dump(2) << "\n";
}

Perturbation load_checkpoint(const std::string& path_prefix) {
    TensorMap t = load_tensors(path_prefix + ".vct");
    std::ifstream in(path_prefix + ".json");
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path_prefix + ".json");
    json m = json::parse(in);

    auto to_image = [](const NamedTensor& nt) {
        if (nt.shape.size() != 3) throw std::runtime_error("checkpoint: bad tensor rank");
        ImageF img(nt.shape[0], nt.shape[1], nt.shape[2]);
        img.v = nt.data;
        return img;
    };
    Perturbation p;
    p.delta = to_image(t.at("delta"));
    p.delta_ma = to_image(t.at("delta_ma"));
    p.eps = m.at("eps").get<float>();
    p.seed = m.at("seed").get<uint64_t>();
    p.step_count = m.at("step_count").get<int64_t>();
    if (!p.invariants_hold()) throw std::runtime_error("checkpoint: invariants violated on load");
    return p;
}

}  // namespace vcat::engine
