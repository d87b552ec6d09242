#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcat/augment.hpp"
#include "vcat/image.hpp"
#include "vcat/objective.hpp"
#include "vcat/perturb.hpp"
#include "vcat/zoo.hpp"

namespace vcat::engine {

enum class LossKind { vcl, text_baseline };
LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind k);

struct AttackConfig {
    float eps = 16.0f / 255.0f;
    float step_size = 0.0f;  // 0 selects the default eps/8
    int num_steps = 500;
    std::vector<std::string> surrogate_ids;
    LossKind loss = LossKind::vcl;
    augment::AugmentPolicy policy;
    uint64_t seed = 0;
    int checkpoint_every = 0;  // 0 disables intermediate checkpoints
    int views_per_surrogate = 1;
    std::string checkpoint_dir;

    float alpha() const { return step_size > 0.0f ? step_size : eps / 8.0f; }
    void validate() const;
    nlohmann::json to_json() const;
};

struct AttackResult {
    perturb::Perturbation perturbation;
    std::vector<double> loss_trace;
    double wall_seconds = 0.0;
    nlohmann::json manifest;
};

/// Total and per-surrogate loss of clamp(image+delta) under one step's
/// augmentation draws, plus d(total)/d(delta). Surrogate streams are derived
/// from (step_seed, surrogate id), so a sub-ensemble reproduces its members'
/// terms exactly.
struct EnsembleEval {
    objective::LossValue loss;
    ImageF grad_delta;
};
EnsembleEval ensemble_loss_grad(const ImageF& image, const ImageF& delta,
                                const std::vector<zoo::Encoder>& surrogates,
                                const std::map<std::string, objective::ExemplarSet>& exemplars,
                                const AttackConfig& cfg, uint64_t step_seed,
                                bool want_grad = true);

objective::LossValue ensemble_loss(const ImageF& image, const ImageF& delta,
                                   const std::vector<zoo::Encoder>& surrogates,
                                   const std::map<std::string, objective::ExemplarSet>& exemplars,
                                   const AttackConfig& cfg, uint64_t step_seed);

/// One sign-descent step: project_linf(delta - alpha*sign(g), eps), then the
/// valid-pixel clamp against the base image, then the moving-average update.
perturb::Perturbation attack_step(const perturb::Perturbation& state, const AttackConfig& cfg,
                                  const ImageF& base,
                                  const std::vector<zoo::Encoder>& surrogates,
                                  const std::map<std::string, objective::ExemplarSet>& exemplars,
                                  objective::LossValue* out_loss = nullptr);

/// Runs num_steps steps (resuming from resume_from when given), writing
/// checkpoints per cfg.checkpoint_every. Deterministic given (seed, config,
/// weights).
AttackResult run_attack(const AttackConfig& cfg, const ImageF& base,
                        const std::vector<zoo::Encoder>& surrogates,
                        const std::map<std::string, objective::ExemplarSet>& exemplars,
                        std::optional<perturb::Perturbation> resume_from = std::nullopt,
                        std::ostream* progress = nullptr);

void save_checkpoint(const std::string& path_prefix, const perturb::Perturbation& p,
                     const AttackConfig& cfg);
perturb::Perturbation load_checkpoint(const std::string& path_prefix);

}  // namespace vcat::engine
