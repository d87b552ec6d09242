#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "support.hpp"
#include "vcat/engine.hpp"

using namespace vcat;
using namespace vcat::engine;
using objective::ExemplarSet;

namespace {

zoo::Encoder identity_encoder(const std::string& id, int D) {
    zoo::SurrogateSpec s;
    s.id = id;
    s.arch = zoo::Arch::identity;
    s.family = zoo::Family::visual_only;
    s.input_size = D;
    return zoo::Encoder(s);
}

AttackConfig quiet_config(float eps, float alpha, int steps) {
    AttackConfig cfg;
    cfg.eps = eps;
    cfg.step_size = alpha;
    cfg.num_steps = steps;
    cfg.policy.p_noise = cfg.policy.p_crop = cfg.policy.p_pad = cfg.policy.p_jpeg = 0.0f;
    cfg.seed = 1234;
    return cfg;
}

// +-1 checkerboard-ish sign pattern over a [D,D,3] grid.
std::vector<float> sign_pattern(int D) {
    std::vector<float> s(static_cast<size_t>(D) * D * 3);
    for (size_t i = 0; i < s.size(); ++i) s[i] = (i % 2 == 0) ? 1.0f : -1.0f;
    return s;
}

}  // namespace

TEST_CASE("toy convex instance: loss strictly decreases") {
    const int D = 2;
    ImageF base(D, D, 3, 0.5f);
    std::vector<zoo::Encoder> ens;
    ens.push_back(identity_encoder("id0", D));

    const float eps = 0.1f;
    auto s = sign_pattern(D);
    std::vector<float> pos(base.v), neg(base.v);
    for (size_t i = 0; i < s.size(); ++i) {
        pos[i] += 0.8f * eps * s[i];
        neg[i] -= 0.8f * eps * s[i];
    }
    ExemplarSet ex;
    ex.positives = {pos};
    ex.negatives = {neg};
    ex.k = 1;
    std::map<std::string, ExemplarSet> exemplars{{"id0", ex}};

    AttackConfig cfg = quiet_config(eps, eps / 200.0f, 50);
    perturb::Perturbation state = perturb::Perturbation::zeros(D, D, eps, cfg.seed);
    double prev = 1e18;
    for (int t = 0; t < 50; ++t) {
        objective::LossValue loss;
        state = attack_step(state, cfg, base, ens, exemplars, &loss);
        CHECK(loss.value < prev);
        prev = loss.value;
        CHECK(max_abs(state.delta) <= eps);
        CHECK(max_abs(state.delta_ma) <= eps);
    }
}

TEST_CASE("symmetric exemplars give zero gradient: delta unchanged") {
    const int D = 2;
    ImageF base(D, D, 3, 0.5f);
    std::vector<zoo::Encoder> ens;
    ens.push_back(identity_encoder("id0", D));

    std::vector<float> v(base.v);
    for (size_t i = 0; i < v.size(); ++i) v[i] += (i % 3 == 0 ? 0.05f : -0.02f);
    ExemplarSet ex;
    ex.positives = {v, base.v};
    ex.negatives = {v, base.v};
    ex.k = 2;  // K=N makes the symmetric gradient cancel exactly
    std::map<std::string, ExemplarSet> exemplars{{"id0", ex}};

    AttackConfig cfg = quiet_config(0.1f, 0.01f, 5);
    perturb::Perturbation state = perturb::Perturbation::zeros(D, D, 0.1f, cfg.seed);
    for (int t = 0; t < 5; ++t) state = attack_step(state, cfg, base, ens, exemplars);
    CHECK(max_abs(state.delta) == 0.0f);
}

TEST_CASE("linear surrogate with dominant positive reaches the box corner") {
    namespace fs = std::filesystem;
    const int D = 2;
    const int n = D * D * 3;
    auto dir = fs::temp_directory_path() / "vcat_engine_test";
    fs::create_directories(dir);
    auto wpath = (dir / "lin.vct").string();
    {
        NamedTensor w;
        w.shape = {n, n};
        w.data.assign(static_cast<size_t>(n) * n, 0.0f);
        for (int i = 0; i < n; ++i) w.data[static_cast<size_t>(i) * n + i] = 1.0f;
        save_tensors(wpath, {{"w", w}});
    }
    zoo::SurrogateSpec spec;
    spec.id = "lin";
    spec.arch = zoo::Arch::linear;
    spec.family = zoo::Family::visual_only;
    spec.input_size = D;
    spec.embed_dim = n;
    spec.weights = "file:" + wpath;
    std::vector<zoo::Encoder> ens;
    ens.push_back(zoo::Encoder(spec));

    ImageF base(D, D, 3, 0.5f);
    auto s = sign_pattern(D);
    std::vector<float> neg(s.size());
    for (size_t i = 0; i < s.size(); ++i) neg[i] = -s[i];
    ExemplarSet ex;
    ex.positives = {s};
    ex.negatives = {neg};
    ex.k = 1;
    std::map<std::string, ExemplarSet> exemplars{{"lin", ex}};

    const float eps = 8.0f / 255.0f;
    const float alpha = eps / 8.0f;
    AttackConfig cfg = quiet_config(eps, alpha, 8);
    perturb::Perturbation state = perturb::Perturbation::zeros(D, D, eps, cfg.seed);
    const int budget = static_cast<int>(std::ceil(eps / alpha));
    for (int t = 0; t < budget; ++t) state = attack_step(state, cfg, base, ens, exemplars);
    for (size_t i = 0; i < state.delta.v.size(); ++i)
        CHECK(std::fabs(state.delta.v[i]) == doctest::Approx(eps).epsilon(1e-6));
    fs::remove_all(dir);
}

TEST_CASE("ensemble loss is additive and per-surrogate seeds are stable") {
    const int D = 8;
    ImageF base = testsupport::smooth_image(D, D, 31);
    ImageF delta(D, D, 3, 0.0f);
    Rng rng(32);
    for (float& v : delta.v) v = static_cast<float>(rng.uniform(-0.03, 0.03));

    zoo::SurrogateSpec sa;
    sa.id = "vit_a";
    sa.arch = zoo::Arch::vit;
    sa.input_size = D;
    sa.patch = 4;
    sa.dim = 8;
    sa.num_blocks = 1;
    sa.heads = 2;
    sa.embed_dim = 8;
    sa.weights = "seed:71";
    zoo::SurrogateSpec sb = sa;
    sb.id = "vit_b";
    sb.weights = "seed:72";

    ExemplarSet ex;
    Rng er(33);
    for (int i = 0; i < 3; ++i) {
        ex.positives.push_back(testsupport::random_vec(8, er, -1.0f, 1.0f));
        ex.negatives.push_back(testsupport::random_vec(8, er, -1.0f, 1.0f));
    }
    ex.k = 2;
    std::map<std::string, ExemplarSet> exemplars{{"vit_a", ex}, {"vit_b", ex}};

    AttackConfig cfg;
    cfg.eps = 0.05f;
    cfg.num_steps = 1;
    cfg.surrogate_ids = {"vit_a", "vit_b"};
    const uint64_t step_seed = 555;

    std::vector<zoo::Encoder> both;
    both.emplace_back(sa);
    both.emplace_back(sb);
    auto ev_both = ensemble_loss_grad(base, delta, both, exemplars, cfg, step_seed);

    std::vector<zoo::Encoder> only_a, only_b;
    only_a.emplace_back(sa);
    only_b.emplace_back(sb);
    auto ev_a = ensemble_loss_grad(base, delta, only_a, exemplars, cfg, step_seed);
    auto ev_b = ensemble_loss_grad(base, delta, only_b, exemplars, cfg, step_seed);

    CHECK(ev_both.loss.per_surrogate.at("vit_a") == ev_a.loss.value);
    CHECK(ev_both.loss.per_surrogate.at("vit_b") == ev_b.loss.value);
    CHECK(ev_both.loss.value ==
          doctest::Approx(ev_a.loss.value + ev_b.loss.value).epsilon(1e-6));
    for (size_t i = 0; i < ev_both.grad_delta.v.size(); ++i)
        CHECK(ev_both.grad_delta.v[i] ==
              doctest::Approx(ev_a.grad_delta.v[i] + ev_b.grad_delta.v[i]).epsilon(1e-4));

    // single surrogate: total equals its loss
    CHECK(ev_a.loss.value == ev_a.loss.per_surrogate.at("vit_a"));
}

TEST_CASE("ensemble gradient matches finite differences on a 4x4 toy encoder") {
    // base image 8x8 (crop needs at least 8), surrogate input 4x4
    ImageF base = testsupport::smooth_image(8, 8, 41);
    zoo::SurrogateSpec s;
    s.id = "mlp4";
    s.arch = zoo::Arch::mlp;
    s.input_size = 4;
    s.dim = 6;
    s.embed_dim = 5;
    s.weights = "seed:99";
    std::vector<zoo::Encoder> ens;
    ens.emplace_back(s);

    ExemplarSet ex;
    Rng er(42);
    ex.positives = {testsupport::random_vec(5, er, -1.0f, 1.0f)};
    ex.negatives = {testsupport::random_vec(5, er, -1.0f, 1.0f)};
    ex.k = 1;
    std::map<std::string, ExemplarSet> exemplars{{"mlp4", ex}};

    AttackConfig cfg;
    cfg.eps = 0.05f;
    cfg.num_steps = 1;
    const uint64_t step_seed = 777;  // augmentation active but frozen

    ImageF delta(8, 8, 3, 0.0f);
    auto ev = ensemble_loss_grad(base, delta, ens, exemplars, cfg, step_seed);

    const double h = 2e-3;
    double worst = 0.0, ref = 0.0;
    for (size_t i = 0; i < delta.v.size(); ++i) {
        ImageF dp = delta, dm = delta;
        dp.v[i] += static_cast<float>(h);
        dm.v[i] -= static_cast<float>(h);
        double fp = ensemble_loss(base, dp, ens, exemplars, cfg, step_seed).value;
        double fm = ensemble_loss(base, dm, ens, exemplars, cfg, step_seed).value;
        double fd = (fp - fm) / (2 * h);
        worst = std::max(worst, std::abs(fd - ev.grad_delta.v[i]));
        ref = std::max({ref, std::abs(fd), std::abs(static_cast<double>(ev.grad_delta.v[i]))});
    }
    CHECK(worst / std::max(ref, 1e-6) <= 1e-2);
}

TEST_CASE("run_attack: T=1 equals one step; resume is bit-identical") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "vcat_resume_test";
    fs::create_directories(dir);

    const int D = 8;
    ImageF base = testsupport::smooth_image(D, D, 51);
    zoo::SurrogateSpec s;
    s.id = "vit8";
    s.arch = zoo::Arch::vit;
    s.input_size = D;
    s.patch = 4;
    s.dim = 8;
    s.num_blocks = 1;
    s.heads = 1;
    s.embed_dim = 8;
    s.droppath_max = 0.3f;
    s.patchdrop_frac = 0.25f;
    s.weights = "seed:61";
    std::vector<zoo::Encoder> ens;
    ens.emplace_back(s);

    ExemplarSet ex;
    Rng er(52);
    for (int i = 0; i < 2; ++i) {
        ex.positives.push_back(testsupport::random_vec(8, er, -1.0f, 1.0f));
        ex.negatives.push_back(testsupport::random_vec(8, er, -1.0f, 1.0f));
    }
    ex.k = 1;
    std::map<std::string, ExemplarSet> exemplars{{"vit8", ex}};

    AttackConfig cfg;
    cfg.eps = 16.0f / 255.0f;
    cfg.num_steps = 1;
    cfg.seed = 808;

    auto one = run_attack(cfg, base, ens, exemplars);
    perturb::Perturbation manual =
        attack_step(perturb::Perturbation::zeros(D, D, cfg.eps, cfg.seed), cfg, base, ens,
                    exemplars);
    CHECK(max_abs_diff(one.perturbation.delta, manual.delta) == 0.0f);
    CHECK(one.loss_trace.size() == 1);

    // uninterrupted 10 steps vs checkpoint at 5 + resume
    cfg.num_steps = 10;
    cfg.checkpoint_every = 5;
    cfg.checkpoint_dir = dir.string();
    auto full = run_attack(cfg, base, ens, exemplars);

    auto mid = load_checkpoint((dir / "ckpt_step5").string());
    CHECK(mid.step_count == 5);
    auto resumed = run_attack(cfg, base, ens, exemplars, mid);
    CHECK(max_abs_diff(full.perturbation.delta, resumed.perturbation.delta) == 0.0f);
    CHECK(max_abs_diff(full.perturbation.delta_ma, resumed.perturbation.delta_ma) == 0.0f);
    CHECK(full.perturbation.step_count == resumed.perturbation.step_count);

    // determinism of the loss trace
    auto again = run_attack(cfg, base, ens, exemplars);
    CHECK(full.loss_trace == again.loss_trace);
    fs::remove_all(dir);
}

TEST_CASE("config validation and empty ensembles") {
    AttackConfig cfg;
    cfg.eps = 0.0f;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = AttackConfig{};
    cfg.num_steps = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    ImageF base(4, 4, 3, 0.5f);
    ImageF delta(4, 4, 3, 0.0f);
    AttackConfig ok;
    CHECK_THROWS_AS(ensemble_loss_grad(base, delta, {}, {}, ok, 1), std::invalid_argument);
}
