#pragma once

// Shared helpers for the test suites: finite-difference gradient checking
// against the graph, and procedural test images. Everything here is
// test-only and independent of the library's gradient path.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "vcat/ad.hpp"
#include "vcat/image.hpp"
#include "vcat/rng.hpp"

namespace vcat::testsupport {

using Builder = std::function<ad::Graph::Id(ad::Graph&, ad::Graph::Id)>;

struct GradCheck {
    double max_rel_err = 0.0;
    double analytic_norm = 0.0;
    double fd_norm = 0.0;
};

/// Central finite differences of a scalar-valued graph builder, compared to
/// the tape gradient. Returns the worst relative component error, with the
/// comparison floored to dodge 0/0 on dead components.
inline GradCheck gradcheck(const std::vector<int>& shape, std::vector<float> x,
                           const Builder& build, double h = 2e-3) {
    ad::EvalResult res = ad::value_and_grad(shape, x, build);
    std::vector<double> fd(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const float orig = x[i];
        x[i] = orig + static_cast<float>(h);
        ad::Graph gp;
        double fp = gp.val(build(gp, gp.input(shape, x)))[0];
        x[i] = orig - static_cast<float>(h);
        ad::Graph gm;
        double fm = gm.val(build(gm, gm.input(shape, x)))[0];
        x[i] = orig;
        fd[i] = (fp - fm) / (2.0 * h);
    }
    GradCheck gc;
    double afloor = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        gc.analytic_norm = std::max(gc.analytic_norm, std::abs(static_cast<double>(res.grad[i])));
        gc.fd_norm = std::max(gc.fd_norm, std::abs(fd[i]));
    }
    afloor = std::max({gc.analytic_norm, gc.fd_norm, 1e-6});
    for (size_t i = 0; i < x.size(); ++i)
        gc.max_rel_err = std::max(gc.max_rel_err,
                                  std::abs(fd[i] - static_cast<double>(res.grad[i])) / afloor);
    return gc;
}

inline std::vector<float> random_vec(size_t n, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
    return v;
}

/// Band-limited image standing in for a natural photo: a few random
/// low-frequency waves per channel, mapped into [0.1, 0.9].
inline ImageF smooth_image(int h, int w, uint64_t seed) {
    Rng rng(seed);
    ImageF img(h, w, 3);
    for (int c = 0; c < 3; ++c) {
        double fy1 = rng.uniform(0.5, 2.5), fx1 = rng.uniform(0.5, 2.5);
        double fy2 = rng.uniform(1.0, 4.0), fx2 = rng.uniform(1.0, 4.0);
        double p1 = rng.uniform(0.0, 6.28), p2 = rng.uniform(0.0, 6.28);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double u = static_cast<double>(y) / h, v = static_cast<double>(x) / w;
                double s = 0.6 * std::sin(6.28 * (fy1 * u + fx1 * v) + p1) +
                           0.4 * std::sin(6.28 * (fy2 * u - fx2 * v) + p2);
                img.at(y, x, c) = static_cast<float>(0.5 + 0.4 * s * 0.5);
            }
    }
    return clamp_range(img, 0.1f, 0.9f);
}

/// Procedural "category" textures for captioning-style scenarios. Each
/// category id gets its own stripe direction/frequency band; instances vary
/// by seed. Distinct categories are far apart for any reasonable encoder.
inline ImageF category_image(int h, int w, int category, uint64_t seed) {
    Rng rng(derive_seed(seed, "cat", static_cast<uint64_t>(category)));
    ImageF img(h, w, 3);
    double angle = 0.6 * category + rng.uniform(-0.1, 0.1);
    double freq = 2.0 + 1.7 * (category % 5) + rng.uniform(-0.2, 0.2);
    double cy = std::cos(angle), sx = std::sin(angle);
    double base_r = 0.3 + 0.12 * ((category * 7) % 5);
    double base_g = 0.3 + 0.12 * ((category * 3) % 5);
    double base_b = 0.3 + 0.12 * ((category * 5) % 5);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double u = static_cast<double>(y) / h, v = static_cast<double>(x) / w;
            double s = std::sin(6.28 * freq * (cy * u + sx * v));
            double n = 0.06 * rng.normal();
            img.at(y, x, 0) = static_cast<float>(base_r + 0.25 * s + n);
            img.at(y, x, 1) = static_cast<float>(base_g + 0.25 * std::cos(6.28 * freq * (cy * u + sx * v)) + n);
            img.at(y, x, 2) = static_cast<float>(base_b - 0.2 * s + n);
        }
    return clamp_range(img, 0.05f, 0.95f);
}

}  // namespace vcat::testsupport
