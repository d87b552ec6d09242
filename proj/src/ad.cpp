#include "vcat/ad.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vcat::ad {

namespace {
constexpr float kTwoPi = 2.0f * std::numbers::pi_v<float>;

// Orthonormal 8-point DCT-II matrix, row k = c_k * cos((2m+1) k pi / 16).
struct DctTable {
    float t[8][8];
    DctTable() {
        const double pi = std::numbers::pi;
        for (int k = 0; k < 8; ++k) {
            double ck = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int m = 0; m < 8; ++m)
                t[k][m] = static_cast<float>(ck * std::cos((2 * m + 1) * k * pi / 16.0));
        }
    }
};
const DctTable kDct;
}  // namespace

size_t Graph::numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("ad: non-positive dim");
        n *= static_cast<size_t>(d);
    }
    return n;
}

Graph::Id Graph::make(std::vector<int> shape, std::vector<float> val, bool req,
                      std::function<void()> back) {
    if (numel(shape) != val.size()) throw std::invalid_argument("ad: shape/data mismatch");
    Node n;
    n.shape = std::move(shape);
    n.val = std::move(val);
    n.grad.assign(n.val.size(), 0.0f);
    n.back = std::move(back);
    n.requires_grad = req;
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

Graph::Id Graph::input(std::vector<int> shape, std::vector<float> data) {
    return make(std::move(shape), std::move(data), true);
}

Graph::Id Graph::constant(std::vector<int> shape, std::vector<float> data) {
    return make(std::move(shape), std::move(data), false);
}

void Graph::check_same_shape(Id a, Id b, const char* op) const {
    if (node(a).shape != node(b).shape)
        throw std::invalid_argument(std::string("ad: shape mismatch in ") + op);
}

std::span<const float> Graph::val(Id id) const { return node(id).val; }
std::span<const float> Graph::grad(Id id) const { return node(id).grad; }
const std::vector<int>& Graph::shape(Id id) const { return node(id).shape; }

// ---------------------------------------------------------------------------
// elementwise

Graph::Id Graph::add(Id a, Id b) {
    const bool bs = node(b).val.size() == 1;
    const bool as = node(a).val.size() == 1;
    if (!as && !bs) check_same_shape(a, b, "add");
    if (as && !bs) std::swap(a, b);  // scalar on the right
    const auto& av = node(a).val;
    const float sb = node(b).val[0];
    const bool scalar_rhs = node(b).val.size() == 1 && node(a).val.size() != 1;
    std::vector<float> out(av.size());
    if (scalar_rhs)
        for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + sb;
    else
        for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + node(b).val[i];
    bool req = node(a).requires_grad || node(b).requires_grad;
    Id id = make(node(a).shape, std::move(out), req);
    node(id).back = [this, a, b, id, scalar_rhs] {
        const auto& g = node(id).grad;
        if (node(a).requires_grad) {
            auto& ga = node(a).grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (node(b).requires_grad) {
            auto& gb = node(b).grad;
            if (scalar_rhs)
                for (float gi : g) gb[0] += gi;
            else
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    };
    return id;
}

Graph::Id Graph::sub(Id a, Id b) {
    const bool bs = node(b).val.size() == 1 && node(a).val.size() != 1;
    if (!bs) check_same_shape(a, b, "sub");
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - node(b).val[bs ? 0 : i];
    bool req = node(a).requires_grad || node(b).requires_grad;
    Id id = make(node(a).shape, std::move(out), req);
    node(id).back = [this, a, b, id, bs] {
        const auto& g = node(id).grad;
        if (node(a).requires_grad) {
            auto& ga = node(a).grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (node(b).requires_grad) {
            auto& gb = node(b).grad;
            if (bs)
                for (float gi : g) gb[0] -= gi;
            else
                for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    };
    return id;
}

Graph::Id Graph::mul(Id a, Id b) {
    const bool as = node(a).val.size() == 1;
    const bool bs = node(b).val.size() == 1;
    if (as && !bs) std::swap(a, b);
    const bool scalar_rhs = node(b).val.size() == 1 && node(a).val.size() != 1;
    if (!scalar_rhs && !(as && bs)) check_same_shape(a, b, "mul");
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * node(b).val[scalar_rhs ? 0 : i];
    bool req = node(a).requires_grad || node(b).requires_grad;
    Id id = make(node(a).shape, std::move(out), req);
    node(id).back = [this, a, b, id, scalar_rhs] {
        const auto& g = node(id).grad;
        const auto& av2 = node(a).val;
        const auto& bv2 = node(b).val;
        if (node(a).requires_grad) {
            auto& ga = node(a).grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[scalar_rhs ? 0 : i];
        }
        if (node(b).requires_grad) {
            auto& gb = node(b).grad;
            if (scalar_rhs)
                for (size_t i = 0; i < g.size(); ++i) gb[0] += g[i] * av2[i];
            else
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
        }
    };
    return id;
}

Graph::Id Graph::div(Id a, Id b) {
    if (node(b).val.size() != 1) throw std::invalid_argument("ad: div expects scalar divisor");
    const float bv = node(b).val[0];
    if (bv == 0.0f) throw std::invalid_argument("ad: division by zero");
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] / bv;
    bool req = node(a).requires_grad || node(b).requires_grad;
    Id id = make(node(a).shape, std::move(out), req);
    node(id).back = [this, a, b, id] {
        const auto& g = node(id).grad;
        const float bv2 = node(b).val[0];
        if (node(a).requires_grad) {
            auto& ga = node(a).grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv2;
        }
        if (node(b).requires_grad) {
            auto& gb = node(b).grad;
            const auto& av2 = node(a).val;
            for (size_t i = 0; i < g.size(); ++i) gb[0] -= g[i] * av2[i] / (bv2 * bv2);
        }
    };
    return id;
}

Graph::Id Graph::scale(Id a, float c) {
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
    Id id = make(node(a).shape, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id, c] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        auto& ga = node(a).grad;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    };
    return id;
}

Graph::Id Graph::add_scalar(Id a, float c) {
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + c;
    Id id = make(node(a).shape, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        auto& ga = node(a).grad;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
    return id;
}

// ---------------------------------------------------------------------------
// nonlinearities

Graph::Id Graph::relu(Id a) {
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0f ? av[i] : 0.0f;
    Id id = make(node(a).shape, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        const auto& av2 = node(a).val;
        auto& ga = node(a).grad;
        for (size_t i = 0; i < g.size(); ++i)
            if (av2[i] > 0.0f) ga[i] += g[i];
    };
    return id;
}

Graph::Id Graph::gelu(Id a) {
    // tanh approximation
    constexpr float k0 = 0.7978845608028654f;  // sqrt(2/pi)
    constexpr float k1 = 0.044715f;
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) {
        float x = av[i];
        out[i] = 0.5f * x * (1.0f + std::tanh(k0 * (x + k1 * x * x * x)));
    }
    Id id = make(node(a).shape, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        const auto& av2 = node(a).val;
        auto& ga = node(a).grad;
        constexpr float c0 = 0.7978845608028654f, c1 = 0.044715f;
        for (size_t i = 0; i < g.size(); ++i) {
            float x = av2[i];
            float u = c0 * (x + c1 * x * x * x);
            float t = std::tanh(u);
            float du = c0 * (1.0f + 3.0f * c1 * x * x);
            float d = 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du;
            ga[i] += g[i] * d;
        }
    };
    return id;
}

Graph::Id Graph::tanh_(Id a) {
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = std::tanh(av[i]);
    Id id = make(node(a).shape, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        const auto& yv = node(id).val;
        auto& ga = node(a).grad;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0f - yv[i] * yv[i]);
    };
    return id;
}

Graph::Id Graph::exp_(Id a) {
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = std::exp(av[i]);
    Id id = make(node(a).shape, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        const auto& yv = node(id).val;
        auto& ga = node(a).grad;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * yv[i];
    };
    return id;
}

Graph::Id Graph::log_(Id a) {
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = std::log(av[i]);
    Id id = make(node(a).shape, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        const auto& av2 = node(a).val;
        auto& ga = node(a).grad;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / av2[i];
    };
    return id;
}

Graph::Id Graph::sqrt_(Id a) {
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = std::sqrt(av[i]);
    Id id = make(node(a).shape, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        const auto& yv = node(id).val;
        auto& ga = node(a).grad;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * 0.5f / yv[i];
    };
    return id;
}

Graph::Id Graph::soft_round(Id a) {
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i)
        out[i] = av[i] - std::sin(kTwoPi * av[i]) / kTwoPi;
    Id id = make(node(a).shape, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        const auto& av2 = node(a).val;
        auto& ga = node(a).grad;
        for (size_t i = 0; i < g.size(); ++i)
            ga[i] += g[i] * (1.0f - std::cos(kTwoPi * av2[i]));
    };
    return id;
}

Graph::Id Graph::clamp(Id a, float lo, float hi) {
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = std::min(hi, std::max(lo, av[i]));
    Id id = make(node(a).shape, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id, lo, hi] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        const auto& av2 = node(a).val;
        auto& ga = node(a).grad;
        for (size_t i = 0; i < g.size(); ++i)
            if (av2[i] >= lo && av2[i] <= hi) ga[i] += g[i];
    };
    return id;
}

// ---------------------------------------------------------------------------
// reductions

Graph::Id Graph::sum(Id a) {
    double s = 0.0;
    for (float v : node(a).val) s += v;
    Id id = make({1}, {static_cast<float>(s)}, node(a).requires_grad);
    node(id).back = [this, a, id] {
        if (!node(a).requires_grad) return;
        const float g = node(id).grad[0];
        auto& ga = node(a).grad;
        for (float& gi : ga) gi += g;
    };
    return id;
}

Graph::Id Graph::mean(Id a) {
    const float inv = 1.0f / static_cast<float>(node(a).val.size());
    return scale(sum(a), inv);
}

// ---------------------------------------------------------------------------
// linear algebra

Graph::Id Graph::matmul(Id a, Id b) {
    const auto& sa = node(a).shape;
    const auto& sb = node(b).shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        throw std::invalid_argument("ad: matmul shape mismatch");
    const int m = sa[0], k = sa[1], n = sb[1];
    std::vector<float> out(static_cast<size_t>(m) * n, 0.0f);
    const auto& av = node(a).val;
    const auto& bv = node(b).val;
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const float aip = av[static_cast<size_t>(i) * k + p];
            if (aip == 0.0f) continue;
            const float* brow = &bv[static_cast<size_t>(p) * n];
            float* orow = &out[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    bool req = node(a).requires_grad || node(b).requires_grad;
    Id id = make({m, n}, std::move(out), req);
    node(id).back = [this, a, b, id, m, k, n] {
        const auto& g = node(id).grad;
        if (node(a).requires_grad) {  // dA = g * B^T
            auto& ga = node(a).grad;
            const auto& bv2 = node(b).val;
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    const float* grow = &g[static_cast<size_t>(i) * n];
                    const float* brow = &bv2[static_cast<size_t>(p) * n];
                    float acc = 0.0f;
                    for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    ga[static_cast<size_t>(i) * k + p] += acc;
                }
        }
        if (node(b).requires_grad) {  // dB = A^T * g
            auto& gb = node(b).grad;
            const auto& av2 = node(a).val;
            for (int p = 0; p < k; ++p)
                for (int i = 0; i < m; ++i) {
                    const float aip = av2[static_cast<size_t>(i) * k + p];
                    if (aip == 0.0f) continue;
                    const float* grow = &g[static_cast<size_t>(i) * n];
                    float* gbrow = &gb[static_cast<size_t>(p) * n];
                    for (int j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                }
        }
    };
    return id;
}

Graph::Id Graph::transpose(Id a) {
    const auto& sa = node(a).shape;
    if (sa.size() != 2) throw std::invalid_argument("ad: transpose expects 2-D");
    const int m = sa[0], n = sa[1];
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(j) * m + i] = av[static_cast<size_t>(i) * n + j];
    Id id = make({n, m}, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id, m, n] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        auto& ga = node(a).grad;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                ga[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
    };
    return id;
}

Graph::Id Graph::softmax_rows(Id a) {
    const auto& sa = node(a).shape;
    if (sa.size() != 2) throw std::invalid_argument("ad: softmax_rows expects 2-D");
    const int m = sa[0], n = sa[1];
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    for (int i = 0; i < m; ++i) {
        const float* row = &av[static_cast<size_t>(i) * n];
        float mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < n; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(i) * n + j] =
                static_cast<float>(std::exp(static_cast<double>(row[j]) - mx) / z);
    }
    Id id = make({m, n}, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id, m, n] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        const auto& yv = node(id).val;
        auto& ga = node(a).grad;
        for (int i = 0; i < m; ++i) {
            const float* grow = &g[static_cast<size_t>(i) * n];
            const float* yrow = &yv[static_cast<size_t>(i) * n];
            float dot = 0.0f;
            for (int j = 0; j < n; ++j) dot += grow[j] * yrow[j];
            float* garow = &ga[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) garow[j] += yrow[j] * (grow[j] - dot);
        }
    };
    return id;
}

Graph::Id Graph::log_softmax(Id a) {
    if (node(a).shape.size() != 1) throw std::invalid_argument("ad: log_softmax expects 1-D");
    const auto& av = node(a).val;
    const size_t n = av.size();
    float mx = av[0];
    for (float v : av) mx = std::max(mx, v);
    double z = 0.0;
    for (float v : av) z += std::exp(static_cast<double>(v) - mx);
    const float lse = mx + static_cast<float>(std::log(z));
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = av[i] - lse;
    Id id = make(node(a).shape, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        const auto& yv = node(id).val;
        auto& ga = node(a).grad;
        float gs = 0.0f;
        for (float gi : g) gs += gi;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] - std::exp(yv[i]) * gs;
    };
    return id;
}

Graph::Id Graph::layernorm_rows(Id a, Id gamma, Id beta, float eps) {
    const auto& sa = node(a).shape;
    if (sa.size() != 2) throw std::invalid_argument("ad: layernorm expects 2-D");
    const int m = sa[0], n = sa[1];
    if (node(gamma).val.size() != static_cast<size_t>(n) ||
        node(beta).val.size() != static_cast<size_t>(n))
        throw std::invalid_argument("ad: layernorm param size");
    const auto& av = node(a).val;
    const auto& gv = node(gamma).val;
    const auto& bv = node(beta).val;
    std::vector<float> out(av.size());
    std::vector<float> xhat(av.size());
    std::vector<float> inv_std(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        const float* row = &av[static_cast<size_t>(i) * n];
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += row[j];
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            double d = row[j] - mu;
            var += d * d;
        }
        var /= n;
        float is = static_cast<float>(1.0 / std::sqrt(var + eps));
        inv_std[static_cast<size_t>(i)] = is;
        for (int j = 0; j < n; ++j) {
            float xh = (row[j] - static_cast<float>(mu)) * is;
            xhat[static_cast<size_t>(i) * n + j] = xh;
            out[static_cast<size_t>(i) * n + j] = gv[j] * xh + bv[j];
        }
    }
    bool req = node(a).requires_grad;
    Id id = make({m, n}, std::move(out), req);
    node(id).back = [this, a, gamma, id, m, n, xhat = std::move(xhat),
                     inv_std = std::move(inv_std)] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        const auto& gv2 = node(gamma).val;
        auto& ga = node(a).grad;
        for (int i = 0; i < m; ++i) {
            const float* grow = &g[static_cast<size_t>(i) * n];
            const float* xrow = &xhat[static_cast<size_t>(i) * n];
            float sum_gg = 0.0f, sum_ggx = 0.0f;
            for (int j = 0; j < n; ++j) {
                float gg = grow[j] * gv2[j];
                sum_gg += gg;
                sum_ggx += gg * xrow[j];
            }
            const float is = inv_std[static_cast<size_t>(i)];
            float* garow = &ga[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) {
                float gg = grow[j] * gv2[j];
                garow[j] += is * (gg - sum_gg / n - xrow[j] * sum_ggx / n);
            }
        }
    };
    return id;
}

// ---------------------------------------------------------------------------
// structure

Graph::Id Graph::reshape(Id a, std::vector<int> shape) {
    if (numel(shape) != node(a).val.size()) throw std::invalid_argument("ad: reshape numel");
    Id id = make(std::move(shape), node(a).val, node(a).requires_grad);
    node(id).back = [this, a, id] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        auto& ga = node(a).grad;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
    return id;
}

Graph::Id Graph::select(Id a, std::vector<int> flat_indices) {
    const auto& av = node(a).val;
    std::vector<float> out(flat_indices.size());
    for (size_t i = 0; i < flat_indices.size(); ++i) {
        int idx = flat_indices[i];
        if (idx < 0 || static_cast<size_t>(idx) >= av.size())
            throw std::invalid_argument("ad: select index out of range");
        out[i] = av[static_cast<size_t>(idx)];
    }
    Id id = make({static_cast<int>(flat_indices.size())}, std::move(out),
                 node(a).requires_grad);
    node(id).back = [this, a, id, idxs = std::move(flat_indices)] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        auto& ga = node(a).grad;
        for (size_t i = 0; i < idxs.size(); ++i) ga[static_cast<size_t>(idxs[i])] += g[i];
    };
    return id;
}

Graph::Id Graph::gather_rows(Id a, std::vector<int> rows) {
    const auto& sa = node(a).shape;
    if (sa.size() != 2) throw std::invalid_argument("ad: gather_rows expects 2-D");
    const int n = sa[1];
    const auto& av = node(a).val;
    std::vector<float> out(rows.size() * static_cast<size_t>(n));
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= sa[0])
            throw std::invalid_argument("ad: gather_rows row out of range");
        std::copy_n(&av[static_cast<size_t>(rows[i]) * n], n, &out[i * static_cast<size_t>(n)]);
    }
    Id id = make({static_cast<int>(rows.size()), n}, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id, n, rows = std::move(rows)] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        auto& ga = node(a).grad;
        for (size_t i = 0; i < rows.size(); ++i)
            for (int j = 0; j < n; ++j)
                ga[static_cast<size_t>(rows[i]) * n + j] += g[i * static_cast<size_t>(n) + j];
    };
    return id;
}

Graph::Id Graph::concat_rows(Id a, Id b) {
    const auto& sa = node(a).shape;
    const auto& sb = node(b).shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[1])
        throw std::invalid_argument("ad: concat_rows column mismatch");
    const int n = sa[1];
    std::vector<float> out;
    out.reserve(node(a).val.size() + node(b).val.size());
    out.insert(out.end(), node(a).val.begin(), node(a).val.end());
    out.insert(out.end(), node(b).val.begin(), node(b).val.end());
    bool req = node(a).requires_grad || node(b).requires_grad;
    Id id = make({sa[0] + sb[0], n}, std::move(out), req);
    node(id).back = [this, a, b, id] {
        const auto& g = node(id).grad;
        const size_t na = node(a).val.size();
        if (node(a).requires_grad) {
            auto& ga = node(a).grad;
            for (size_t i = 0; i < na; ++i) ga[i] += g[i];
        }
        if (node(b).requires_grad) {
            auto& gb = node(b).grad;
            for (size_t i = 0; i < node(b).val.size(); ++i) gb[i] += g[na + i];
        }
    };
    return id;
}

Graph::Id Graph::slice_rows(Id a, int r0, int r1) {
    const auto& sa = node(a).shape;
    if (sa.size() != 2 || r0 < 0 || r1 > sa[0] || r0 >= r1)
        throw std::invalid_argument("ad: slice_rows range");
    const int n = sa[1];
    const auto& av = node(a).val;
    std::vector<float> out(static_cast<size_t>(r1 - r0) * n);
    std::copy_n(&av[static_cast<size_t>(r0) * n], out.size(), out.data());
    Id id = make({r1 - r0, n}, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id, r0, n] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        auto& ga = node(a).grad;
        for (size_t i = 0; i < g.size(); ++i) ga[static_cast<size_t>(r0) * n + i] += g[i];
    };
    return id;
}

Graph::Id Graph::concat_vec(Id a, Id b) {
    if (node(a).shape.size() != 1 || node(b).shape.size() != 1)
        throw std::invalid_argument("ad: concat_vec expects 1-D");
    std::vector<float> out;
    out.reserve(node(a).val.size() + node(b).val.size());
    out.insert(out.end(), node(a).val.begin(), node(a).val.end());
    out.insert(out.end(), node(b).val.begin(), node(b).val.end());
    bool req = node(a).requires_grad || node(b).requires_grad;
    const int total = static_cast<int>(out.size());
    Id id = make({total}, std::move(out), req);
    node(id).back = [this, a, b, id] {
        const auto& g = node(id).grad;
        const size_t na = node(a).val.size();
        if (node(a).requires_grad) {
            auto& ga = node(a).grad;
            for (size_t i = 0; i < na; ++i) ga[i] += g[i];
        }
        if (node(b).requires_grad) {
            auto& gb = node(b).grad;
            for (size_t i = 0; i < node(b).val.size(); ++i) gb[i] += g[na + i];
        }
    };
    return id;
}

Graph::Id Graph::mean_rows(Id a) {
    const auto& sa = node(a).shape;
    if (sa.size() != 2) throw std::invalid_argument("ad: mean_rows expects 2-D");
    const int m = sa[0], n = sa[1];
    const auto& av = node(a).val;
    std::vector<float> out(static_cast<size_t>(n), 0.0f);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(j)] += av[static_cast<size_t>(i) * n + j];
    for (float& v : out) v /= static_cast<float>(m);
    Id id = make({n}, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id, m, n] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        auto& ga = node(a).grad;
        const float inv = 1.0f / static_cast<float>(m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) ga[static_cast<size_t>(i) * n + j] += g[j] * inv;
    };
    return id;
}

// ---------------------------------------------------------------------------
// image ops

namespace {
void check_hwc(const std::vector<int>& s, const char* op) {
    if (s.size() != 3) throw std::invalid_argument(std::string("ad: expected [h,w,c] in ") + op);
}
}  // namespace

Graph::Id Graph::crop2d(Id a, int y0, int x0, int oh, int ow) {
    check_hwc(node(a).shape, "crop2d");
    const int h = node(a).shape[0], w = node(a).shape[1], c = node(a).shape[2];
    if (y0 < 0 || x0 < 0 || oh < 1 || ow < 1 || y0 + oh > h || x0 + ow > w)
        throw std::invalid_argument("ad: crop2d out of bounds");
    const auto& av = node(a).val;
    std::vector<float> out(static_cast<size_t>(oh) * ow * c);
    for (int y = 0; y < oh; ++y)
        std::copy_n(&av[((static_cast<size_t>(y0 + y) * w) + x0) * c],
                    static_cast<size_t>(ow) * c, &out[static_cast<size_t>(y) * ow * c]);
    Id id = make({oh, ow, c}, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id, y0, x0, oh, ow, w, c] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        auto& ga = node(a).grad;
        for (int y = 0; y < oh; ++y)
            for (size_t i = 0; i < static_cast<size_t>(ow) * c; ++i)
                ga[((static_cast<size_t>(y0 + y) * w) + x0) * c + i] +=
                    g[static_cast<size_t>(y) * ow * c + i];
    };
    return id;
}

Graph::Id Graph::pad2d(Id a, int top, int bottom, int left, int right, float value) {
    check_hwc(node(a).shape, "pad2d");
    if (top < 0 || bottom < 0 || left < 0 || right < 0)
        throw std::invalid_argument("ad: pad2d negative pad");
    const int h = node(a).shape[0], w = node(a).shape[1], c = node(a).shape[2];
    const int oh = h + top + bottom, ow = w + left + right;
    const auto& av = node(a).val;
    std::vector<float> out(static_cast<size_t>(oh) * ow * c, value);
    for (int y = 0; y < h; ++y)
        std::copy_n(&av[static_cast<size_t>(y) * w * c], static_cast<size_t>(w) * c,
                    &out[((static_cast<size_t>(top + y) * ow) + left) * c]);
    Id id = make({oh, ow, c}, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id, top, left, h, w, c] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        auto& ga = node(a).grad;
        const int ow = node(id).shape[1];
        for (int y = 0; y < h; ++y)
            for (size_t i = 0; i < static_cast<size_t>(w) * c; ++i)
                ga[static_cast<size_t>(y) * w * c + i] +=
                    g[((static_cast<size_t>(top + y) * ow) + left) * c + i];
    };
    return id;
}

Graph::Id Graph::pad_replicate2d(Id a, int bottom, int right) {
    const auto& sa = node(a).shape;
    if (sa.size() != 2) throw std::invalid_argument("ad: pad_replicate2d expects [h,w]");
    const int h = sa[0], w = sa[1];
    const int oh = h + bottom, ow = w + right;
    const auto& av = node(a).val;
    std::vector<float> out(static_cast<size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
        const int sy = std::min(y, h - 1);
        for (int x = 0; x < ow; ++x)
            out[static_cast<size_t>(y) * ow + x] = av[static_cast<size_t>(sy) * w + std::min(x, w - 1)];
    }
    Id id = make({oh, ow}, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id, h, w, oh, ow] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        auto& ga = node(a).grad;
        for (int y = 0; y < oh; ++y) {
            const int sy = std::min(y, h - 1);
            for (int x = 0; x < ow; ++x)
                ga[static_cast<size_t>(sy) * w + std::min(x, w - 1)] +=
                    g[static_cast<size_t>(y) * ow + x];
        }
    };
    return id;
}

Graph::Id Graph::resize_bilinear(Id a, int oh, int ow) {
    check_hwc(node(a).shape, "resize_bilinear");
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("ad: resize output size");
    const int h = node(a).shape[0], w = node(a).shape[1], c = node(a).shape[2];
    const auto& av = node(a).val;
    const float sy = static_cast<float>(h) / oh;
    const float sx = static_cast<float>(w) / ow;
    // Save the 4-tap stencil per output pixel for the backward scatter.
    struct Tap {
        int y0, y1, x0, x1;
        float wy, wx;
    };
    std::vector<Tap> taps(static_cast<size_t>(oh) * ow);
    std::vector<float> out(static_cast<size_t>(oh) * ow * c);
    for (int oy = 0; oy < oh; ++oy) {
        float fy = (oy + 0.5f) * sy - 0.5f;
        int y0 = static_cast<int>(std::floor(fy));
        float wy = fy - y0;
        int y0c = std::clamp(y0, 0, h - 1), y1c = std::clamp(y0 + 1, 0, h - 1);
        for (int ox = 0; ox < ow; ++ox) {
            float fx = (ox + 0.5f) * sx - 0.5f;
            int x0 = static_cast<int>(std::floor(fx));
            float wx = fx - x0;
            int x0c = std::clamp(x0, 0, w - 1), x1c = std::clamp(x0 + 1, 0, w - 1);
            taps[static_cast<size_t>(oy) * ow + ox] = {y0c, y1c, x0c, x1c, wy, wx};
            for (int ch = 0; ch < c; ++ch) {
                auto atv = [&](int y, int x) {
                    return av[(static_cast<size_t>(y) * w + x) * c + ch];
                };
                out[(static_cast<size_t>(oy) * ow + ox) * c + ch] =
                    (1 - wy) * ((1 - wx) * atv(y0c, x0c) + wx * atv(y0c, x1c)) +
                    wy * ((1 - wx) * atv(y1c, x0c) + wx * atv(y1c, x1c));
            }
        }
    }
    Id id = make({oh, ow, c}, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id, oh, ow, w, c, taps = std::move(taps)] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        auto& ga = node(a).grad;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const Tap& t = taps[static_cast<size_t>(oy) * ow + ox];
                for (int ch = 0; ch < c; ++ch) {
                    const float gv = g[(static_cast<size_t>(oy) * ow + ox) * c + ch];
                    ga[(static_cast<size_t>(t.y0) * w + t.x0) * c + ch] += (1 - t.wy) * (1 - t.wx) * gv;
                    ga[(static_cast<size_t>(t.y0) * w + t.x1) * c + ch] += (1 - t.wy) * t.wx * gv;
                    ga[(static_cast<size_t>(t.y1) * w + t.x0) * c + ch] += t.wy * (1 - t.wx) * gv;
                    ga[(static_cast<size_t>(t.y1) * w + t.x1) * c + ch] += t.wy * t.wx * gv;
                }
            }
    };
    return id;
}

Graph::Id Graph::color_transform(Id a, const float M[9], const float bias[3]) {
    check_hwc(node(a).shape, "color_transform");
    if (node(a).shape[2] != 3) throw std::invalid_argument("ad: color_transform needs 3 channels");
    const int h = node(a).shape[0], w = node(a).shape[1];
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    std::array<float, 9> m;
    std::copy_n(M, 9, m.begin());
    std::array<float, 3> bs;
    std::copy_n(bias, 3, bs.begin());
    for (size_t p = 0; p < static_cast<size_t>(h) * w; ++p) {
        const float r = av[p * 3], g = av[p * 3 + 1], b = av[p * 3 + 2];
        out[p * 3] = m[0] * r + m[1] * g + m[2] * b + bs[0];
        out[p * 3 + 1] = m[3] * r + m[4] * g + m[5] * b + bs[1];
        out[p * 3 + 2] = m[6] * r + m[7] * g + m[8] * b + bs[2];
    }
    Id id = make(node(a).shape, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id, m, h, w] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        auto& ga = node(a).grad;
        for (size_t p = 0; p < static_cast<size_t>(h) * w; ++p) {
            const float g0 = g[p * 3], g1 = g[p * 3 + 1], g2 = g[p * 3 + 2];
            ga[p * 3] += m[0] * g0 + m[3] * g1 + m[6] * g2;
            ga[p * 3 + 1] += m[1] * g0 + m[4] * g1 + m[7] * g2;
            ga[p * 3 + 2] += m[2] * g0 + m[5] * g1 + m[8] * g2;
        }
    };
    return id;
}

Graph::Id Graph::split_channel(Id a, int ch) {
    check_hwc(node(a).shape, "split_channel");
    const int h = node(a).shape[0], w = node(a).shape[1], c = node(a).shape[2];
    if (ch < 0 || ch >= c) throw std::invalid_argument("ad: split_channel index");
    const auto& av = node(a).val;
    std::vector<float> out(static_cast<size_t>(h) * w);
    for (size_t p = 0; p < out.size(); ++p) out[p] = av[p * c + ch];
    Id id = make({h, w}, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id, ch, c] {
        if (!node(a).requires_grad) return;
        const auto& g = node(id).grad;
        auto& ga = node(a).grad;
        for (size_t p = 0; p < g.size(); ++p) ga[p * c + ch] += g[p];
    };
    return id;
}

Graph::Id Graph::merge_channels(Id r, Id g, Id b) {
    const auto& sr = node(r).shape;
    if (sr.size() != 2 || node(g).shape != sr || node(b).shape != sr)
        throw std::invalid_argument("ad: merge_channels shape mismatch");
    const int h = sr[0], w = sr[1];
    const size_t hw = static_cast<size_t>(h) * w;
    std::vector<float> out(hw * 3);
    for (size_t p = 0; p < hw; ++p) {
        out[p * 3] = node(r).val[p];
        out[p * 3 + 1] = node(g).val[p];
        out[p * 3 + 2] = node(b).val[p];
    }
    bool req = node(r).requires_grad || node(g).requires_grad || node(b).requires_grad;
    Id id = make({h, w, 3}, std::move(out), req);
    node(id).back = [this, r, g, b, id, hw] {
        const auto& gr = node(id).grad;
        Id chans[3] = {r, g, b};
        for (int ch = 0; ch < 3; ++ch) {
            if (!node(chans[ch]).requires_grad) continue;
            auto& gc = node(chans[ch]).grad;
            for (size_t p = 0; p < hw; ++p) gc[p] += gr[p * 3 + ch];
        }
    };
    return id;
}

Graph::Id Graph::dct8x8(Id a, bool forward) {
    const auto& sa = node(a).shape;
    if (sa.size() != 2 || sa[0] % 8 != 0 || sa[1] % 8 != 0)
        throw std::invalid_argument("ad: dct8x8 expects [h,w] multiples of 8");
    const int h = sa[0], w = sa[1];
    const auto& av = node(a).val;
    std::vector<float> out(av.size());
    // Y = T X T^t (forward) or T^t X T (inverse), per 8x8 block.
    auto apply = [h, w](const std::vector<float>& src, std::vector<float>& dst, bool fwd) {
        float tmp[8][8];
        for (int by = 0; by < h; by += 8)
            for (int bx = 0; bx < w; bx += 8) {
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        float acc = 0.0f;
                        for (int k = 0; k < 8; ++k) {
                            float tik = fwd ? kDct.t[i][k] : kDct.t[k][i];
                            acc += tik * src[static_cast<size_t>(by + k) * w + bx + j];
                        }
                        tmp[i][j] = acc;
                    }
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        float acc = 0.0f;
                        for (int k = 0; k < 8; ++k) {
                            float tjk = fwd ? kDct.t[j][k] : kDct.t[k][j];
                            acc += tmp[i][k] * tjk;
                        }
                        dst[static_cast<size_t>(by + i) * w + bx + j] = acc;
                    }
            }
    };
    apply(av, out, forward);
    Id id = make({h, w}, std::move(out), node(a).requires_grad);
    node(id).back = [this, a, id, apply, forward] {
        if (!node(a).requires_grad) return;
        // The transform is orthogonal, so the adjoint is the inverse direction.
        std::vector<float> gin(node(id).grad.size());
        apply(node(id).grad, gin, !forward);
        auto& ga = node(a).grad;
        for (size_t i = 0; i < gin.size(); ++i) ga[i] += gin[i];
    };
    return id;
}

Graph::Id Graph::cosine_rows(Id e, Id rows) {
    const auto& se = node(e).shape;
    const auto& sr = node(rows).shape;
    if (se.size() != 1 || sr.size() != 2 || sr[1] != se[0])
        throw std::invalid_argument("ad: cosine_rows shape mismatch");
    const int n = sr[0], d = sr[1];
    const auto& ev = node(e).val;
    const auto& rv = node(rows).val;
    double en2 = 0.0;
    for (float v : ev) en2 += static_cast<double>(v) * v;
    const float enorm = static_cast<float>(std::sqrt(en2));
    if (enorm == 0.0f) throw std::invalid_argument("cosine: zero-norm embedding");
    std::vector<float> rnorm(static_cast<size_t>(n));
    std::vector<float> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const float* row = &rv[static_cast<size_t>(i) * d];
        double rn2 = 0.0, dot = 0.0;
        for (int j = 0; j < d; ++j) {
            rn2 += static_cast<double>(row[j]) * row[j];
            dot += static_cast<double>(row[j]) * ev[static_cast<size_t>(j)];
        }
        rnorm[static_cast<size_t>(i)] = static_cast<float>(std::sqrt(rn2));
        if (rnorm[static_cast<size_t>(i)] == 0.0f)
            throw std::invalid_argument("cosine: zero-norm exemplar row");
        out[static_cast<size_t>(i)] =
            static_cast<float>(dot / (static_cast<double>(enorm) * rnorm[static_cast<size_t>(i)]));
    }
    Id id = make({n}, std::move(out), node(e).requires_grad);
    node(id).back = [this, e, rows, id, n, d, enorm, rnorm = std::move(rnorm)] {
        if (!node(e).requires_grad) return;
        const auto& g = node(id).grad;
        const auto& sv = node(id).val;
        const auto& ev2 = node(e).val;
        const auto& rv2 = node(rows).val;
        auto& ge = node(e).grad;
        // ds_i/de = v_i/(|e||v_i|) - s_i * e/|e|^2
        for (int i = 0; i < n; ++i) {
            const float gi = g[static_cast<size_t>(i)];
            if (gi == 0.0f) continue;
            const float* row = &rv2[static_cast<size_t>(i) * d];
            const float c1 = 1.0f / (enorm * rnorm[static_cast<size_t>(i)]);
            const float c2 = sv[static_cast<size_t>(i)] / (enorm * enorm);
            for (int j = 0; j < d; ++j)
                ge[static_cast<size_t>(j)] += gi * (row[j] * c1 - c2 * ev2[static_cast<size_t>(j)]);
        }
    };
    return id;
}

void Graph::backward(Id loss) {
    if (node(loss).val.size() != 1)
        throw std::invalid_argument("ad: backward expects scalar loss");
    node(loss).grad[0] = 1.0f;
    for (Id i = loss; i >= 0; --i) {
        Node& n = node(i);
        if (n.requires_grad && n.back) n.back();
    }
}

EvalResult value_and_grad(const std::vector<int>& shape, const std::vector<float>& x,
                          const std::function<Graph::Id(Graph&, Graph::Id)>& build) {
    Graph g;
    Graph::Id in = g.input(shape, x);
    Graph::Id loss = build(g, in);
    g.backward(loss);
    EvalResult r;
    r.value = g.val(loss)[0];
    auto gr = g.grad(in);
    r.grad.assign(gr.begin(), gr.end());
    return r;
}

}  // namespace vcat::ad
