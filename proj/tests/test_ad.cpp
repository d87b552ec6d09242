#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "vcat/ad.hpp"
#include "vcat/rng.hpp"

using namespace vcat;
using ad::Graph;
using testsupport::gradcheck;
using testsupport::random_vec;

namespace {

// Reduce any node to a scalar with fixed random weights so every output
// component contributes to the checked gradient.
Graph::Id weighted_sum(Graph& g, Graph::Id x, uint64_t seed) {
    const auto& s = g.shape(x);
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    Rng rng(seed);
    std::vector<float> w(n);
    for (float& v : w) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    std::vector<int> flat_shape{static_cast<int>(n)};
    return g.sum(g.mul(g.reshape(x, flat_shape), g.constant(flat_shape, w)));
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
    Rng rng(7);
    auto x = random_vec(24, rng, 0.2f, 0.9f);  // positive, away from kinks
    std::vector<int> shape{4, 6};

    auto check = [&](const testsupport::Builder& b, double tol = 1e-3) {
        auto gc = gradcheck(shape, x, b);
        CAPTURE(gc.max_rel_err);
        CHECK(gc.max_rel_err < tol);
    };

    check([](Graph& g, Graph::Id in) { return g.sum(g.add(in, g.scale(in, 2.0f))); });
    check([](Graph& g, Graph::Id in) { return g.sum(g.sub(in, g.scalar_const(0.3f))); });
    check([](Graph& g, Graph::Id in) { return g.sum(g.mul(in, in)); });
    check([](Graph& g, Graph::Id in) { return g.sum(g.div(g.mul(in, in), g.scalar_const(2.0f))); });
    check([](Graph& g, Graph::Id in) { return g.sum(g.gelu(in)); });
    check([](Graph& g, Graph::Id in) { return g.sum(g.tanh_(in)); });
    check([](Graph& g, Graph::Id in) { return g.sum(g.exp_(in)); });
    check([](Graph& g, Graph::Id in) { return g.sum(g.log_(in)); });
    check([](Graph& g, Graph::Id in) { return g.sum(g.sqrt_(in)); });
    check([](Graph& g, Graph::Id in) { return g.mean(g.relu(g.add_scalar(in, -0.5f))); });
    check([](Graph& g, Graph::Id in) { return g.sum(g.soft_round(g.scale(in, 3.0f))); });
}

TEST_CASE("scalar broadcast against tensors") {
    Graph g;
    auto t = g.input({3}, {1.0f, 2.0f, 3.0f});
    auto s = g.scalar_const(2.0f);
    CHECK(g.val(g.add(t, s))[1] == doctest::Approx(4.0f));
    CHECK(g.val(g.add(s, t))[2] == doctest::Approx(5.0f));
    CHECK(g.val(g.mul(s, t))[0] == doctest::Approx(2.0f));
    CHECK(g.val(g.sub(t, s))[0] == doctest::Approx(-1.0f));
}

TEST_CASE("matmul gradients flow to both operands") {
    Rng rng(11);
    auto x = random_vec(12, rng);
    // d/dA of sum(A*B) where the builder reshapes x into A
    auto gc = gradcheck({3, 4}, x, [](Graph& g, Graph::Id in) {
        Rng wr(5);
        auto b = g.constant({4, 2}, testsupport::random_vec(8, wr));
        return weighted_sum(g, g.matmul(in, b), 99);
    });
    CHECK(gc.max_rel_err < 1e-3);
    // B side
    auto gc2 = gradcheck({4, 2}, random_vec(8, rng), [](Graph& g, Graph::Id in) {
        Rng wr(6);
        auto a = g.constant({3, 4}, testsupport::random_vec(12, wr));
        return weighted_sum(g, g.matmul(a, in), 98);
    });
    CHECK(gc2.max_rel_err < 1e-3);
}

TEST_CASE("softmax, log_softmax, layernorm") {
    Rng rng(13);
    auto gc = gradcheck({2, 5}, random_vec(10, rng), [](Graph& g, Graph::Id in) {
        return weighted_sum(g, g.softmax_rows(in), 42);
    });
    CHECK(gc.max_rel_err < 1e-3);

    auto gc2 = gradcheck({6}, random_vec(6, rng), [](Graph& g, Graph::Id in) {
        return weighted_sum(g, g.log_softmax(in), 43);
    });
    CHECK(gc2.max_rel_err < 1e-3);

    auto gc3 = gradcheck({3, 8}, random_vec(24, rng), [](Graph& g, Graph::Id in) {
        Rng wr(1);
        auto gamma = g.constant({8}, testsupport::random_vec(8, wr, 0.5f, 1.5f));
        auto beta = g.constant({8}, testsupport::random_vec(8, wr, -0.2f, 0.2f));
        return weighted_sum(g, g.layernorm_rows(in, gamma, beta), 44);
    });
    CHECK(gc3.max_rel_err < 2e-3);

    // softmax rows sum to one
    Graph g;
    auto sm = g.softmax_rows(g.constant({2, 4}, {1, 2, 3, 4, -1, 0, 1, 2}));
    auto v = g.val(sm);
    CHECK(v[0] + v[1] + v[2] + v[3] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(v[4] + v[5] + v[6] + v[7] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("structural ops route gradients") {
    Rng rng(17);
    auto gc = gradcheck({4, 3}, random_vec(12, rng), [](Graph& g, Graph::Id in) {
        auto picked = g.gather_rows(in, {2, 0, 2});
        auto sl = g.slice_rows(picked, 0, 2);
        return weighted_sum(g, sl, 7);
    });
    CHECK(gc.max_rel_err < 1e-3);

    auto gc2 = gradcheck({5}, random_vec(5, rng), [](Graph& g, Graph::Id in) {
        auto sel = g.select(in, {4, 4, 1});
        auto cat = g.concat_vec(sel, in);
        return weighted_sum(g, cat, 8);
    });
    CHECK(gc2.max_rel_err < 1e-3);

    auto gc3 = gradcheck({4, 3}, random_vec(12, rng), [](Graph& g, Graph::Id in) {
        Rng wr(2);
        auto other = g.constant({2, 3}, testsupport::random_vec(6, wr));
        return weighted_sum(g, g.concat_rows(other, in), 9);
    });
    CHECK(gc3.max_rel_err < 1e-3);

    auto gc4 = gradcheck({4, 6}, random_vec(24, rng), [](Graph& g, Graph::Id in) {
        return weighted_sum(g, g.mean_rows(in), 10);
    });
    CHECK(gc4.max_rel_err < 1e-3);

    auto gc5 = gradcheck({3, 4}, random_vec(12, rng), [](Graph& g, Graph::Id in) {
        return weighted_sum(g, g.transpose(in), 11);
    });
    CHECK(gc5.max_rel_err < 1e-3);
}

TEST_CASE("image ops: crop, pad, resize, color, channels") {
    Rng rng(19);
    auto x = random_vec(8 * 8 * 3, rng, 0.1f, 0.9f);
    auto gc = gradcheck({8, 8, 3}, x, [](Graph& g, Graph::Id in) {
        return weighted_sum(g, g.crop2d(in, 1, 2, 5, 4), 20);
    });
    CHECK(gc.max_rel_err < 1e-3);

    auto gc2 = gradcheck({8, 8, 3}, x, [](Graph& g, Graph::Id in) {
        return weighted_sum(g, g.pad2d(in, 1, 2, 0, 3, 0.0f), 21);
    });
    CHECK(gc2.max_rel_err < 1e-3);

    auto gc3 = gradcheck({8, 8, 3}, x, [](Graph& g, Graph::Id in) {
        return weighted_sum(g, g.resize_bilinear(in, 5, 11), 22);
    });
    CHECK(gc3.max_rel_err < 1e-3);

    auto gc4 = gradcheck({8, 8, 3}, x, [](Graph& g, Graph::Id in) {
        const float m[9] = {0.3f, 0.5f, 0.2f, -0.1f, 0.7f, 0.4f, 0.6f, -0.3f, 0.1f};
        const float b[3] = {0.1f, -0.2f, 0.0f};
        return weighted_sum(g, g.color_transform(in, m, b), 23);
    });
    CHECK(gc4.max_rel_err < 1e-3);

    auto gc5 = gradcheck({8, 8, 3}, x, [](Graph& g, Graph::Id in) {
        auto r = g.split_channel(in, 0);
        auto gg = g.split_channel(in, 1);
        auto b = g.split_channel(in, 2);
        return weighted_sum(g, g.merge_channels(gg, b, r), 24);
    });
    CHECK(gc5.max_rel_err < 1e-3);

    auto gc6 = gradcheck({6, 6}, random_vec(36, rng), [](Graph& g, Graph::Id in) {
        return weighted_sum(g, g.pad_replicate2d(in, 2, 2), 25);
    });
    CHECK(gc6.max_rel_err < 1e-3);
}

TEST_CASE("dct8x8 is orthonormal and differentiable") {
    Rng rng(23);
    auto x = random_vec(16 * 8, rng);
    Graph g;
    auto in = g.constant({16, 8}, x);
    auto rt = g.dct8x8(g.dct8x8(in, true), false);
    auto v = g.val(rt);
    for (size_t i = 0; i < x.size(); ++i) CHECK(v[i] == doctest::Approx(x[i]).epsilon(1e-4));

    auto gc = gradcheck({8, 8}, random_vec(64, rng), [](Graph& g2, Graph::Id in2) {
        return weighted_sum(g2, g2.dct8x8(in2, true), 26);
    });
    CHECK(gc.max_rel_err < 1e-3);
}

TEST_CASE("cosine_rows values and gradient") {
    Graph g;
    auto e = g.input({3}, {1.0f, 0.0f, 0.0f});
    auto rows = g.constant({3, 3}, {1, 0, 0, -1, 0, 0, 0, 1, 0});
    auto c = g.cosine_rows(e, rows);
    CHECK(g.val(c)[0] == doctest::Approx(1.0));
    CHECK(g.val(c)[1] == doctest::Approx(-1.0));
    CHECK(g.val(c)[2] == doctest::Approx(0.0));

    Rng rng(29);
    auto gc = gradcheck({6}, random_vec(6, rng, 0.2f, 1.0f), [](Graph& g2, Graph::Id in) {
        Rng wr(3);
        auto rows2 = g2.constant({4, 6}, testsupport::random_vec(24, wr, -1.0f, 1.0f));
        return weighted_sum(g2, g2.cosine_rows(in, rows2), 27);
    });
    CHECK(gc.max_rel_err < 2e-3);

    Graph gz;
    auto ez = gz.input({2}, {0.0f, 0.0f});
    auto rz = gz.constant({1, 2}, {1.0f, 0.0f});
    CHECK_THROWS_AS((void)gz.cosine_rows(ez, rz), std::invalid_argument);
}

TEST_CASE("clamp passes gradient only inside the range") {
    Graph g;
    auto in = g.input({4}, {-0.5f, 0.25f, 0.75f, 1.5f});
    auto out = g.clamp(in, 0.0f, 1.0f);
    g.backward(g.sum(out));
    auto gr = g.grad(in);
    CHECK(gr[0] == 0.0f);
    CHECK(gr[1] == 1.0f);
    CHECK(gr[2] == 1.0f);
    CHECK(gr[3] == 0.0f);
}
