#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "tsgen/nn.hpp"
#include "tsgen/tensor.hpp"
#include "tsgen/transforms.hpp"

using namespace tsgen;
using tsgen::test::grad_check;
using tsgen::test::random_const;
using tsgen::test::random_param;
using tsgen::test::weighted_sum;

namespace {
constexpr double kTol = 1e-6;
}

TEST_CASE("elementwise ops match finite differences") {
    Tensor a = random_param({3, 5}, 1);
    Tensor b = random_param({3, 5}, 2);
    CHECK(grad_check({a, b}, [&] { return weighted_sum(add(a, b)); }) < kTol);
    CHECK(grad_check({a, b}, [&] { return weighted_sum(sub(a, b)); }) < kTol);
    CHECK(grad_check({a, b}, [&] { return weighted_sum(mul(a, b)); }) < kTol);
    CHECK(grad_check({a}, [&] { return weighted_sum(scale(a, -1.7)); }) < kTol);
    CHECK(grad_check({a}, [&] { return weighted_sum(add_scalar(a, 0.3)); }) < kTol);
    CHECK(grad_check({a}, [&] { return weighted_sum(mul(a, a)); }) < kTol);  // shared node
}

TEST_CASE("broadcast helpers match finite differences") {
    Tensor x = random_param({2, 3, 4}, 3);
    Tensor bias = random_param({3}, 4);
    Tensor suffix = random_param({3, 4}, 5);
    CHECK(grad_check({x, bias}, [&] { return weighted_sum(add_axis_bias(x, bias, 1)); }) < kTol);
    CHECK(grad_check({x, suffix}, [&] { return weighted_sum(add_suffix(x, suffix)); }) < kTol);
    std::vector<double> rows{0.5, -1.5};
    CHECK(grad_check({x}, [&] { return weighted_sum(mul_rows(x, rows)); }) < kTol);
}

TEST_CASE("linear and bmm match finite differences") {
    Tensor x = random_param({2, 3, 4}, 6);
    Tensor w = random_param({4, 5}, 7);
    Tensor b = random_param({5}, 8);
    CHECK(grad_check({x, w, b}, [&] { return weighted_sum(linear(x, w, b)); }) < kTol);

    Tensor p = random_param({3, 4, 5}, 9);
    Tensor q = random_param({3, 5, 2}, 10);
    CHECK(grad_check({p, q}, [&] { return weighted_sum(bmm(p, q)); }) < kTol);
    Tensor qt = random_param({3, 2, 5}, 11);
    CHECK(grad_check({p, qt}, [&] { return weighted_sum(bmm(p, qt, false, true)); }) < kTol);
    Tensor pt = random_param({3, 5, 4}, 12);
    CHECK(grad_check({pt, q}, [&] { return weighted_sum(bmm(pt, q, true, false)); }) < kTol);
    CHECK(grad_check({pt, qt}, [&] { return weighted_sum(bmm(pt, qt, true, true)); }) < kTol);
}

TEST_CASE("conv2d matches finite differences") {
    Tensor x = random_param({2, 3, 5, 5}, 13);
    Tensor w = random_param({4, 3, 3, 3}, 14, 0.5);
    Tensor b = random_param({4}, 15);
    CHECK(grad_check({x, w, b}, [&] { return weighted_sum(conv2d(x, w, b, 1, 1)); }) < kTol);
    CHECK(grad_check({x, w, b}, [&] { return weighted_sum(conv2d(x, w, b, 2, 1)); }) < kTol);
    Tensor w0 = random_param({2, 3, 1, 1}, 16);
    Tensor b0 = random_param({2}, 17);
    CHECK(grad_check({x, w0, b0}, [&] { return weighted_sum(conv2d(x, w0, b0, 1, 0)); }) < kTol);
}

TEST_CASE("conv_transpose2d matches finite differences") {
    Tensor x = random_param({2, 4, 1, 1}, 18);
    Tensor w = random_param({4, 2, 3, 4}, 19, 0.5);
    Tensor b = random_param({2}, 20);
    CHECK(grad_check({x, w, b}, [&] { return weighted_sum(conv_transpose2d(x, w, b)); }) < kTol);
    Tensor x2 = random_param({1, 2, 3, 3}, 21);
    Tensor w2 = random_param({2, 3, 2, 2}, 22);
    Tensor b2 = random_param({3}, 23);
    CHECK(grad_check({x2, w2, b2}, [&] { return weighted_sum(conv_transpose2d(x2, w2, b2)); }) <
          kTol);
}

TEST_CASE("upsample matches finite differences") {
    Tensor x = random_param({2, 3, 2, 2}, 24);
    CHECK(grad_check({x}, [&] { return weighted_sum(upsample_nearest2(x)); }) < kTol);
}

TEST_CASE("activations match finite differences") {
    // Inputs pushed away from the relu/abs kinks.
    Tensor x = random_param({4, 7}, 25);
    for (auto& v : x.values())
        if (std::abs(v) < 0.05) v = 0.3;
    CHECK(grad_check({x}, [&] { return weighted_sum(relu(x)); }) < kTol);
    CHECK(grad_check({x}, [&] { return weighted_sum(silu(x)); }) < kTol);
    CHECK(grad_check({x}, [&] { return weighted_sum(gelu(x)); }) < kTol);
    CHECK(grad_check({x}, [&] { return weighted_sum(tanh_t(x)); }) < kTol);
    CHECK(grad_check({x}, [&] { return weighted_sum(sigmoid(x)); }) < kTol);
    CHECK(grad_check({x}, [&] { return weighted_sum(abs_t(x)); }) < kTol);
    CHECK(grad_check({x}, [&] { return weighted_sum(clamp(x, -0.9, 0.9)); }) < kTol);
}

TEST_CASE("softmax and norms match finite differences") {
    Tensor x = random_param({3, 2, 6}, 26);
    CHECK(grad_check({x}, [&] { return weighted_sum(softmax_lastdim(x)); }) < kTol);

    Tensor g = random_param({6}, 27);
    Tensor b = random_param({6}, 28);
    CHECK(grad_check({x, g, b}, [&] { return weighted_sum(layer_norm(x, g, b)); }) < 1e-5);

    Tensor img = random_param({2, 6, 3, 3}, 29);
    Tensor gg = random_param({6}, 30);
    Tensor gb = random_param({6}, 31);
    CHECK(grad_check({img, gg, gb},
                     [&] { return weighted_sum(group_norm(img, gg, gb, 3)); }) < 1e-5);
}

TEST_CASE("shape ops match finite differences") {
    Tensor x = random_param({2, 3, 4}, 32);
    CHECK(grad_check({x}, [&] { return weighted_sum(reshape(x, {4, 6})); }) < kTol);
    CHECK(grad_check({x}, [&] { return weighted_sum(permute(x, {2, 0, 1})); }) < kTol);
    CHECK(grad_check({x}, [&] { return weighted_sum(slice(x, 1, 1, 2)); }) < kTol);
    Tensor y = random_param({2, 2, 4}, 33);
    CHECK(grad_check({x, y}, [&] { return weighted_sum(concat({x, y}, 1)); }) < kTol);
}

TEST_CASE("permute round trips values") {
    Tensor x = random_const({2, 3, 4}, 34);
    Tensor p = permute(permute(x, {1, 2, 0}), {2, 0, 1});
    for (std::int64_t i = 0; i < x.numel(); ++i)
        CHECK(p.values()[i] == x.values()[i]);
}

TEST_CASE("reductions and losses match finite differences") {
    Tensor x = random_param({3, 4}, 35);
    CHECK(grad_check({x}, [&] { return sum_all(x); }) < kTol);
    CHECK(grad_check({x}, [&] { return mean_all(x); }) < kTol);
    std::vector<double> w{0.3, -0.7, 1.1};
    CHECK(grad_check({x}, [&] { return dot_const(sum_per_sample(x), w); }) < kTol);

    Tensor z = random_param({6}, 36);
    std::vector<double> targets{1, 0, 1, 1, 0, 0};
    CHECK(grad_check({z}, [&] { return bce_with_logits(z, targets); }) < kTol);
}

TEST_CASE("scale_shift matches finite differences") {
    Tensor x = random_param({2, 3, 2, 2}, 37);
    Tensor s = random_param({2, 3}, 38, 0.3);
    Tensor t = random_param({2, 3}, 39);
    CHECK(grad_check({x, s, t}, [&] { return weighted_sum(scale_shift_2d(x, s, t)); }) < kTol);
}

TEST_CASE("attention and gru match finite differences") {
    ParamStore store;
    Rng rng(40);
    AttentionParams attn = make_attention(store, "attn", 8, 2, rng);
    Tensor x = random_param({2, 5, 8}, 41, 0.5);
    std::vector<Tensor> params{x};
    for (auto& [name, p] : store.all()) params.push_back(p);
    CHECK(grad_check(params, [&] { return weighted_sum(attention_forward(attn, x)); }, 1e-5) <
          1e-5);

    ParamStore gstore;
    GruParams gru = make_gru(gstore, "gru", 3, 4, rng);
    Tensor gx = random_param({2, 3}, 42);
    Tensor gh = random_param({2, 4}, 43, 0.5);
    std::vector<Tensor> gparams{gx, gh};
    for (auto& [name, p] : gstore.all()) gparams.push_back(p);
    CHECK(grad_check(gparams, [&] { return weighted_sum(gru_step(gru, gx, gh)); }) < kTol);
}

TEST_CASE("transform ops match finite differences") {
    DelayConfig cfg{.n = 3, .m = 2, .image_side = 4};
    auto occ = delay_occupancy(6, cfg);
    Tensor x = random_param({2, 2, 6}, 44);
    CHECK(grad_check({x}, [&] { return weighted_sum(series_to_image_op(x, occ, 4)); }) < kTol);

    Tensor xs = random_param({2, 1, 5}, 45, 0.4);  // keep |x| comfortably below 1
    for (auto& v : xs.values()) v = std::clamp(v, -0.9, 0.9);
    CHECK(grad_check({xs}, [&] { return weighted_sum(gaf_image_op(xs, 6)); }, 1e-6) < 1e-4);
}

TEST_CASE("no_grad suppresses graph construction") {
    Tensor a = random_param({2, 2}, 46);
    NoGradGuard guard;
    Tensor y = mul(a, a);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->parents.empty());
}

TEST_CASE("backward accumulates through shared subgraphs") {
    Tensor a = Tensor::param({2}, {3.0, -2.0});
    Tensor s = mul(a, a);          // a^2
    Tensor y = add(s, s);          // 2a^2 -> dy/da = 4a
    backward(sum_all(y));
    CHECK(a.grad()[0] == doctest::Approx(12.0));
    CHECK(a.grad()[1] == doctest::Approx(-8.0));
}

TEST_CASE("adam applies bias-corrected first step") {
    ParamStore store;
    Tensor p = store.add("p", Tensor::param({2}, {1.0, 2.0}));
    p.node()->ensure_grad();
    p.grad()[0] = 0.5;
    p.grad()[1] = -0.25;
    Adam opt(0.1);
    opt.step(store);
    // First Adam step moves by lr * sign(grad) up to eps rounding.
    CHECK(p.values()[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-4));
    CHECK(p.values()[1] == doctest::Approx(2.0 + 0.1).epsilon(1e-4));
    CHECK(p.grad()[0] == 0.0);  // grads consumed
}

TEST_CASE("ema converges to frozen parameters") {
    ParamStore store;
    store.add("p", Tensor::param({2}, {1.0, -1.0}));
    Ema ema(store, 0.9);
    for (auto& v : ema.values()) v = 0.0;
    for (int i = 0; i < 200; ++i) ema.update(store);
    CHECK(ema.values()[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(ema.values()[1] == doctest::Approx(-1.0).epsilon(1e-8));
}
