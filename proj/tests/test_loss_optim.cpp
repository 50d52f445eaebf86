#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bpnn/layers.hpp"
#include "bpnn/loss.hpp"
#include "bpnn/optimizer.hpp"
#include "oracles.hpp"

using namespace bpnn;

TEST_CASE("mse loss values") {
    Tensor h({2, 2}, {1, 2, 3, 4});
    CHECK(mse_weight_decay(h, h, 0.0).value == 0.0);
    CHECK(mse_weight_decay(h, h, 0.0).grad == Tensor::zeros({2, 2}));

    Tensor y({2, 2}, {0, 1, 2, 3});
    LossValue lv = mse_weight_decay(h, y, 0.0);
    CHECK(lv.value == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(lv.grad == Tensor::ones({2, 2}));

    CHECK_THROWS_AS(mse_weight_decay(h, Tensor({3}), 0.0), ShapeError);
    CHECK_THROWS_AS(mse_weight_decay(h, h, -0.1), ValueError);
}

TEST_CASE("weight decay contributes lambda/2 ||w||^2 and lambda*w") {
    Tensor h({2}, {1, 2});
    Tensor w({2, 2}, {1, 2, 3, 4});
    Tensor gw = Tensor::zeros({2, 2});
    std::vector<ParamRef> params = {{"w", &w, &gw, true}};
    LossValue lv = mse_weight_decay(h, h, 0.1, params);
    CHECK(lv.value == doctest::Approx(1.5).epsilon(1e-15));  // 0.05 * 30
    for (std::size_t i = 0; i < 4; ++i) CHECK(gw[i] == doctest::Approx(0.1 * w[i]));

    // biases are exempt
    Tensor b({2}, {5, 5});
    Tensor gb = Tensor::zeros({2});
    std::vector<ParamRef> with_bias = {{"b", &b, &gb, false}};
    LossValue lv2 = mse_weight_decay(h, h, 0.1, with_bias);
    CHECK(lv2.value == 0.0);
    CHECK(gb == Tensor::zeros({2}));
}

TEST_CASE("batch mse averages over the leading axis") {
    Tensor h({2, 2}, {1, 1, 1, 1});
    Tensor y = Tensor::zeros({2, 2});
    LossValue lv = mse_batch(h, y);
    CHECK(lv.value == doctest::Approx(1.0));  // (1/2) * (2 + 2) / 2
    for (std::size_t i = 0; i < 4; ++i) CHECK(lv.grad[i] == doctest::Approx(0.5));
}

TEST_CASE("cross entropy closed forms") {
    Tensor uniform = Tensor::zeros({1, 10});
    LossValue lv = cross_entropy(uniform, {0});
    CHECK(lv.value == doctest::Approx(std::log(10.0)).epsilon(1e-12));

    Tensor peaked({1, 3}, {10, 0, 0});
    LossValue lp = cross_entropy(peaked, {0});
    const double expect = std::log(1.0 + 2.0 * std::exp(-10.0));
    CHECK(lp.value == doctest::Approx(expect).epsilon(1e-9));
    CHECK(lp.value < 1e-4);

    Rng rng(5);
    Tensor logits = oracles::random_tensor(rng, {4, 6}, 2.0);
    LossValue lr = cross_entropy(logits, {0, 5, 2, 3});
    for (std::size_t i = 0; i < 4; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 6; ++j) row += lr.grad(i, j);
        CHECK(std::abs(row) <= 1e-15);
    }
    CHECK_THROWS_AS(cross_entropy(logits, {0, 1, 2, 6}), IndexError);
    CHECK_THROWS_AS(cross_entropy(logits, {0}), ShapeError);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    Rng rng(6);
    Tensor logits = oracles::random_tensor(rng, {3, 4});
    std::vector<int> labels = {1, 3, 0};
    LossValue lv = cross_entropy(logits, labels);
    const double h = 1e-6;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        Tensor lp = logits;
        lp[i] += h;
        const double up = cross_entropy(lp, labels).value;
        lp[i] -= 2 * h;
        const double down = cross_entropy(lp, labels).value;
        CHECK(std::abs(lv.grad[i] - (up - down) / (2 * h)) <= 1e-9);
    }
}

TEST_CASE("sgd step arithmetic") {
    Tensor w({1}, {1.0});
    Tensor g({1}, {2.0});
    Optimizer opt({OptKind::sgd, 0.1});
    opt.bind({{"w", &w, &g, true}});
    opt.step();
    CHECK(w[0] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("zero gradient leaves parameters unchanged for all optimizers") {
    for (OptKind kind : {OptKind::sgd, OptKind::adam, OptKind::rmsprop}) {
        Tensor w({3}, {1.0, -2.0, 3.0});
        Tensor g = Tensor::zeros({3});
        OptimizerConfig cfg;
        cfg.kind = kind;
        Optimizer opt(cfg);
        opt.bind({{"w", &w, &g, true}});
        opt.step();
        CHECK(w == Tensor({3}, {1.0, -2.0, 3.0}));
    }
}

TEST_CASE("adam first-step magnitude is ~lr for unit gradients") {
    Tensor w = Tensor::zeros({4});
    Tensor g = Tensor::ones({4});
    Optimizer opt({OptKind::adam, 0.001});
    opt.bind({{"w", &w, &g, true}});
    opt.step();
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(w[i] == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
    }
}

TEST_CASE("step before bind is a usage error") {
    Optimizer opt({OptKind::adam, 0.001});
    CHECK_THROWS_AS(opt.step(), UsageError);
}

TEST_CASE("one sgd step on a 2x2 bilinear layer matches scalar arithmetic") {
    // Everything below is recomputed with plain scalar expressions: the
    // products w1 x w2, the quadratic loss with weight decay, the four
    // gradients and the update itself.
    const double w1v[4] = {0.2, -0.1, 0.3, 0.4};
    const double w2v[4] = {0.1, 0.5, -0.2, 0.3};
    const double bv[4] = {0.01, 0.02, -0.03, 0.04};
    const double xv[4] = {1.0, 2.0, 3.0, -1.0};
    const double yv[4] = {0.05, -0.02, 0.11, 0.07};
    const double lambda = 0.05, eta = 0.1;

    // u = w1 x ; pre = u w2 + b ; identity activation so h = pre
    double u[4], pre[4];
    u[0] = w1v[0] * xv[0] + w1v[1] * xv[2];
    u[1] = w1v[0] * xv[1] + w1v[1] * xv[3];
    u[2] = w1v[2] * xv[0] + w1v[3] * xv[2];
    u[3] = w1v[2] * xv[1] + w1v[3] * xv[3];
    pre[0] = u[0] * w2v[0] + u[1] * w2v[2] + bv[0];
    pre[1] = u[0] * w2v[1] + u[1] * w2v[3] + bv[1];
    pre[2] = u[2] * w2v[0] + u[3] * w2v[2] + bv[2];
    pre[3] = u[2] * w2v[1] + u[3] * w2v[3] + bv[3];

    double gm[4];  // h - y
    for (int i = 0; i < 4; ++i) gm[i] = pre[i] - yv[i];

    // xw2 = x w2 ; gw1 = G (x w2)^T + lambda w1
    double xw2[4];
    xw2[0] = xv[0] * w2v[0] + xv[1] * w2v[2];
    xw2[1] = xv[0] * w2v[1] + xv[1] * w2v[3];
    xw2[2] = xv[2] * w2v[0] + xv[3] * w2v[2];
    xw2[3] = xv[2] * w2v[1] + xv[3] * w2v[3];
    double gw1[4];
    gw1[0] = gm[0] * xw2[0] + gm[1] * xw2[1] + lambda * w1v[0];
    gw1[1] = gm[0] * xw2[2] + gm[1] * xw2[3] + lambda * w1v[1];
    gw1[2] = gm[2] * xw2[0] + gm[3] * xw2[1] + lambda * w1v[2];
    gw1[3] = gm[2] * xw2[2] + gm[3] * xw2[3] + lambda * w1v[3];

    // gw2 = (w1 x)^T G + lambda w2
    double gw2[4];
    gw2[0] = u[0] * gm[0] + u[2] * gm[2] + lambda * w2v[0];
    gw2[1] = u[0] * gm[1] + u[2] * gm[3] + lambda * w2v[1];
    gw2[2] = u[1] * gm[0] + u[3] * gm[2] + lambda * w2v[2];
    gw2[3] = u[1] * gm[1] + u[3] * gm[3] + lambda * w2v[3];

    double expect_w1[4], expect_w2[4], expect_b[4];
    for (int i = 0; i < 4; ++i) {
        expect_w1[i] = w1v[i] - eta * gw1[i];
        expect_w2[i] = w2v[i] - eta * gw2[i];
        expect_b[i] = bv[i] - eta * gm[i];
    }

    // library path: bilinear_backward + mse_weight_decay + sgd
    BilinearProjection p;
    p.w1 = Tensor({2, 2}, {w1v[0], w1v[1], w1v[2], w1v[3]});
    p.w2 = Tensor({2, 2}, {w2v[0], w2v[1], w2v[2], w2v[3]});
    p.b = Tensor({2, 2}, {bv[0], bv[1], bv[2], bv[3]});
    Tensor xm({2, 2}, {xv[0], xv[1], xv[2], xv[3]});
    Tensor y({2, 2}, {yv[0], yv[1], yv[2], yv[3]});

    Tensor h = bilinear_forward(p, xm, Activation::identity);
    BilinearGrads g = bilinear_backward(p, xm, Activation::identity, sub(h, y));
    Tensor gb = g.b;
    std::vector<ParamRef> refs = {{"w1", &p.w1, &g.w1, true},
                                  {"w2", &p.w2, &g.w2, true},
                                  {"b", &p.b, &gb, false}};
    mse_weight_decay(h, y, lambda, refs);

    Optimizer opt({OptKind::sgd, eta});
    opt.bind(refs);
    opt.step();

    for (int i = 0; i < 4; ++i) {
        CHECK(std::abs(p.w1[i] - expect_w1[i]) <= 1e-12);
        CHECK(std::abs(p.w2[i] - expect_w2[i]) <= 1e-12);
        CHECK(std::abs(p.b[i] - expect_b[i]) <= 1e-12);
    }
}

TEST_CASE("fifty full-batch sgd steps strictly decrease the objective") {
    Rng rng(77);
    DenseLayer layer(ProjectionMode::bilinear, 4, 4, 1, Activation::identity, rng);

    // seed-pinned linear regression target
    Tensor x = oracles::random_tensor(rng, {16, 4});
    Tensor w_true = oracles::random_tensor(rng, {4, 4});
    Tensor y = matmul(x, w_true);

    Optimizer opt({OptKind::sgd, 0.005});
    opt.bind(layer.params());

    auto objective = [&]() { return 0.5 * sub(layer.forward(x), y).squared_norm(); };

    double prev = objective();
    for (int stepn = 0; stepn < 50; ++stepn) {
        Tensor h = layer.forward(x);
        layer.zero_grads();
        layer.backward(sub(h, y));
        opt.step();
        const double cur = objective();
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("weight decay is applied to weights only and folded into the update") {
    Tensor w({1}, {2.0});
    Tensor gw = Tensor::zeros({1});
    Tensor b({1}, {2.0});
    Tensor gb = Tensor::zeros({1});
    OptimizerConfig cfg;
    cfg.kind = OptKind::sgd;
    cfg.lr = 0.1;
    cfg.lambda = 0.5;
    Optimizer opt(cfg);
    opt.bind({{"w", &w, &gw, true}, {"b", &b, &gb, false}});
    opt.step();
    CHECK(w[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
    CHECK(b[0] == 2.0);
}
