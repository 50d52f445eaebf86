#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bpnn/analysis.hpp"
#include "bpnn/layers.hpp"
#include "oracles.hpp"

using namespace bpnn;

TEST_CASE("dense parameter counts reproduce the 4096 worked example") {
    Rng rng(1);
    DenseLayer a1(ProjectionMode::bilinear, 4096, 4096, 1, Activation::identity, rng);
    std::size_t count = 0;
    for (const ParamRef& p : a1.params()) count += p.value->size();
    CHECK(count == 12288);

    DenseLayer a3(ProjectionMode::bilinear, 4096, 4096, 3, Activation::identity, rng);
    count = 0;
    for (const ParamRef& p : a3.params()) count += p.value->size();
    CHECK(count == 28672);
    CHECK(a3.out_dim() == 3 * 4096);

    DenseLayer full(ProjectionMode::full, 4096, 4096, 1, Activation::identity, rng);
    count = 0;
    for (const ParamRef& p : full.params()) count += p.value->size();
    CHECK(count == 16781312);
}

TEST_CASE("dense bilinear identity configuration is the identity map") {
    Rng rng(2);
    DenseLayer layer(ProjectionMode::bilinear, 4, 4, 1, Activation::identity, rng);
    layer.bilinear().w1 = Tensor::identity(2);
    layer.bilinear().w2 = Tensor::identity(2);
    layer.bilinear().b = Tensor::zeros({2, 2});
    Tensor x({3, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    CHECK(layer.forward(x) == x);
}

TEST_CASE("dense backward passes upstream through an identity layer") {
    Rng rng(3);
    DenseLayer layer(ProjectionMode::full, 3, 3, 1, Activation::identity, rng);
    layer.full().W = Tensor::identity(3);
    layer.full().b = Tensor::zeros({3});
    Tensor x = oracles::random_tensor(rng, {2, 3});
    layer.forward(x);
    Tensor up = oracles::random_tensor(rng, {2, 3});
    CHECK(layer.backward(up) == up);
    CHECK_THROWS_AS(layer.backward(up), UsageError);
}

TEST_CASE("dense layers pass the finite-difference oracle") {
    Rng rng(4);
    for (ProjectionMode mode : {ProjectionMode::full, ProjectionMode::bilinear}) {
        for (Activation act : {Activation::identity, Activation::sigmoid, Activation::relu}) {
            DenseLayer layer(mode, 6, 4, 2, act, rng);
            Tensor x = oracles::random_tensor(rng, {3, 6});
            GradCheckReport rep = grad_check_layer(layer, x, rng);
            CHECK(rep.worst_rel <= 1e-5);
            CHECK(rep.checked > 0);
        }
    }
}

TEST_CASE("dense equivalence against the Kronecker expansion") {
    Rng rng(5);
    for (std::size_t alpha : {1, 2, 3}) {
        DenseLayer layer(ProjectionMode::bilinear, 12, 6, alpha, Activation::tanh, rng);
        CHECK(equivalence_check(layer, {12}, 50, rng) <= 1e-10);
    }
    DenseLayer full(ProjectionMode::full, 4, 4, 1, Activation::identity, rng);
    CHECK(full.expanded() == nullptr);
    CHECK_THROWS_AS(equivalence_check(full, {4}, 1, rng), UsageError);
}

TEST_CASE("im2col emits (kh*kw, C) patch matrices in spatial order") {
    Tensor x({1, 3, 3, 1}, {0, 1, 2, 3, 4, 5, 6, 7, 8});
    Tensor patches = im2col(x, 2, 2, 1, Padding::valid);
    CHECK(patches.shape() == Shape{4, 4, 1});
    CHECK(patches(0, 0, 0) == 0);  // x00
    CHECK(patches(0, 1, 0) == 1);  // x01
    CHECK(patches(0, 2, 0) == 3);  // x10
    CHECK(patches(0, 3, 0) == 4);  // x11
    CHECK(patches(3, 0, 0) == 4);

    Tensor big({1, 4, 4, 2});
    CHECK(im2col(big, 3, 3, 1, Padding::same).extent(0) == 16);
    CHECK_THROWS_AS(im2col(big, 5, 5, 1, Padding::valid), ShapeError);
}

TEST_CASE("col2im coverage counts match the brute-force oracle") {
    for (std::size_t stride : {1, 2}) {
        const std::size_t h = 5, w = 6, kh = 3, kw = 2;
        Tensor x({1, h, w, 1});
        Tensor patches = im2col(x, kh, kw, stride, Padding::valid);
        Tensor ones = Tensor::ones(patches.shape());
        Tensor scattered = col2im(ones, {1, h, w, 1}, kh, kw, stride, Padding::valid);
        Tensor cover = oracles::window_coverage(h, w, kh, kw, stride);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) CHECK(scattered(0, y, xx, 0) == cover(y, xx));
    }
}

TEST_CASE("1x1 full convolution with weight 2 doubles the input") {
    Rng rng(6);
    Conv2DLayer conv(ProjectionMode::full, 1, 1, 1, 1, 1, Padding::valid, 1,
                     Activation::identity, rng);
    auto refs = conv.params();
    refs[0].value->fill(2.0);
    refs[1].value->fill(0.0);
    Tensor x = oracles::random_tensor(rng, {2, 3, 3, 1});
    Tensor y = conv.forward(x);
    CHECK(y.shape() == Shape{2, 3, 3, 1});
    CHECK(max_abs_diff(y, scale(x, 2.0)) == 0.0);
}

TEST_CASE("conv bilinear parameter shapes follow the alpha-on-both-factors rule") {
    Rng rng(7);
    Conv2DLayer conv(ProjectionMode::bilinear, 3, 3, 16, 16, 1, Padding::valid, 2,
                     Activation::identity, rng);
    const BilinearProjection& p = conv.bilinear();
    CHECK(p.w1.shape() == Shape{8, 9});
    CHECK(p.w2.shape() == Shape{16, 8});
    CHECK(p.b.shape() == Shape{8, 8});
    std::size_t count = 0;
    for (const ParamRef& r : conv.params()) count += r.value->size();
    CHECK(count == 264);
    CHECK(conv.out_channels() == 64);  // alpha^2 * k1 * k2

    Conv2DLayer full(ProjectionMode::full, 3, 3, 16, 16, 1, Padding::valid, 1,
                     Activation::identity, rng);
    count = 0;
    for (const ParamRef& r : full.params()) count += r.value->size();
    CHECK(count == 2320);
}

TEST_CASE("conv bilinear equals its patchwise Kronecker expansion") {
    Rng rng(8);
    for (std::size_t alpha : {1, 2}) {
        Conv2DLayer conv(ProjectionMode::bilinear, 3, 3, 4, 4, 1, Padding::same, alpha,
                         Activation::identity, rng);
        CHECK(equivalence_check(conv, {5, 5, 4}, 20, rng) <= 1e-10);
    }
}

TEST_CASE("conv layers pass the finite-difference oracle") {
    Rng rng(9);
    Conv2DLayer full(ProjectionMode::full, 2, 2, 2, 3, 1, Padding::valid, 1, Activation::sigmoid,
                     rng);
    Tensor x = oracles::random_tensor(rng, {2, 4, 4, 2});
    CHECK(grad_check_layer(full, x, rng).worst_rel <= 1e-5);

    Conv2DLayer bil(ProjectionMode::bilinear, 2, 2, 4, 4, 2, Padding::same, 2,
                    Activation::tanh, rng);
    Tensor xb = oracles::random_tensor(rng, {2, 4, 4, 4});
    CHECK(grad_check_layer(bil, xb, rng).worst_rel <= 1e-5);
}

TEST_CASE("conv input gradient matches finite differences") {
    Rng rng(10);
    Conv2DLayer conv(ProjectionMode::bilinear, 2, 2, 2, 2, 1, Padding::valid, 1,
                     Activation::identity, rng);
    Tensor x = oracles::random_tensor(rng, {1, 3, 3, 2});
    Tensor y(conv.output_shape({3, 3, 2}));
    Shape yshape{1};
    for (std::size_t e : conv.output_shape({3, 3, 2})) yshape.push_back(e);
    Tensor target = oracles::random_tensor(rng, yshape);

    Tensor out = conv.forward(x);
    conv.zero_grads();
    Tensor dx = conv.backward(sub(out, target));

    const double h = 1e-6;
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor xp = x;
        xp[i] += h;
        const double up = 0.5 * sub(conv.forward(xp), target).squared_norm();
        xp[i] -= 2 * h;
        const double down = 0.5 * sub(conv.forward(xp), target).squared_norm();
        const double numeric = (up - down) / (2 * h);
        CHECK(std::abs(dx[i] - numeric) / std::max({std::abs(dx[i]), std::abs(numeric), 1e-8}) <=
              1e-5);
    }
}

TEST_CASE("embedding bilinear lookup builds the Kronecker row directly") {
    Rng rng(11);
    EmbeddingLayer emb(ProjectionMode::bilinear, 4, 4, 1, rng);
    auto refs = emb.params();
    // w1 [e1=2, v1=2] = identity so w1^T rows are unit vectors
    *refs[0].value = Tensor::identity(2);
    *refs[1].value = Tensor({2, 2}, {1, 2, 3, 4});
    CHECK(emb.lookup(0).vec() == std::vector<double>{1, 2, 0, 0});
    CHECK(emb.lookup(1).vec() == std::vector<double>{3, 4, 0, 0});
    CHECK(emb.lookup(2).vec() == std::vector<double>{0, 0, 1, 2});
    CHECK_THROWS_AS(emb.lookup(4), IndexError);
}

TEST_CASE("embedding bilinear equals every row of the expanded table") {
    Rng rng(12);
    for (std::size_t v : {4, 9, 16})
        for (std::size_t e : {4, 6}) {
            EmbeddingLayer emb(ProjectionMode::bilinear, v, e, 1, rng);
            CHECK(equivalence_check(emb, {2}, 0, rng) <= 1e-12);
        }
}

TEST_CASE("embedding gradient touches only the structured slices") {
    Rng rng(13);
    EmbeddingLayer emb(ProjectionMode::bilinear, 6, 4, 1, rng);  // v=(2,3), e=(2,2)
    Tensor ids({1, 1}, {4});                                     // i1 = 4/3 = 1, i2 = 4%3 = 1
    Tensor out = emb.forward(ids);
    emb.zero_grads();
    emb.backward(Tensor::ones(out.shape()));
    auto refs = emb.params();
    const Tensor& gw1 = *refs[0].grad;  // [e1, v1] = [2, 2]
    const Tensor& gw2 = *refs[1].grad;  // [v2, e2] = [3, 2]
    for (std::size_t a = 0; a < 2; ++a) {
        CHECK(gw1(a, 0) == 0.0);
        CHECK(gw1(a, 1) != 0.0);
    }
    CHECK(gw2(0, 0) == 0.0);
    CHECK(gw2(2, 0) == 0.0);
    CHECK(gw2(1, 0) != 0.0);
}

TEST_CASE("embedding layers pass the finite-difference oracle") {
    Rng rng(14);
    for (ProjectionMode mode : {ProjectionMode::full, ProjectionMode::bilinear}) {
        EmbeddingLayer emb(mode, 6, 4, 2, rng);
        Tensor ids({2, 3}, {0, 5, 2, 1, 1, 4});
        CHECK(grad_check_layer(emb, ids, rng).worst_rel <= 1e-5);
    }
}

TEST_CASE("embedding rejects fractional and out-of-range ids") {
    Rng rng(15);
    EmbeddingLayer emb(ProjectionMode::full, 4, 4, 1, rng);
    CHECK_THROWS_AS(emb.forward(Tensor({1, 1}, {4})), IndexError);
    CHECK_THROWS_AS(emb.forward(Tensor({1, 1}, {-1})), IndexError);
    CHECK_THROWS_AS(emb.forward(Tensor({1, 1}, {0.5})), IndexError);
}

TEST_CASE("maxpool picks maxima and routes gradient to the argmax") {
    MaxPoolLayer pool;
    Tensor x({1, 2, 2, 1}, {1, 2, 3, 4});
    Tensor y = pool.forward(x);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == 4);
    Tensor dx = pool.backward(Tensor({1, 1, 1, 1}, {5}));
    CHECK(dx.vec() == std::vector<double>{0, 0, 0, 5});

    // ties go to the first occurrence in row-major order
    Tensor tie({1, 2, 2, 1}, {7, 7, 7, 7});
    pool.forward(tie);
    Tensor dt = pool.backward(Tensor({1, 1, 1, 1}, {1}));
    CHECK(dt.vec() == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("global average pool of a constant map is that constant") {
    GlobalAvgPoolLayer gap;
    Tensor x = Tensor::full({2, 3, 3, 4}, 2.5);
    Tensor y = gap.forward(x);
    CHECK(y.shape() == Shape{2, 4});
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(2.5));
    Tensor dx = gap.backward(Tensor::ones({2, 4}));
    for (std::size_t i = 0; i < dx.size(); ++i) CHECK(dx[i] == doctest::Approx(1.0 / 9.0));
}

TEST_CASE("softmax rows sum to one and shift invariance holds") {
    Tensor z({1, 4}, {0, 0, 0, 0});
    Tensor p = softmax(z);
    for (std::size_t j = 0; j < 4; ++j) CHECK(p(0, j) == doctest::Approx(0.25).epsilon(1e-12));

    Rng rng(16);
    Tensor logits = oracles::random_tensor(rng, {5, 7}, 3.0);
    Tensor probs = softmax(logits);
    for (std::size_t i = 0; i < 5; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 7; ++j) sum += probs(i, j);
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
    Tensor shifted = logits;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 7; ++j) shifted(i, j) += 123.456;
    CHECK(max_abs_diff(softmax(shifted), probs) <= 1e-12);
}

TEST_CASE("softmax layer backward matches finite differences") {
    Rng rng(17);
    SoftmaxLayer sm;
    Tensor x = oracles::random_tensor(rng, {2, 3});
    Tensor target = oracles::random_tensor(rng, {2, 3});
    Tensor out = sm.forward(x);
    Tensor dx = sm.backward(sub(out, target));
    const double h = 1e-6;
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor xp = x;
        xp[i] += h;
        const double up = 0.5 * sub(sm.forward(xp), target).squared_norm();
        xp[i] -= 2 * h;
        const double down = 0.5 * sub(sm.forward(xp), target).squared_norm();
        const double numeric = (up - down) / (2 * h);
        CHECK(std::abs(dx[i] - numeric) <= 1e-6);
    }
}

TEST_CASE("flatten round-trips shapes") {
    FlattenLayer fl;
    Tensor x({2, 2, 3, 1});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
    Tensor y = fl.forward(x);
    CHECK(y.shape() == Shape{2, 6});
    Tensor dx = fl.backward(y);
    CHECK(dx == x);
}
