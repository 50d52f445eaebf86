#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bpnn/rng.hpp"
#include "bpnn/tensor.hpp"
#include "oracles.hpp"

using namespace bpnn;

TEST_CASE("reshape_matrix is a row-major reinterpretation") {
    Tensor v({6}, {1, 2, 3, 4, 5, 6});
    Tensor m = reshape_matrix(v, 2, 3);
    CHECK(m.shape() == Shape{2, 3});
    CHECK(m(0, 0) == 1);
    CHECK(m(0, 2) == 3);
    CHECK(m(1, 0) == 4);
    CHECK(m(1, 2) == 6);

    Tensor single({1}, {7});
    Tensor sm = reshape_matrix(single, 1, 1);
    CHECK(sm(0, 0) == 7);

    CHECK_THROWS_AS(reshape_matrix(v, 2, 2), ShapeError);
    CHECK_THROWS_AS(reshape_matrix(m, 2, 3), ShapeError);
}

TEST_CASE("flatten inverts reshape_matrix exactly") {
    Tensor m({2, 2}, {1, 2, 3, 4});
    Tensor v = flatten(m);
    CHECK(v.shape() == Shape{4});
    CHECK(v.vec() == std::vector<double>{1, 2, 3, 4});
    CHECK(flatten(Tensor({1, 1}, {0})).vec() == std::vector<double>{0});
    CHECK_THROWS_AS(flatten(v), ShapeError);

    Rng rng(11);
    for (auto [d1, d2] : {std::pair<std::size_t, std::size_t>{3, 5}, {1, 7}, {4, 4}}) {
        Tensor x = oracles::random_tensor(rng, {d1 * d2});
        CHECK(flatten(reshape_matrix(x, d1, d2)) == x);
        Tensor y = oracles::random_tensor(rng, {d1, d2});
        CHECK(reshape_matrix(flatten(y), d1, d2) == y);
    }
}

TEST_CASE("matmul basics") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    CHECK(matmul(Tensor::identity(2), a) == a);
    Tensor pick({2, 1}, {0, 1});
    Tensor picked = matmul(a, pick);
    CHECK(picked.vec() == std::vector<double>{2, 4});
    CHECK_THROWS_AS(matmul(a, Tensor({3, 2})), ShapeError);
    CHECK_THROWS_AS(matmul(a, Tensor({4})), ShapeError);
}

TEST_CASE("matmul agrees with the naive triple-loop oracle") {
    Rng rng(7);
    Tensor a = oracles::random_tensor(rng, {3, 4});
    Tensor b = oracles::random_tensor(rng, {4, 2});
    CHECK(max_abs_diff(matmul(a, b), oracles::naive_matmul(a, b)) == 0.0);
}

TEST_CASE("matmul associativity within 1e-12") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = oracles::random_tensor(rng, {3, 4});
        Tensor b = oracles::random_tensor(rng, {4, 5});
        Tensor c = oracles::random_tensor(rng, {5, 2});
        CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-12);
    }
}

TEST_CASE("hadamard") {
    Tensor a({3}, {1, 2, 3});
    Tensor b({3}, {0, 1, 2});
    CHECK(hadamard(a, b).vec() == std::vector<double>{0, 2, 6});
    CHECK(hadamard(a, Tensor::ones({3})) == a);
    CHECK(hadamard(a, Tensor::zeros({3})) == Tensor::zeros({3}));
    CHECK_THROWS_AS(hadamard(a, Tensor({2})), ShapeError);
}

TEST_CASE("kronecker product definition") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 2}, {0, 1, 1, 0});
    Tensor k = kronecker(a, b);
    CHECK(k.shape() == Shape{4, 4});
    CHECK(k.vec() == std::vector<double>{0, 1, 0, 2, 1, 0, 2, 0, 0, 3, 0, 4, 3, 0, 4, 0});

    Tensor one({1, 1}, {1});
    CHECK(kronecker(one, b) == b);
    CHECK(kronecker(a, one) == a);
    CHECK_THROWS_AS(kronecker(a, Tensor({2})), ShapeError);
}

TEST_CASE("kronecker mixed-product identity") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor a = oracles::random_tensor(rng, {2, 3});
        Tensor b = oracles::random_tensor(rng, {3, 2});
        Tensor c = oracles::random_tensor(rng, {3, 2});
        Tensor d = oracles::random_tensor(rng, {2, 4});
        Tensor lhs = matmul(kronecker(a, b), kronecker(c, d));
        Tensor rhs = kronecker(matmul(a, c), matmul(b, d));
        CHECK(max_abs_diff(lhs, rhs) < 1e-12);
    }
}

TEST_CASE("normal_init determinism and moments") {
    Rng r1(42), r2(42);
    CHECK(normal_init(r1, {2, 2}) == normal_init(r2, {2, 2}));

    Rng r3(5);
    Tensor one = normal_init(r3, {1});
    CHECK(std::isfinite(one[0]));
}

TEST_CASE("normal_init rejects non-positive stddev") {
    Rng rng(1);
    CHECK_THROWS_AS(normal_init(rng, {2}, 0.0), ValueError);
    CHECK_THROWS_AS(normal_init(rng, {2}, -1.0), ValueError);
}

TEST_CASE("normal_init sample moments at 1e6 samples") {
    Rng rng(2024);
    Tensor big = normal_init(rng, {1000000}, 0.1);
    double mean = big.sum() / 1e6;
    double var = 0.0;
    for (std::size_t i = 0; i < big.size(); ++i) var += (big[i] - mean) * (big[i] - mean);
    var /= 1e6;
    CHECK(std::abs(mean) < 1e-3);
    CHECK(std::abs(std::sqrt(var) - 0.1) < 2e-3);
}

TEST_CASE("seeded rng streams are reproducible") {
    Rng a(99), b(99);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
}

TEST_CASE("single precision tensors work with relaxed tolerance") {
    BasicTensor<float> a({2, 2}, {1.f, 2.f, 3.f, 4.f});
    BasicTensor<float> b({2, 2}, {0.5f, -1.f, 2.f, 0.25f});
    BasicTensor<float> c = matmul(a, b);
    Tensor ad({2, 2}, {1, 2, 3, 4});
    Tensor bd({2, 2}, {0.5, -1, 2, 0.25});
    Tensor cd = matmul(ad, bd);
    for (std::size_t i = 0; i < c.size(); ++i)
        CHECK(std::abs(static_cast<double>(c[i]) - cd[i]) < 1e-5);
}

TEST_CASE("zero extents are rejected") {
    CHECK_THROWS_AS(Tensor({0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
}
