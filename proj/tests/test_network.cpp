#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bpnn/analysis.hpp"
#include "bpnn/model.hpp"
#include "oracles.hpp"

using namespace bpnn;
namespace fs = std::filesystem;

namespace {

ModelConfig config_from_json(const char* text) {
    return parse_model_config(nlohmann::json::parse(text));
}

std::string tmp_path(const char* name) {
    return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("build assigns names and resolves shapes") {
    ModelConfig cfg = config_from_json(R"({
        "seed": 1, "loss": "cross_entropy", "epochs": 0,
        "layers": [
            {"type": "dense", "projection": "bilinear", "in": 64, "out": 32},
            {"type": "relu"},
            {"type": "dense", "projection": "full", "in": 32, "out": 4},
            {"type": "softmax"}
        ]})");
    Model m = Model::build(cfg);
    CHECK(m.layer_count() == 4);
    CHECK(m.layer(0).name() == "dense_0");
    CHECK(m.layer(3).name() == "softmax_3");
    m.resolve_shapes({64});
    CHECK(m.output_shape() == Shape{4});
    CHECK(m.softmax_tail());
}

TEST_CASE("degenerate factorizations build but are detectable") {
    ModelConfig cfg = config_from_json(R"({
        "epochs": 0,
        "layers": [{"type": "dense", "projection": "bilinear", "in": 65, "out": 32}]})");
    Model m = Model::build(cfg);
    m.resolve_shapes({65});
    auto& dense = dynamic_cast<DenseLayer&>(m.layer(0));
    CHECK(dense.bilinear().d1() == 5);
    CHECK(dense.bilinear().d2() == 13);
    CHECK_FALSE(is_degenerate_factorization(65));
    CHECK(is_degenerate_factorization(13));
}

TEST_CASE("alpha-scaled conv channels are validated at build time") {
    ModelConfig cfg = config_from_json(R"({
        "epochs": 0,
        "layers": [
            {"type": "conv2d", "projection": "bilinear", "alpha": 2,
             "in_channels": 3, "out_channels": 10, "kernel": 3},
            {"type": "conv2d", "projection": "full",
             "in_channels": 10, "out_channels": 4, "kernel": 1}
        ]})");
    Model m = Model::build(cfg);
    // effective channels: alpha^2 * k1 * k2 = 4 * 2 * 5 = 40, not 10
    CHECK_THROWS_AS(m.resolve_shapes({8, 8, 3}), BuildError);
    try {
        m.resolve_shapes({8, 8, 3});
    } catch (const BuildError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("conv2d_1") != std::string::npos);
        CHECK(msg.find("conv2d_0") != std::string::npos);
    }
}

TEST_CASE("input mismatch at the first layer names the input") {
    ModelConfig cfg = config_from_json(R"({
        "epochs": 0,
        "layers": [{"type": "dense", "projection": "full", "in": 8, "out": 2}]})");
    Model m = Model::build(cfg);
    CHECK_THROWS_AS(m.resolve_shapes({9}), BuildError);
}

TEST_CASE("identity dense model passes activations and gradients through") {
    ModelConfig cfg = config_from_json(R"({
        "loss": "mse", "epochs": 0,
        "layers": [{"type": "dense", "projection": "full", "in": 3, "out": 3}]})");
    Model m = Model::build(cfg);
    m.resolve_shapes({3});
    auto refs = m.params();
    *refs[0].value = Tensor::identity(3);
    refs[1].value->fill(0.0);

    Rng rng(3);
    Tensor x = oracles::random_tensor(rng, {2, 3});
    auto fwd = m.forward(x);
    CHECK(fwd.output == x);
    // upstream flows back unchanged through W = I
    m.backward(fwd.output, false);
    CHECK(*m.params()[1].grad != Tensor::zeros({3}));
}

TEST_CASE("two-layer linear model equals the product of expanded matrices") {
    ModelConfig cfg = config_from_json(R"({
        "loss": "mse", "epochs": 0, "seed": 9,
        "layers": [
            {"type": "dense", "projection": "bilinear", "in": 12, "out": 6},
            {"type": "dense", "projection": "bilinear", "in": 6, "out": 4}
        ]})");
    Model m = Model::build(cfg);
    m.resolve_shapes({12});

    auto& l0 = dynamic_cast<DenseLayer&>(m.layer(0));
    auto& l1 = dynamic_cast<DenseLayer&>(m.layer(1));
    FullProjection f0 = expand_to_full(l0.bilinear());
    FullProjection f1 = expand_to_full(l1.bilinear());

    Rng rng(10);
    Tensor x = oracles::random_tensor(rng, {1, 12});
    Tensor got = m.forward(x).output;

    // h = (x W0 + b0) W1 + b1
    Tensor h0 = add(matmul(x, f0.W), f0.b.reshaped({1, 6}));
    Tensor want = add(matmul(h0, f1.W), f1.b.reshaped({1, 4}));
    CHECK(max_abs_diff(got, want) <= 1e-10);
}

TEST_CASE("whole-model gradient check on a three-layer toy net") {
    ModelConfig cfg = config_from_json(R"({
        "loss": "cross_entropy", "epochs": 0, "seed": 14,
        "layers": [
            {"type": "dense", "projection": "bilinear", "in": 8, "out": 8},
            {"type": "relu"},
            {"type": "dense", "projection": "full", "in": 8, "out": 3},
            {"type": "softmax"}
        ]})");
    Model m = Model::build(cfg);
    m.resolve_shapes({8});
    Rng rng(15);
    for (const ParamRef& p : m.params())
        for (std::size_t i = 0; i < p.value->size(); ++i) (*p.value)[i] = rng.normal(0.0, 0.4);

    Tensor x = oracles::random_tensor(rng, {4, 8});
    GradCheckReport rep = grad_check(m, x, {0, 2, 1, 0}, std::nullopt);
    CHECK(rep.worst_rel <= 1e-5);
    CHECK(rep.checked > 0);
}

TEST_CASE("whole-model gradient check through embedding and lstm") {
    ModelConfig cfg = config_from_json(R"({
        "loss": "cross_entropy", "epochs": 0, "seed": 4,
        "layers": [
            {"type": "embedding", "projection": "bilinear", "vocab": 6, "dim": 4},
            {"type": "lstm", "projection": "bilinear", "alpha": 2, "in": 4, "hidden": 4},
            {"type": "dense", "projection": "full", "in": 8, "out": 6},
            {"type": "softmax"}
        ]})");
    Model m = Model::build(cfg);
    m.resolve_shapes({3});
    Rng rng(16);
    for (const ParamRef& p : m.params())
        for (std::size_t i = 0; i < p.value->size(); ++i) (*p.value)[i] = rng.normal(0.0, 0.3);

    Tensor ids({2, 3}, {0, 5, 2, 4, 1, 3});
    GradCheckReport rep = grad_check(m, ids, {1, 4}, std::nullopt);
    CHECK(rep.worst_rel <= 1e-4);
}

TEST_CASE("backward before forward is rejected at model level") {
    ModelConfig cfg = config_from_json(R"({
        "epochs": 0,
        "layers": [{"type": "dense", "projection": "full", "in": 3, "out": 2}]})");
    Model m = Model::build(cfg);
    m.resolve_shapes({3});
    CHECK_THROWS_AS(m.backward(Tensor({1, 2}), false), UsageError);
}

TEST_CASE("training runs, selects the best snapshot and is reproducible") {
    Rng data_rng(100);
    Dataset blobs = synth_blobs(data_rng, 3, 12, 40, 0.4);

    ModelConfig cfg = config_from_json(R"({
        "seed": 7, "loss": "cross_entropy", "batch_size": 16, "epochs": 12,
        "optimizer": {"kind": "adam", "lr": 0.01},
        "layers": [
            {"type": "dense", "projection": "bilinear", "in": 12, "out": 12},
            {"type": "relu"},
            {"type": "dense", "projection": "full", "in": 12, "out": 3},
            {"type": "softmax"}
        ]})");

    TrainConfig tc;
    tc.optimizer = cfg.optimizer;
    tc.batch_size = cfg.batch_size;
    tc.epochs = cfg.epochs;
    tc.shuffle_seed = 55;

    Model m1 = Model::build(cfg);
    TrainResult r1 = train(m1, blobs, std::nullopt, tc);
    CHECK(r1.history.size() == 12);
    CHECK(r1.history.back().train_loss < r1.history.front().train_loss);
    CHECK(r1.best_epoch >= 1);
    for (const EpochMetrics& em : r1.history) CHECK(r1.best_val_loss <= em.val_loss);

    Model m2 = Model::build(cfg);
    TrainResult r2 = train(m2, blobs, std::nullopt, tc);
    REQUIRE(r2.history.size() == r1.history.size());
    for (std::size_t i = 0; i < r1.history.size(); ++i) {
        CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
        CHECK(r1.history[i].val_loss == r2.history[i].val_loss);
        CHECK(r1.history[i].train_acc == r2.history[i].train_acc);
    }
    CHECK(m1.snapshot() == m2.snapshot());
}

TEST_CASE("zero epochs keep the initialization and an empty history") {
    Rng data_rng(101);
    Dataset blobs = synth_blobs(data_rng, 2, 8, 10, 0.3);
    ModelConfig cfg = config_from_json(R"({
        "seed": 3, "epochs": 0,
        "layers": [
            {"type": "dense", "projection": "full", "in": 8, "out": 2},
            {"type": "softmax"}
        ]})");
    Model m = Model::build(cfg);
    std::vector<Tensor> init = m.snapshot();
    TrainConfig tc;
    tc.epochs = 0;
    TrainResult r = train(m, blobs, std::nullopt, tc);
    CHECK(r.history.empty());
    CHECK(r.best_epoch == 0);
    CHECK(m.snapshot() == init);
    CHECK(r.best_params == init);
}

TEST_CASE("poisoned parameters abort with the offending layer named") {
    Rng data_rng(102);
    Dataset blobs = synth_blobs(data_rng, 2, 8, 10, 0.3);
    ModelConfig cfg = config_from_json(R"({
        "seed": 3, "epochs": 1,
        "layers": [
            {"type": "dense", "projection": "full", "in": 8, "out": 4},
            {"type": "relu"},
            {"type": "dense", "projection": "full", "in": 4, "out": 2},
            {"type": "softmax"}
        ]})");
    Model m = Model::build(cfg);
    // poison the classifier: earlier layers feed a relu, which maps NaN to 0
    auto refs = m.params();
    for (const ParamRef& p : refs)
        if (p.name == "dense_2.W") (*p.value)[0] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig tc;
    tc.epochs = 1;
    try {
        train(m, blobs, std::nullopt, tc);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("dense_2") != std::string::npos);
    }
}

TEST_CASE("save/load round-trips bit-exactly") {
    ModelConfig cfg = config_from_json(R"({
        "seed": 21, "loss": "cross_entropy", "epochs": 0,
        "layers": [
            {"type": "embedding", "projection": "bilinear", "vocab": 6, "dim": 4},
            {"type": "lstm", "projection": "bilinear", "alpha": 2, "in": 4, "hidden": 4},
            {"type": "dense", "projection": "full", "in": 8, "out": 6},
            {"type": "softmax"}
        ]})");
    Model m = Model::build(cfg);
    const std::string path = tmp_path("bpnn_roundtrip.bpnn");
    save_model(m, path);
    Model loaded = load_model(path);

    CHECK(loaded.snapshot() == m.snapshot());
    m.resolve_shapes({3});
    loaded.resolve_shapes({3});
    Tensor ids({1, 3}, {0, 5, 2});
    CHECK(m.forward(ids).output == loaded.forward(ids).output);
    fs::remove(path);
}

TEST_CASE("model file errors are distinct and named") {
    ModelConfig cfg = config_from_json(R"({
        "epochs": 0,
        "layers": [{"type": "dense", "projection": "full", "in": 3, "out": 2}]})");
    Model m = Model::build(cfg);
    const std::string path = tmp_path("bpnn_corrupt.bpnn");
    save_model(m, path);

    auto bytes = [&] {
        std::ifstream in(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    }();

    {
        std::ofstream out(path, std::ios::binary);
        std::string bad = bytes;
        bad[0] = 'X';
        out << bad;
    }
    CHECK_THROWS_AS(load_model(path), BadMagicError);

    {
        std::ofstream out(path, std::ios::binary);
        std::string bad = bytes;
        bad[4] = 2;
        out << bad;
    }
    CHECK_THROWS_AS(load_model(path), VersionError);

    {
        std::ofstream out(path, std::ios::binary);
        out << bytes.substr(0, bytes.size() - 7);
    }
    CHECK_THROWS_AS(load_model(path), TruncatedError);

    fs::remove(path);
}

TEST_CASE("metrics csv format is stable") {
    std::vector<EpochMetrics> h = {{1, 0.5, 0.75, 0.625, 0.5}};
    const std::string path = tmp_path("bpnn_metrics.csv");
    write_metrics_csv(h, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,train_loss,train_acc,val_loss,val_acc");
    std::getline(in, line);
    CHECK(line == "1,0.5,0.75,0.625,0.5");
    fs::remove(path);
}

TEST_CASE("default input shapes derive from the first layer") {
    CHECK(default_input_shape(config_from_json(
              R"({"epochs":0,"layers":[{"type":"dense","in":5,"out":2}]})")) == Shape{5});
    CHECK(default_input_shape(config_from_json(
              R"({"epochs":0,"layers":[{"type":"conv2d","in_channels":3,"out_channels":2,"kernel":3}]})")) ==
          Shape{8, 8, 3});
    CHECK(default_input_shape(config_from_json(
              R"({"epochs":0,"layers":[{"type":"lstm","in":6,"hidden":4}]})")) == Shape{3, 6});
}
