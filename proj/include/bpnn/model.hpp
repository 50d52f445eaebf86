#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bpnn/config.hpp"
#include "bpnn/data.hpp"
#include "bpnn/layer.hpp"
#include "bpnn/loss.hpp"
#include "bpnn/optimizer.hpp"

namespace bpnn {

/// An ordered layer stack with a loss, built from a validated config.
/// Parameters are initialized from the config seed, so identical configs
/// always produce identical models.
class Model {
public:
    static Model build(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    LossKind loss() const { return cfg_.loss; }
    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }
    const Layer& layer(std::size_t i) const { return *layers_[i]; }

    /// Propagates a per-sample input shape through the stack, validating
    /// every adjacency (including alpha-scaled channel expansions). Must run
    /// before forward. Throws BuildError naming both sides of a mismatch;
    /// a mismatch at the first layer is reported as the input's fault.
    void resolve_shapes(const Shape& input);
    bool shapes_resolved() const { return resolved_; }
    const Shape& input_shape() const;
    const Shape& output_shape() const;
    const std::vector<Shape>& layer_output_shapes() const { return out_shapes_; }

    struct ForwardResult {
        Tensor output;  // final layer output
        Tensor logits;  // input to a trailing softmax layer, else == output
    };

    /// Runs the whole stack on a batch, caching per-layer state for backward.
    ForwardResult forward(const Tensor& batch);

    /// Zeroes gradients and backpropagates. `from_logits` starts behind a
    /// trailing softmax layer (for fused cross-entropy gradients).
    void backward(const Tensor& upstream, bool from_logits = false);

    std::vector<ParamRef> params();
    std::size_t param_count();

    std::vector<Tensor> snapshot();
    void restore(const std::vector<Tensor>& snap);

    /// True when the final layer is a softmax stage (cross-entropy training
    /// then feeds logits to the loss and skips the softmax backward).
    bool softmax_tail() const;

    double relu_kink_margin() const;

private:
    ModelConfig cfg_;
    std::vector<std::unique_ptr<Layer>> layers_;
    Shape in_shape_;
    std::vector<Shape> out_shapes_;
    bool resolved_ = false;
};

/// Builds one layer from its config entry; exposed for layer-level tooling.
std::unique_ptr<Layer> make_layer(const LayerConfig& lc, Rng& rng);

/// A conforming per-sample input shape derived from the first layer's
/// declaration, for commands that run without data (8x8 spatial grid for
/// convolutions, 3 time steps for sequences).
Shape default_input_shape(const ModelConfig& cfg);

struct EvalMetrics {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Deterministic full-dataset metrics, no augmentation, fixed chunking.
/// Cross-entropy is computed from logits; accuracy is argmax agreement
/// (0 when the dataset has regression targets instead of labels).
EvalMetrics evaluate(Model& model, const Dataset& data);

/// Loss and upstream gradient for one batch under the model's loss kind.
/// Classification targets for mse are one-hot rows.
struct BatchLoss {
    double value;
    Tensor upstream;
    bool from_logits;
};
BatchLoss batch_loss(Model& model, const Model::ForwardResult& fwd,
                     const std::vector<int>& labels, const std::optional<Tensor>& targets);

struct TrainConfig {
    OptimizerConfig optimizer;
    std::size_t batch_size = 64;
    std::size_t epochs = 0;
    double val_fraction = 0.1;       // used when no explicit validation split exists
    std::uint64_t shuffle_seed = 1;  // independent of the initialization seed
};

struct EpochMetrics {
    std::size_t epoch;
    double train_loss, train_acc, val_loss, val_acc;
};

struct TrainResult {
    std::vector<EpochMetrics> history;
    std::vector<Tensor> best_params;  // snapshot with the lowest validation loss
    std::size_t best_epoch = 0;       // 0 = initialization (no epochs ran)
    double best_val_loss = 0.0;
};

/// Shuffled mini-batch training. Per-epoch metrics evaluate the full train
/// dataset and the validation split with end-of-epoch parameters; the
/// returned snapshot has the lowest validation loss seen. When `val` is
/// absent a val_fraction split is carved from `train` deterministically
/// (the optimizer then only sees the remainder). A non-finite batch loss
/// aborts with a NumericError naming the first offending layer.
TrainResult train(Model& model, const Dataset& train_data, const std::optional<Dataset>& val,
                  const TrainConfig& cfg);

void write_metrics_csv(const std::vector<EpochMetrics>& history, const std::string& path);

/// Model file: "BPNN" magic, format version byte (1), length-prefixed
/// architecture JSON, then every parameter tensor in declaration order as a
/// little-endian u32 element count followed by little-endian f64 values.
void save_model(Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace bpnn
