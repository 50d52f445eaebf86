#include "bpnn/model.hpp"

namespace bpnn {

std::unique_ptr<Layer> make_layer(const LayerConfig& lc, Rng& rng) {
    if (lc.type == "dense") {
        return std::make_unique<DenseLayer>(lc.projection, lc.in, lc.out, lc.alpha,
                                            lc.activation, rng);
    }
    if (lc.type == "conv2d") {
        return std::make_unique<Conv2DLayer>(lc.projection, lc.kernel_h, lc.kernel_w,
                                             lc.in_channels, lc.out_channels, lc.stride,
                                             lc.padding, lc.alpha, lc.activation, rng);
    }
    if (lc.type == "embedding") {
        return std::make_unique<EmbeddingLayer>(lc.projection, lc.vocab, lc.dim, lc.alpha, rng);
    }
    if (lc.type == "lstm") {
        return std::make_unique<LstmLayer>(lc.projection, lc.in, lc.hidden, lc.alpha, rng);
    }
    if (lc.type == "relu") return std::make_unique<ActivationLayer>(Activation::relu);
    if (lc.type == "sigmoid") return std::make_unique<ActivationLayer>(Activation::sigmoid);
    if (lc.type == "tanh") return std::make_unique<ActivationLayer>(Activation::tanh);
    if (lc.type == "softmax") return std::make_unique<SoftmaxLayer>();
    if (lc.type == "maxpool") return std::make_unique<MaxPoolLayer>();
    if (lc.type == "gap") return std::make_unique<GlobalAvgPoolLayer>();
    if (lc.type == "flatten") return std::make_unique<FlattenLayer>();
    throw ConfigError("unknown layer type '" + lc.type + "'");
}

Model Model::build(const ModelConfig& cfg) {
    Model m;
    m.cfg_ = cfg;
    Rng rng(cfg.seed);
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        auto layer = make_layer(cfg.layers[i], rng);
        layer->set_name(std::string(layer->type()) + "_" + std::to_string(i));
        m.layers_.push_back(std::move(layer));
    }
    return m;
}

void Model::resolve_shapes(const Shape& input) {
    out_shapes_.clear();
    Shape cur = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        try {
            cur = layers_[i]->output_shape(cur);
        } catch (const BuildError& e) {
            if (i == 0) throw;
            throw BuildError(std::string(e.what()) + " (output of '" + layers_[i - 1]->name() +
                             "')");
        }
        out_shapes_.push_back(cur);
    }
    in_shape_ = input;
    resolved_ = true;
}

const Shape& Model::input_shape() const {
    if (!resolved_) throw UsageError("model: shapes not resolved");
    return in_shape_;
}

const Shape& Model::output_shape() const {
    if (!resolved_) throw UsageError("model: shapes not resolved");
    return out_shapes_.back();
}

bool Model::softmax_tail() const {
    return !layers_.empty() && layers_.back()->type() == "softmax";
}

Model::ForwardResult Model::forward(const Tensor& batch) {
    if (!resolved_) throw UsageError("model: forward before resolve_shapes");
    Tensor cur = batch;
    Tensor logits;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (i + 1 == layers_.size() && softmax_tail()) logits = cur;
        cur = layers_[i]->forward(cur);
    }
    if (!softmax_tail()) logits = cur;
    return {std::move(cur), std::move(logits)};
}

void Model::backward(const Tensor& upstream, bool from_logits) {
    for (auto& l : layers_) l->zero_grads();
    std::size_t start = layers_.size();
    if (from_logits && softmax_tail()) start -= 1;  // softmax folded into the loss gradient
    Tensor cur = upstream;
    for (std::size_t i = start; i-- > 0;) {
        cur = layers_[i]->backward(cur);
    }
}

std::vector<ParamRef> Model::params() {
    std::vector<ParamRef> out;
    for (auto& l : layers_) {
        for (ParamRef p : l->params()) {
            p.name = l->name() + "." + p.name;
            out.push_back(p);
        }
    }
    return out;
}

std::size_t Model::param_count() {
    std::size_t n = 0;
    for (const ParamRef& p : params()) n += p.value->size();
    return n;
}

std::vector<Tensor> Model::snapshot() {
    std::vector<Tensor> out;
    for (const ParamRef& p : params()) out.push_back(*p.value);
    return out;
}

void Model::restore(const std::vector<Tensor>& snap) {
    auto refs = params();
    if (snap.size() != refs.size()) {
        throw UsageError("model: snapshot has " + std::to_string(snap.size()) +
                         " tensors, model has " + std::to_string(refs.size()));
    }
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (!refs[i].value->same_shape(snap[i])) {
            throw ShapeError("model: snapshot tensor " + std::to_string(i) + " has shape " +
                             shape_str(snap[i].shape()) + ", expected " +
                             shape_str(refs[i].value->shape()));
        }
        *refs[i].value = snap[i];
    }
}

double Model::relu_kink_margin() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& l : layers_) m = std::min(m, l->relu_kink_margin());
    return m;
}

Shape default_input_shape(const ModelConfig& cfg) {
    const LayerConfig& first = cfg.layers.front();
    if (first.type == "dense") return {first.in};
    if (first.type == "conv2d") {
        const std::size_t h = std::max<std::size_t>(8, first.kernel_h);
        const std::size_t w = std::max<std::size_t>(8, first.kernel_w);
        return {h, w, first.in_channels};
    }
    if (first.type == "embedding") return {3};
    if (first.type == "lstm") return {3, first.in};
    throw ConfigError("cannot derive an input shape: first layer '" + first.type +
                      "' declares no dimensions");
}

}  // namespace bpnn
