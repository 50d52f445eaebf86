#pragma once

#include <optional>

#include "bpnn/activation.hpp"
#include "bpnn/layer.hpp"
#include "bpnn/projection.hpp"
#include "bpnn/rng.hpp"

namespace bpnn {

/// Fully-connected layer over flat inputs [N, D]. In bilinear mode the output
/// dimension is alpha * K, realized by scaling only the w2 output factor:
/// w1 [k1, d1], w2 [d2, alpha*k2] with (d1,d2) = factorize_dim(D) and
/// (k1,k2) = factorize_dim(K).
class DenseLayer : public Layer {
public:
    DenseLayer(ProjectionMode mode, std::size_t in, std::size_t out, std::size_t alpha,
               Activation act, Rng& rng);

    std::string_view type() const override { return "dense"; }
    ProjectionMode mode() const override { return mode_; }
    std::size_t alpha() const override { return alpha_; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& upstream) override;
    std::vector<ParamRef> params() override;
    std::uint64_t forward_flops(const Shape& in) const override;
    std::unique_ptr<Layer> expanded() const override;
    double relu_kink_margin() const override { return kink_margin_; }

    std::size_t in_dim() const { return in_; }
    std::size_t out_dim() const;
    Activation activation() const { return act_; }
    const FullProjection& full() const { return *full_; }
    const BilinearProjection& bilinear() const { return *bilinear_; }
    BilinearProjection& bilinear() { return *bilinear_; }
    FullProjection& full() { return *full_; }

private:
    ProjectionMode mode_;
    std::size_t in_, out_, alpha_;
    Activation act_;
    std::optional<FullProjection> full_;
    std::optional<BilinearProjection> bilinear_;
    Tensor gw_, gb_, gw1_, gw2_;  // gradient buffers matching the active mode
    std::optional<Tensor> cached_x_, cached_pre_;
    double kink_margin_ = std::numeric_limits<double>::infinity();
};

enum class Padding { valid, same };

Padding parse_padding(const std::string& s);

struct ConvGeometry {
    std::size_t out_h, out_w;
    long pad_top, pad_left;
    std::size_t patch_count() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                           std::size_t stride, Padding pad);

/// Extracts every receptive field of x [N, H, W, C] as a (kh*kw, C) matrix,
/// rows in row-major spatial order, stacked to [N*P, kh*kw, C].
Tensor im2col(const Tensor& x, std::size_t kh, std::size_t kw, std::size_t stride, Padding pad);

/// Adjoint of im2col: scatter-adds patch gradients back onto the input grid.
Tensor col2im(const Tensor& patches, const Shape& input_shape, std::size_t kh, std::size_t kw,
              std::size_t stride, Padding pad);

/// 2-D convolution over [N, H, W, C]. Full mode applies a (kh*kw*C -> C')
/// projection per patch. Bilinear mode treats each patch as a (kh*kw, C)
/// matrix and applies w1 [alpha*k1, kh*kw], w2 [C, alpha*k2] with
/// (k1,k2) = factorize_dim(C'), giving alpha^2*k1*k2 output channels.
class Conv2DLayer : public Layer {
public:
    Conv2DLayer(ProjectionMode mode, std::size_t kh, std::size_t kw, std::size_t in_channels,
                std::size_t out_channels, std::size_t stride, Padding pad, std::size_t alpha,
                Activation act, Rng& rng);

    std::string_view type() const override { return "conv2d"; }
    ProjectionMode mode() const override { return mode_; }
    std::size_t alpha() const override { return alpha_; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& upstream) override;
    std::vector<ParamRef> params() override;
    std::uint64_t forward_flops(const Shape& in) const override;
    std::unique_ptr<Layer> expanded() const override;
    double relu_kink_margin() const override { return kink_margin_; }

    std::size_t out_channels() const;
    std::size_t in_channels() const { return in_c_; }
    const BilinearProjection& bilinear() const { return *bilinear_; }
    const FullProjection& full() const { return *full_; }

private:
    ProjectionMode mode_;
    std::size_t kh_, kw_, in_c_, out_c_, alpha_, stride_;
    Padding pad_;
    Activation act_;
    std::optional<FullProjection> full_;
    std::optional<BilinearProjection> bilinear_;
    Tensor gw_, gb_, gw1_, gw2_;
    std::optional<Tensor> cached_patches_, cached_pre_;
    Shape cached_in_shape_;
    double kink_margin_ = std::numeric_limits<double>::infinity();
};

/// Token id -> dense vector table. The bilinear variant never materializes
/// the V x (alpha*E) table; a lookup of id = i1*v2 + i2 builds the Kronecker
/// row from w1 column i1 and w2 row i2 on the fly.
class EmbeddingLayer : public Layer {
public:
    EmbeddingLayer(ProjectionMode mode, std::size_t vocab, std::size_t dim, std::size_t alpha,
                   Rng& rng);

    std::string_view type() const override { return "embedding"; }
    ProjectionMode mode() const override { return mode_; }
    std::size_t alpha() const override { return alpha_; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& upstream) override;
    std::vector<ParamRef> params() override;
    std::uint64_t forward_flops(const Shape& in) const override;
    std::unique_ptr<Layer> expanded() const override;

    std::size_t vocab() const { return vocab_; }
    std::size_t out_dim() const;
    /// One embedding row; bilinear mode computes it without expansion.
    Tensor lookup(std::size_t id) const;

private:
    ProjectionMode mode_;
    std::size_t vocab_, dim_, alpha_;
    std::size_t v1_ = 1, v2_ = 1, e1_ = 1, e2_ = 1;
    Tensor table_, w1_, w2_;
    Tensor gtable_, gw1_, gw2_;
    std::optional<Tensor> cached_ids_;
};

/// LSTM over [N, T, D] emitting the final hidden state [N, H_out]. Full mode
/// runs the standard 8-projection cell; bilinear mode replaces each map with
/// a (w1, w2) factor pair over matrix-shaped states, one bias matrix per
/// gate, with alpha scaling the h2 state factor so H_out = alpha * H.
class LstmLayer : public Layer {
public:
    LstmLayer(ProjectionMode mode, std::size_t in, std::size_t hidden, std::size_t alpha,
              Rng& rng);

    std::string_view type() const override { return "lstm"; }
    ProjectionMode mode() const override { return mode_; }
    std::size_t alpha() const override { return alpha_; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& upstream) override;
    std::vector<ParamRef> params() override;
    std::uint64_t forward_flops(const Shape& in) const override;
    std::unique_ptr<Layer> expanded() const override;

    std::size_t in_dim() const { return in_; }
    std::size_t hidden_dim() const;  // H_out

    /// One cell step on row vectors; exposed for the single-step contracts.
    /// Shapes: x_t [N, D], h_prev/c_prev [N, H_out].
    std::pair<Tensor, Tensor> step(const Tensor& x_t, const Tensor& h_prev,
                                   const Tensor& c_prev) const;

private:
    struct GatePair {
        Tensor w1x, w2x, w1h, w2h, b;
        Tensor gw1x, gw2x, gw1h, gw2h, gb;
    };
    struct GateFull {
        Tensor wx, wh, b;
        Tensor gwx, gwh, gb;
    };
    struct StepCache {
        Tensor x, h_prev, c_prev, i, f, o, g, c, tanh_c;
    };

    Tensor gates_pre(std::size_t gate, const Tensor& x_t, const Tensor& h_prev) const;

    ProjectionMode mode_;
    std::size_t in_, hidden_, alpha_;
    std::size_t dx1_ = 1, dx2_ = 1, h1_ = 1, h2_ = 1;
    std::vector<GateFull> full_;   // i, f, o, g
    std::vector<GatePair> bilin_;  // i, f, o, g
    std::vector<StepCache> cache_;
    bool has_cache_ = false;
};

/// Elementwise activation as a standalone layer (relu / sigmoid / tanh).
class ActivationLayer : public Layer {
public:
    explicit ActivationLayer(Activation kind) : kind_(kind) {}

    std::string_view type() const override { return activation_name(kind_); }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& upstream) override;
    double relu_kink_margin() const override { return kink_margin_; }

private:
    Activation kind_;
    std::optional<Tensor> cached_pre_;
    double kink_margin_ = std::numeric_limits<double>::infinity();
};

/// Row-wise softmax over [N, C], computed with max subtraction.
class SoftmaxLayer : public Layer {
public:
    std::string_view type() const override { return "softmax"; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& upstream) override;

private:
    std::optional<Tensor> cached_probs_;
};

Tensor softmax(const Tensor& logits);

/// 2x2 stride-2 max pooling; gradient routes to the argmax (first occurrence
/// in row-major scan on ties).
class MaxPoolLayer : public Layer {
public:
    std::string_view type() const override { return "maxpool"; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& upstream) override;

private:
    std::optional<Tensor> cached_x_;
    std::vector<std::size_t> argmax_;
    Shape cached_in_shape_;
};

/// Global average over the spatial grid: [N, H, W, C] -> [N, C].
class GlobalAvgPoolLayer : public Layer {
public:
    std::string_view type() const override { return "gap"; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& upstream) override;

private:
    Shape cached_in_shape_;
    bool has_cache_ = false;
};

class FlattenLayer : public Layer {
public:
    std::string_view type() const override { return "flatten"; }
    Shape output_shape(const Shape& in) const override { return {shape_elems(in)}; }
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& upstream) override;
    std::uint64_t forward_flops(const Shape&) const override { return 0; }

private:
    Shape cached_in_shape_;
    bool has_cache_ = false;
};

}  // namespace bpnn
