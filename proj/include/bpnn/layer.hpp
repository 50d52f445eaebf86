#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "bpnn/tensor.hpp"

namespace bpnn {

enum class ProjectionMode { none, full, bilinear };

inline const char* projection_mode_name(ProjectionMode m) {
    switch (m) {
        case ProjectionMode::none: return "-";
        case ProjectionMode::full: return "full";
        case ProjectionMode::bilinear: return "bilinear";
    }
    return "-";
}

/// Handle to one trainable tensor and its gradient buffer. `decay` marks
/// weight matrices; biases are never weight-decayed.
struct ParamRef {
    std::string name;
    Tensor* value;
    Tensor* grad;
    bool decay;
};

/// A forward/backward unit. Inputs and outputs carry a leading batch axis;
/// forward caches whatever backward needs, and backward consumes that cache
/// exactly once, accumulating parameter gradients (summed over the batch)
/// and returning the input gradient.
class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string_view type() const = 0;
    virtual ProjectionMode mode() const { return ProjectionMode::none; }
    virtual std::size_t alpha() const { return 1; }

    /// Per-sample output shape; throws BuildError when `in` is incompatible.
    virtual Shape output_shape(const Shape& in) const = 0;

    virtual Tensor forward(const Tensor& x) = 0;
    virtual Tensor backward(const Tensor& upstream) = 0;

    virtual std::vector<ParamRef> params() { return {}; }

    /// Forward cost per sample: 1 multiply-accumulate = 2 FLOPs, bias adds
    /// uncounted, activations/pooling/softmax 1 FLOP per output element.
    virtual std::uint64_t forward_flops(const Shape& in) const {
        return shape_elems(output_shape(in));
    }

    /// For bilinear layers: an equivalent full-projection twin built by
    /// Kronecker expansion. Null when no expansion applies.
    virtual std::unique_ptr<Layer> expanded() const { return nullptr; }

    /// Smallest |pre-activation| any relu saw during the last forward;
    /// +inf when the layer ran no relu. Lets the gradient checker skip
    /// probes that straddle the kink.
    virtual double relu_kink_margin() const {
        return std::numeric_limits<double>::infinity();
    }

    const std::string& name() const { return name_; }
    void set_name(std::string n) { name_ = std::move(n); }

    void zero_grads() {
        for (const ParamRef& p : params()) p.grad->fill(0.0);
    }

private:
    std::string name_;
};

}  // namespace bpnn
