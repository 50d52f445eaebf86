#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bpnn/layer.hpp"

namespace bpnn {

enum class OptKind { sgd, adam, rmsprop };

OptKind parse_optimizer(const std::string& s);
const char* optimizer_name(OptKind k);

struct OptimizerConfig {
    OptKind kind = OptKind::adam;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double rho = 0.9;
    double lambda = 0.0;  // weight decay, applied to decay-flagged params only
};

/// Applies sgd / adam / rmsprop updates to a bound set of parameters. Weight
/// decay folds lambda * w into the gradient of decay-eligible tensors before
/// the update rule, so sgd realizes w <- w - eta * (g + lambda * w).
/// Epsilon is fixed at 1e-8 for adam and rmsprop.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    void bind(std::vector<ParamRef> refs);
    void step();
    std::uint64_t step_count() const { return t_; }
    const OptimizerConfig& config() const { return cfg_; }

    static constexpr double kEpsilon = 1e-8;

private:
    OptimizerConfig cfg_;
    std::vector<ParamRef> refs_;
    std::vector<Tensor> m_;  // first moments (adam) / mean squares (rmsprop)
    std::vector<Tensor> v_;  // second moments (adam)
    std::uint64_t t_ = 0;
    bool bound_ = false;
};

}  // namespace bpnn
