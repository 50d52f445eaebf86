#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bpnn/model.hpp"

namespace bpnn {

struct CostRow {
    std::string layer;
    std::string mode;        // full | bilinear | "-" for parameter-free layers
    std::size_t alpha;
    std::uint64_t params;
    std::uint64_t flops;             // forward, per sample
    std::uint64_t activation_bytes;  // batch * output elements * element width
};

/// Per-layer cost accounting. `exc_*` totals drop the last layer that holds
/// parameters (the final classifier), matching the paper-style EXC column.
struct CostReport {
    std::vector<CostRow> rows;
    std::uint64_t total_params = 0, total_flops = 0, total_activation_bytes = 0;
    std::uint64_t exc_params = 0, exc_flops = 0, exc_activation_bytes = 0;
};

/// Defaults mirror the reference tables: batch 32, 4-byte elements. FLOPs
/// count one multiply-accumulate as 2, activations/pooling/softmax as 1 per
/// output element, and exclude bias additions; the estimate is forward-only.
CostReport cost_report(Model& model, const Shape& input, std::size_t batch = 32,
                       std::size_t elem_width = 4);

/// CSV with header layer,mode,alpha,params,flops,activation_bytes, a `total`
/// row, and (optionally) a `total_exc_last` row.
void write_cost_csv(std::ostream& out, const CostReport& report, bool exclude_last);

struct GradCheckEntry {
    std::string tensor;
    double worst_rel = 0.0;
    std::size_t checked = 0;
    std::size_t kink_skipped = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double worst_rel = 0.0;
    std::size_t checked = 0;
    std::size_t kink_skipped = 0;
    bool pass(double tol) const { return worst_rel <= tol; }
};

constexpr double kGradCheckStep = 1e-6;

/// Central-difference check of every parameter scalar against the analytic
/// backward pass, under the model's own loss. Relative error is
/// |a - n| / max(|a|, |n|, 1e-8). Probes that push a relu pre-activation
/// within 10x the step of its kink are excluded and counted as skipped.
GradCheckReport grad_check(Model& model, const Tensor& input, const std::vector<int>& labels,
                           const std::optional<Tensor>& targets, double step = kGradCheckStep);

/// Layer-level variant under the quadratic loss 1/2 ||f(x) - y||^2 with a
/// random fixed target drawn from `rng`.
GradCheckReport grad_check_layer(Layer& layer, const Tensor& input, Rng& rng,
                                 double step = kGradCheckStep);

/// Max |bilinear output - Kronecker-expanded full output| over `trials`
/// random inputs (all vocabulary rows for embedding layers). Throws
/// UsageError when the layer has no expansion.
double equivalence_check(Layer& layer, const Shape& in_shape, std::size_t trials, Rng& rng);

}  // namespace bpnn
