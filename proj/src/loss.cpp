#include "bpnn/loss.hpp"

#include <cmath>

#include "bpnn/layers.hpp"

namespace bpnn {

LossKind parse_loss(const std::string& s) {
    if (s == "mse") return LossKind::mse;
    if (s == "cross_entropy") return LossKind::cross_entropy;
    throw ValueError("unknown loss '" + s + "' (expected mse|cross_entropy)");
}

const char* loss_name(LossKind k) {
    return k == LossKind::mse ? "mse" : "cross_entropy";
}

LossValue mse_weight_decay(const Tensor& h, const Tensor& y, double lambda,
                           const std::vector<ParamRef>& params) {
    if (!h.same_shape(y)) {
        throw ShapeError("mse: prediction " + shape_str(h.shape()) + " and target " +
                         shape_str(y.shape()) + " differ");
    }
    if (lambda < 0.0) throw ValueError("mse: lambda must be non-negative");
    Tensor grad = sub(h, y);
    double j = 0.5 * grad.squared_norm();
    for (const ParamRef& p : params) {
        if (!p.decay) continue;
        j += 0.5 * lambda * p.value->squared_norm();
        p.grad->axpy_inplace(lambda, *p.value);
    }
    return {j, std::move(grad)};
}

LossValue mse_batch(const Tensor& h, const Tensor& y) {
    if (!h.same_shape(y)) {
        throw ShapeError("mse: prediction " + shape_str(h.shape()) + " and target " +
                         shape_str(y.shape()) + " differ");
    }
    const double inv_n = 1.0 / static_cast<double>(h.extent(0));
    Tensor grad = sub(h, y);
    const double j = 0.5 * grad.squared_norm() * inv_n;
    grad.scale_inplace(inv_n);
    return {j, std::move(grad)};
}

LossValue cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2 || logits.extent(0) != labels.size()) {
        throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) +
                         " do not match " + std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = logits.extent(0), c = logits.extent(1);
    Tensor grad = softmax(logits);
    const double inv_n = 1.0 / static_cast<double>(n);
    double j = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= c) {
            throw IndexError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                             std::to_string(c) + ")");
        }
        // log softmax via the same max-subtracted path to stay consistent
        double mx = logits(i, 0);
        for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, logits(i, k));
        double denom = 0.0;
        for (std::size_t k = 0; k < c; ++k) denom += std::exp(logits(i, k) - mx);
        j -= (logits(i, static_cast<std::size_t>(label)) - mx - std::log(denom));
        grad(i, static_cast<std::size_t>(label)) -= 1.0;
    }
    grad.scale_inplace(inv_n);
    return {j * inv_n, std::move(grad)};
}

}  // namespace bpnn
