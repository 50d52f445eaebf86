#pragma once

#include <string>
#include <vector>

#include "bpnn/layer.hpp"
#include "bpnn/tensor.hpp"

namespace bpnn {

enum class LossKind { mse, cross_entropy };

LossKind parse_loss(const std::string& s);
const char* loss_name(LossKind k);

/// Scalar objective plus its gradient with respect to the tensor handed in.
struct LossValue {
    double value;
    Tensor grad;
};

/// J = 1/2 ||h - y||^2 + (lambda/2) sum ||w||^2 over weight-decay-eligible
/// params; grad = (h - y). When params are supplied, lambda * w is added to
/// each eligible weight gradient so the result matches the full analytic
/// update. Biases never decay.
LossValue mse_weight_decay(const Tensor& h, const Tensor& y, double lambda,
                           const std::vector<ParamRef>& params = {});

/// Batch-mean squared error used in training: J = (1/N) sum_i 1/2 ||h_i - y_i||^2
/// over the leading axis, grad = (h - y)/N. At N = 1 this is the plain
/// (decay-free) stochastic loss.
LossValue mse_batch(const Tensor& h, const Tensor& y);

/// Mean categorical cross-entropy on logits: J = (1/N) sum_i -log softmax(z_i)[y_i],
/// grad = (softmax - onehot)/N.
LossValue cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace bpnn
