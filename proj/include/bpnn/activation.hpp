#pragma once

#include <cmath>
#include <string>

#include "bpnn/errors.hpp"
#include "bpnn/tensor.hpp"

namespace bpnn {

enum class Activation { identity, sigmoid, tanh, relu };

inline double act_apply(Activation a, double z) {
    switch (a) {
        case Activation::identity: return z;
        case Activation::sigmoid:
            if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
            else {
                const double e = std::exp(z);
                return e / (1.0 + e);
            }
        case Activation::tanh: return std::tanh(z);
        case Activation::relu: return z > 0.0 ? z : 0.0;
    }
    return z;
}

/// Derivative at the pre-activation z. The relu subgradient at 0 is 0.
inline double act_derivative(Activation a, double z) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::sigmoid: {
            const double s = act_apply(Activation::sigmoid, z);
            return s * (1.0 - s);
        }
        case Activation::tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    }
    return 1.0;
}

inline Tensor act_apply(Activation a, const Tensor& z) {
    Tensor out = z;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = act_apply(a, out[i]);
    return out;
}

inline Tensor act_derivative(Activation a, const Tensor& z) {
    Tensor out = z;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = act_derivative(a, out[i]);
    return out;
}

inline Activation parse_activation(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw ValueError("unknown activation '" + s + "'");
}

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
    }
    return "identity";
}

}  // namespace bpnn
