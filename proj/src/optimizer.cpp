#include "bpnn/optimizer.hpp"

#include <cmath>

#include "bpnn/errors.hpp"

namespace bpnn {

OptKind parse_optimizer(const std::string& s) {
    if (s == "sgd") return OptKind::sgd;
    if (s == "adam") return OptKind::adam;
    if (s == "rmsprop") return OptKind::rmsprop;
    throw ValueError("unknown optimizer '" + s + "' (expected sgd|adam|rmsprop)");
}

const char* optimizer_name(OptKind k) {
    switch (k) {
        case OptKind::sgd: return "sgd";
        case OptKind::adam: return "adam";
        case OptKind::rmsprop: return "rmsprop";
    }
    return "sgd";
}

void Optimizer::bind(std::vector<ParamRef> refs) {
    refs_ = std::move(refs);
    m_.clear();
    v_.clear();
    for (const ParamRef& r : refs_) {
        m_.push_back(Tensor::zeros(r.value->shape()));
        v_.push_back(Tensor::zeros(r.value->shape()));
    }
    t_ = 0;
    bound_ = true;
}

void Optimizer::step() {
    if (!bound_) throw UsageError("optimizer: step before bind");
    ++t_;
    for (std::size_t p = 0; p < refs_.size(); ++p) {
        Tensor& w = *refs_[p].value;
        const Tensor& g0 = *refs_[p].grad;
        const bool decay = refs_[p].decay && cfg_.lambda != 0.0;
        switch (cfg_.kind) {
            case OptKind::sgd:
                for (std::size_t i = 0; i < w.size(); ++i) {
                    const double g = g0[i] + (decay ? cfg_.lambda * w[i] : 0.0);
                    w[i] -= cfg_.lr * g;
                }
                break;
            case OptKind::adam: {
                const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
                const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
                for (std::size_t i = 0; i < w.size(); ++i) {
                    const double g = g0[i] + (decay ? cfg_.lambda * w[i] : 0.0);
                    m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g;
                    v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g * g;
                    const double mhat = m_[p][i] / bc1;
                    const double vhat = v_[p][i] / bc2;
                    w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + kEpsilon);
                }
                break;
            }
            case OptKind::rmsprop:
                for (std::size_t i = 0; i < w.size(); ++i) {
                    const double g = g0[i] + (decay ? cfg_.lambda * w[i] : 0.0);
                    m_[p][i] = cfg_.rho * m_[p][i] + (1.0 - cfg_.rho) * g * g;
                    w[i] -= cfg_.lr * g / (std::sqrt(m_[p][i]) + kEpsilon);
                }
                break;
        }
    }
}

}  // namespace bpnn
