#include "bpnn/layers.hpp"

namespace bpnn {

Tensor ActivationLayer::forward(const Tensor& x) {
    kink_margin_ = std::numeric_limits<double>::infinity();
    if (kind_ == Activation::relu) {
        for (std::size_t i = 0; i < x.size(); ++i)
            kink_margin_ = std::min(kink_margin_, std::abs(x[i]));
    }
    cached_pre_ = x;
    return act_apply(kind_, x);
}

Tensor ActivationLayer::backward(const Tensor& upstream) {
    if (!cached_pre_) throw UsageError(std::string(type()) + " '" + name() +
                                       "': backward before forward");
    Tensor dx = hadamard(upstream, act_derivative(kind_, *cached_pre_));
    cached_pre_.reset();
    return dx;
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 2) {
        throw ShapeError("softmax expects [N, C], got " + shape_str(logits.shape()));
    }
    const std::size_t n = logits.extent(0), c = logits.extent(1);
    Tensor out({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out(i, j) = std::exp(logits(i, j) - mx);
            denom += out(i, j);
        }
        for (std::size_t j = 0; j < c; ++j) out(i, j) /= denom;
    }
    return out;
}

Shape SoftmaxLayer::output_shape(const Shape& in) const {
    if (in.size() != 1) {
        throw BuildError("softmax '" + name() + "' expects a class vector, receives " +
                         shape_str(in));
    }
    return in;
}

Tensor SoftmaxLayer::forward(const Tensor& x) {
    Tensor p = softmax(x);
    cached_probs_ = p;
    return p;
}

Tensor SoftmaxLayer::backward(const Tensor& upstream) {
    if (!cached_probs_) throw UsageError("softmax '" + name() + "': backward before forward");
    const Tensor& p = *cached_probs_;
    if (!upstream.same_shape(p)) {
        throw ShapeError("softmax '" + name() + "': upstream " + shape_str(upstream.shape()) +
                         " does not match " + shape_str(p.shape()));
    }
    const std::size_t n = p.extent(0), c = p.extent(1);
    Tensor dx({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += upstream(i, j) * p(i, j);
        for (std::size_t j = 0; j < c; ++j) dx(i, j) = p(i, j) * (upstream(i, j) - dot);
    }
    cached_probs_.reset();
    return dx;
}

Shape MaxPoolLayer::output_shape(const Shape& in) const {
    if (in.size() != 3 || in[0] < 2 || in[1] < 2) {
        throw BuildError("maxpool '" + name() + "' expects [H>=2, W>=2, C], receives " +
                         shape_str(in));
    }
    return {in[0] / 2, in[1] / 2, in[2]};
}

Tensor MaxPoolLayer::forward(const Tensor& x) {
    if (x.rank() != 4) {
        throw ShapeError("maxpool '" + name() + "': batch " + shape_str(x.shape()) +
                         " is not [N,H,W,C]");
    }
    const std::size_t n = x.extent(0), h = x.extent(1), w = x.extent(2), c = x.extent(3);
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor out({n, oh, ow, c});
    argmax_.assign(out.size(), 0);
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox)
                for (std::size_t ci = 0; ci < c; ++ci) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_flat = 0;
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            const std::size_t y = oy * 2 + dy, xx = ox * 2 + dx;
                            const double v = x(ni, y, xx, ci);
                            if (v > best) {  // strict: first occurrence wins ties
                                best = v;
                                best_flat = ((ni * h + y) * w + xx) * c + ci;
                            }
                        }
                    const std::size_t oidx = ((ni * oh + oy) * ow + ox) * c + ci;
                    out[oidx] = best;
                    argmax_[oidx] = best_flat;
                }
    cached_x_ = x;
    cached_in_shape_ = x.shape();
    return out;
}

Tensor MaxPoolLayer::backward(const Tensor& upstream) {
    if (!cached_x_) throw UsageError("maxpool '" + name() + "': backward before forward");
    if (upstream.size() != argmax_.size()) {
        throw ShapeError("maxpool '" + name() + "': upstream " + shape_str(upstream.shape()) +
                         " does not match pooled output");
    }
    Tensor dx(cached_in_shape_);
    for (std::size_t i = 0; i < argmax_.size(); ++i) dx[argmax_[i]] += upstream[i];
    cached_x_.reset();
    return dx;
}

Shape GlobalAvgPoolLayer::output_shape(const Shape& in) const {
    if (in.size() != 3) {
        throw BuildError("gap '" + name() + "' expects [H, W, C], receives " + shape_str(in));
    }
    return {in[2]};
}

Tensor GlobalAvgPoolLayer::forward(const Tensor& x) {
    if (x.rank() != 4) {
        throw ShapeError("gap '" + name() + "': batch " + shape_str(x.shape()) +
                         " is not [N,H,W,C]");
    }
    const std::size_t n = x.extent(0), h = x.extent(1), w = x.extent(2), c = x.extent(3);
    Tensor out({n, c});
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
                for (std::size_t ci = 0; ci < c; ++ci) out(ni, ci) += x(ni, y, xx, ci);
    out.scale_inplace(1.0 / static_cast<double>(h * w));
    cached_in_shape_ = x.shape();
    has_cache_ = true;
    return out;
}

Tensor GlobalAvgPoolLayer::backward(const Tensor& upstream) {
    if (!has_cache_) throw UsageError("gap '" + name() + "': backward before forward");
    const std::size_t n = cached_in_shape_[0], h = cached_in_shape_[1], w = cached_in_shape_[2],
                      c = cached_in_shape_[3];
    if (upstream.size() != n * c) {
        throw ShapeError("gap '" + name() + "': upstream " + shape_str(upstream.shape()) +
                         " does not match [N, C]");
    }
    const Tensor& up = upstream;
    Tensor dx(cached_in_shape_);
    const double inv = 1.0 / static_cast<double>(h * w);
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
                for (std::size_t ci = 0; ci < c; ++ci)
                    dx(ni, y, xx, ci) = up[ni * c + ci] * inv;
    has_cache_ = false;
    return dx;
}

Tensor FlattenLayer::forward(const Tensor& x) {
    if (x.rank() < 2) {
        throw ShapeError("flatten '" + name() + "': batch " + shape_str(x.shape()) +
                         " has no sample axes");
    }
    cached_in_shape_ = x.shape();
    has_cache_ = true;
    return x.reshaped({x.extent(0), x.size() / x.extent(0)});
}

Tensor FlattenLayer::backward(const Tensor& upstream) {
    if (!has_cache_) throw UsageError("flatten '" + name() + "': backward before forward");
    has_cache_ = false;
    return upstream.reshaped(cached_in_shape_);
}

}  // namespace bpnn
