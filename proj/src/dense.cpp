#include "bpnn/layers.hpp"

namespace bpnn {

DenseLayer::DenseLayer(ProjectionMode mode, std::size_t in, std::size_t out, std::size_t alpha,
                       Activation act, Rng& rng)
    : mode_(mode), in_(in), out_(out), alpha_(alpha), act_(act) {
    if (in < 1 || out < 1) throw ValueError("dense: dimensions must be positive");
    if (alpha < 1) throw ValueError("dense: alpha must be >= 1");
    if (mode == ProjectionMode::bilinear) {
        auto [d1, d2] = factorize_dim(in);
        auto [k1, k2] = factorize_dim(out);
        bilinear_ = make_bilinear(rng, d1, d2, k1, alpha * k2);
        gw1_ = Tensor::zeros(bilinear_->w1.shape());
        gw2_ = Tensor::zeros(bilinear_->w2.shape());
        gb_ = Tensor::zeros(bilinear_->b.shape());
    } else {
        full_ = make_full(rng, in, out);
        gw_ = Tensor::zeros(full_->W.shape());
        gb_ = Tensor::zeros(full_->b.shape());
    }
}

std::size_t DenseLayer::out_dim() const {
    return mode_ == ProjectionMode::bilinear ? alpha_ * out_ : out_;
}

Shape DenseLayer::output_shape(const Shape& in) const {
    if (in.size() != 1 || in[0] != in_) {
        throw BuildError("dense '" + name() + "' declared input [" + std::to_string(in_) +
                         "] but receives " + shape_str(in));
    }
    return {out_dim()};
}

Tensor DenseLayer::forward(const Tensor& x) {
    if (x.rank() != 2 || x.extent(1) != in_) {
        throw ShapeError("dense '" + name() + "': batch " + shape_str(x.shape()) +
                         " does not match input dim " + std::to_string(in_));
    }
    const std::size_t n = x.extent(0);
    const std::size_t k = out_dim();
    Tensor pre({n, k});
    if (mode_ == ProjectionMode::full) {
        pre = matmul(x, full_->W);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) pre(i, j) += full_->b[j];
    } else {
        const auto& p = *bilinear_;
        for (std::size_t i = 0; i < n; ++i) {
            Tensor xm = reshape_matrix(slice_row(x, i), p.d1(), p.d2());
            Tensor m = matmul(matmul(p.w1, xm), p.w2);
            m.add_inplace(p.b);
            set_row(pre, i, flatten(m));
        }
    }
    kink_margin_ = std::numeric_limits<double>::infinity();
    if (act_ == Activation::relu) {
        for (std::size_t i = 0; i < pre.size(); ++i)
            kink_margin_ = std::min(kink_margin_, std::abs(pre[i]));
    }
    cached_x_ = x;
    cached_pre_ = pre;
    return act_apply(act_, pre);
}

Tensor DenseLayer::backward(const Tensor& upstream) {
    if (!cached_x_) throw UsageError("dense '" + name() + "': backward before forward");
    const Tensor& x = *cached_x_;
    const Tensor& pre = *cached_pre_;
    if (!upstream.same_shape(pre)) {
        throw ShapeError("dense '" + name() + "': upstream " + shape_str(upstream.shape()) +
                         " does not match output " + shape_str(pre.shape()));
    }
    const std::size_t n = x.extent(0);
    Tensor dx({n, in_});
    if (mode_ == ProjectionMode::full) {
        Tensor g = hadamard(upstream, act_derivative(act_, pre));
        gw_.add_inplace(matmul(transpose(x), g));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < g.extent(1); ++j) gb_[j] += g(i, j);
        dx = matmul(g, transpose(full_->W));
    } else {
        const auto& p = *bilinear_;
        for (std::size_t i = 0; i < n; ++i) {
            Tensor xm = reshape_matrix(slice_row(x, i), p.d1(), p.d2());
            Tensor up = reshape_matrix(slice_row(upstream, i), p.k1(), p.k2());
            BilinearGrads grads = bilinear_backward(p, xm, act_, up);
            gw1_.add_inplace(grads.w1);
            gw2_.add_inplace(grads.w2);
            gb_.add_inplace(grads.b);
            set_row(dx, i, flatten(grads.x));
        }
    }
    cached_x_.reset();
    cached_pre_.reset();
    return dx;
}

std::vector<ParamRef> DenseLayer::params() {
    if (mode_ == ProjectionMode::full) {
        return {{"W", &full_->W, &gw_, true}, {"b", &full_->b, &gb_, false}};
    }
    return {{"w1", &bilinear_->w1, &gw1_, true},
            {"w2", &bilinear_->w2, &gw2_, true},
            {"b", &bilinear_->b, &gb_, false}};
}

std::uint64_t DenseLayer::forward_flops(const Shape& in) const {
    output_shape(in);  // validates
    if (mode_ == ProjectionMode::full) {
        return 2ULL * in_ * out_;
    }
    const auto& p = *bilinear_;
    return 2ULL * p.k1() * p.d1() * p.d2() + 2ULL * p.k1() * p.d2() * p.k2();
}

std::unique_ptr<Layer> DenseLayer::expanded() const {
    if (mode_ != ProjectionMode::bilinear) return nullptr;
    Rng scratch(0);
    auto twin = std::make_unique<DenseLayer>(ProjectionMode::full, in_, out_dim(), 1, act_, scratch);
    FullProjection f = expand_to_full(*bilinear_);
    twin->full_->W = std::move(f.W);
    twin->full_->b = std::move(f.b);
    twin->set_name(name());
    return twin;
}

}  // namespace bpnn
