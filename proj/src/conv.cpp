#include "bpnn/layers.hpp"

namespace bpnn {

Padding parse_padding(const std::string& s) {
    if (s == "valid") return Padding::valid;
    if (s == "same") return Padding::same;
    throw ValueError("unknown padding '" + s + "' (expected valid|same)");
}

ConvGeometry conv_geometry(std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                           std::size_t stride, Padding pad) {
    if (stride < 1) throw ValueError("conv: stride must be >= 1");
    ConvGeometry g{};
    if (pad == Padding::valid) {
        if (h < kh || w < kw) {
            throw ShapeError("conv: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                             " larger than input " + std::to_string(h) + "x" + std::to_string(w));
        }
        g.out_h = (h - kh) / stride + 1;
        g.out_w = (w - kw) / stride + 1;
        g.pad_top = 0;
        g.pad_left = 0;
    } else {
        g.out_h = (h + stride - 1) / stride;
        g.out_w = (w + stride - 1) / stride;
        const long ph = std::max<long>(0, static_cast<long>((g.out_h - 1) * stride + kh) -
                                              static_cast<long>(h));
        const long pw = std::max<long>(0, static_cast<long>((g.out_w - 1) * stride + kw) -
                                              static_cast<long>(w));
        g.pad_top = ph / 2;
        g.pad_left = pw / 2;
    }
    return g;
}

Tensor im2col(const Tensor& x, std::size_t kh, std::size_t kw, std::size_t stride, Padding pad) {
    if (x.rank() != 4) {
        throw ShapeError("im2col expects [N,H,W,C], got " + shape_str(x.shape()));
    }
    const std::size_t n = x.extent(0), h = x.extent(1), w = x.extent(2), c = x.extent(3);
    const ConvGeometry g = conv_geometry(h, w, kh, kw, stride, pad);
    Tensor out({n * g.patch_count(), kh * kw, c});
    std::size_t patch = 0;
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            for (std::size_t ox = 0; ox < g.out_w; ++ox, ++patch) {
                for (std::size_t dy = 0; dy < kh; ++dy) {
                    const long sy = static_cast<long>(oy * stride) - g.pad_top + static_cast<long>(dy);
                    for (std::size_t dx = 0; dx < kw; ++dx) {
                        const long sx =
                            static_cast<long>(ox * stride) - g.pad_left + static_cast<long>(dx);
                        if (sy < 0 || sy >= static_cast<long>(h) || sx < 0 ||
                            sx >= static_cast<long>(w))
                            continue;  // zero padding
                        for (std::size_t ci = 0; ci < c; ++ci) {
                            out(patch, dy * kw + dx, ci) =
                                x(ni, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), ci);
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor col2im(const Tensor& patches, const Shape& input_shape, std::size_t kh, std::size_t kw,
              std::size_t stride, Padding pad) {
    if (input_shape.size() != 4) {
        throw ShapeError("col2im expects an [N,H,W,C] target, got " + shape_str(input_shape));
    }
    const std::size_t n = input_shape[0], h = input_shape[1], w = input_shape[2],
                      c = input_shape[3];
    const ConvGeometry g = conv_geometry(h, w, kh, kw, stride, pad);
    if (patches.rank() != 3 || patches.extent(0) != n * g.patch_count() ||
        patches.extent(1) != kh * kw || patches.extent(2) != c) {
        throw ShapeError("col2im: patches " + shape_str(patches.shape()) +
                         " inconsistent with input " + shape_str(input_shape));
    }
    Tensor out(input_shape);
    std::size_t patch = 0;
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            for (std::size_t ox = 0; ox < g.out_w; ++ox, ++patch) {
                for (std::size_t dy = 0; dy < kh; ++dy) {
                    const long sy = static_cast<long>(oy * stride) - g.pad_top + static_cast<long>(dy);
                    for (std::size_t dx = 0; dx < kw; ++dx) {
                        const long sx =
                            static_cast<long>(ox * stride) - g.pad_left + static_cast<long>(dx);
                        if (sy < 0 || sy >= static_cast<long>(h) || sx < 0 ||
                            sx >= static_cast<long>(w))
                            continue;
                        for (std::size_t ci = 0; ci < c; ++ci) {
                            out(ni, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), ci) +=
                                patches(patch, dy * kw + dx, ci);
                        }
                    }
                }
            }
        }
    }
    return out;
}

Conv2DLayer::Conv2DLayer(ProjectionMode mode, std::size_t kh, std::size_t kw,
                         std::size_t in_channels, std::size_t out_channels, std::size_t stride,
                         Padding pad, std::size_t alpha, Activation act, Rng& rng)
    : mode_(mode), kh_(kh), kw_(kw), in_c_(in_channels), out_c_(out_channels), alpha_(alpha),
      stride_(stride), pad_(pad), act_(act) {
    if (kh < 1 || kw < 1 || in_channels < 1 || out_channels < 1)
        throw ValueError("conv2d: extents must be positive");
    if (alpha < 1) throw ValueError("conv2d: alpha must be >= 1");
    if (stride < 1) throw ValueError("conv2d: stride must be >= 1");
    if (mode == ProjectionMode::bilinear) {
        auto [k1, k2] = factorize_dim(out_channels);
        // Patch matrix is (kh*kw, C); alpha scales both output factors.
        bilinear_ = make_bilinear(rng, kh * kw, in_channels, alpha * k1, alpha * k2);
        gw1_ = Tensor::zeros(bilinear_->w1.shape());
        gw2_ = Tensor::zeros(bilinear_->w2.shape());
        gb_ = Tensor::zeros(bilinear_->b.shape());
    } else {
        full_ = make_full(rng, kh * kw * in_channels, out_channels);
        gw_ = Tensor::zeros(full_->W.shape());
        gb_ = Tensor::zeros(full_->b.shape());
    }
}

std::size_t Conv2DLayer::out_channels() const {
    if (mode_ == ProjectionMode::bilinear) return bilinear_->k1() * bilinear_->k2();
    return out_c_;
}

Shape Conv2DLayer::output_shape(const Shape& in) const {
    if (in.size() != 3 || in[2] != in_c_) {
        throw BuildError("conv2d '" + name() + "' declared " + std::to_string(in_c_) +
                         " input channels but receives " + shape_str(in));
    }
    const ConvGeometry g = conv_geometry(in[0], in[1], kh_, kw_, stride_, pad_);
    return {g.out_h, g.out_w, out_channels()};
}

Tensor Conv2DLayer::forward(const Tensor& x) {
    if (x.rank() != 4 || x.extent(3) != in_c_) {
        throw ShapeError("conv2d '" + name() + "': batch " + shape_str(x.shape()) +
                         " does not match " + std::to_string(in_c_) + " input channels");
    }
    const std::size_t n = x.extent(0);
    const ConvGeometry g = conv_geometry(x.extent(1), x.extent(2), kh_, kw_, stride_, pad_);
    const std::size_t rows = n * g.patch_count();
    const std::size_t co = out_channels();

    Tensor patches = im2col(x, kh_, kw_, stride_, pad_);
    Tensor pre({rows, co});
    if (mode_ == ProjectionMode::full) {
        Tensor flat = patches.reshaped({rows, kh_ * kw_ * in_c_});
        pre = matmul(flat, full_->W);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < co; ++j) pre(r, j) += full_->b[j];
    } else {
        const auto& p = *bilinear_;
        for (std::size_t r = 0; r < rows; ++r) {
            Tensor pm = slice_row(patches, r);  // [kh*kw, C]
            Tensor m = matmul(matmul(p.w1, pm), p.w2);
            m.add_inplace(p.b);
            set_row(pre, r, flatten(m));
        }
    }
    kink_margin_ = std::numeric_limits<double>::infinity();
    if (act_ == Activation::relu) {
        for (std::size_t i = 0; i < pre.size(); ++i)
            kink_margin_ = std::min(kink_margin_, std::abs(pre[i]));
    }
    cached_patches_ = std::move(patches);
    cached_pre_ = pre;
    cached_in_shape_ = x.shape();
    return act_apply(act_, pre).reshaped({n, g.out_h, g.out_w, co});
}

Tensor Conv2DLayer::backward(const Tensor& upstream) {
    if (!cached_patches_) throw UsageError("conv2d '" + name() + "': backward before forward");
    const Tensor& patches = *cached_patches_;
    const Tensor& pre = *cached_pre_;
    const std::size_t rows = pre.extent(0);
    const std::size_t co = pre.extent(1);
    if (upstream.size() != rows * co) {
        throw ShapeError("conv2d '" + name() + "': upstream " + shape_str(upstream.shape()) +
                         " does not match feature map");
    }
    Tensor g = hadamard(upstream.reshaped({rows, co}), act_derivative(act_, pre));
    Tensor patch_grads({rows, kh_ * kw_, in_c_});
    if (mode_ == ProjectionMode::full) {
        Tensor flat = patches.reshaped({rows, kh_ * kw_ * in_c_});
        gw_.add_inplace(matmul(transpose(flat), g));
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < co; ++j) gb_[j] += g(r, j);
        patch_grads = matmul(g, transpose(full_->W)).reshaped({rows, kh_ * kw_, in_c_});
    } else {
        const auto& p = *bilinear_;
        for (std::size_t r = 0; r < rows; ++r) {
            Tensor pm = slice_row(patches, r);
            Tensor gm = reshape_matrix(slice_row(g, r), p.k1(), p.k2());
            gw1_.add_inplace(matmul(gm, transpose(matmul(pm, p.w2))));
            gw2_.add_inplace(matmul(transpose(matmul(p.w1, pm)), gm));
            gb_.add_inplace(gm);
            set_row(patch_grads, r, matmul(matmul(transpose(p.w1), gm), transpose(p.w2)));
        }
    }
    Tensor dx = col2im(patch_grads, cached_in_shape_, kh_, kw_, stride_, pad_);
    cached_patches_.reset();
    cached_pre_.reset();
    return dx;
}

std::vector<ParamRef> Conv2DLayer::params() {
    if (mode_ == ProjectionMode::full) {
        return {{"W", &full_->W, &gw_, true}, {"b", &full_->b, &gb_, false}};
    }
    return {{"w1", &bilinear_->w1, &gw1_, true},
            {"w2", &bilinear_->w2, &gw2_, true},
            {"b", &bilinear_->b, &gb_, false}};
}

std::uint64_t Conv2DLayer::forward_flops(const Shape& in) const {
    output_shape(in);  // validates
    const ConvGeometry g = conv_geometry(in[0], in[1], kh_, kw_, stride_, pad_);
    const std::uint64_t positions = g.patch_count();
    std::uint64_t per_position;
    if (mode_ == ProjectionMode::full) {
        per_position = 2ULL * kh_ * kw_ * in_c_ * out_c_;
    } else {
        const auto& p = *bilinear_;
        per_position = 2ULL * p.k1() * p.d1() * p.d2() + 2ULL * p.k1() * p.d2() * p.k2();
    }
    return positions * per_position;
}

std::unique_ptr<Layer> Conv2DLayer::expanded() const {
    if (mode_ != ProjectionMode::bilinear) return nullptr;
    Rng scratch(0);
    auto twin = std::make_unique<Conv2DLayer>(ProjectionMode::full, kh_, kw_, in_c_,
                                              out_channels(), stride_, pad_, 1, act_, scratch);
    FullProjection f = expand_to_full(*bilinear_);
    twin->full_->W = std::move(f.W);
    twin->full_->b = std::move(f.b);
    twin->set_name(name());
    return twin;
}

}  // namespace bpnn
