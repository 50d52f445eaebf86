#include "bpnn/layers.hpp"

namespace bpnn {

namespace {
constexpr std::size_t kGateI = 0, kGateF = 1, kGateO = 2, kGateG = 3;
const char* kGateNames[4] = {"i", "f", "o", "g"};
}  // namespace

LstmLayer::LstmLayer(ProjectionMode mode, std::size_t in, std::size_t hidden, std::size_t alpha,
                     Rng& rng)
    : mode_(mode), in_(in), hidden_(hidden), alpha_(alpha) {
    if (in < 1 || hidden < 1) throw ValueError("lstm: dimensions must be positive");
    if (alpha < 1) throw ValueError("lstm: alpha must be >= 1");
    if (mode_ == ProjectionMode::bilinear) {
        std::tie(dx1_, dx2_) = factorize_dim(in);
        std::tie(h1_, h2_) = factorize_dim(hidden);
        h2_ *= alpha;  // only the h2 state factor is alpha-scaled, as in dense layers
        for (std::size_t q = 0; q < 4; ++q) {
            GatePair gp;
            gp.w1x = normal_init(rng, {h1_, dx1_});
            gp.w2x = normal_init(rng, {dx2_, h2_});
            gp.w1h = normal_init(rng, {h1_, h1_});
            gp.w2h = normal_init(rng, {h2_, h2_});
            gp.b = q == kGateF ? Tensor::ones({h1_, h2_}) : Tensor::zeros({h1_, h2_});
            gp.gw1x = Tensor::zeros(gp.w1x.shape());
            gp.gw2x = Tensor::zeros(gp.w2x.shape());
            gp.gw1h = Tensor::zeros(gp.w1h.shape());
            gp.gw2h = Tensor::zeros(gp.w2h.shape());
            gp.gb = Tensor::zeros(gp.b.shape());
            bilin_.push_back(std::move(gp));
        }
    } else {
        for (std::size_t q = 0; q < 4; ++q) {
            GateFull gf;
            gf.wx = normal_init(rng, {in, hidden});
            gf.wh = normal_init(rng, {hidden, hidden});
            gf.b = q == kGateF ? Tensor::ones({hidden}) : Tensor::zeros({hidden});
            gf.gwx = Tensor::zeros(gf.wx.shape());
            gf.gwh = Tensor::zeros(gf.wh.shape());
            gf.gb = Tensor::zeros(gf.b.shape());
            full_.push_back(std::move(gf));
        }
    }
}

std::size_t LstmLayer::hidden_dim() const {
    return mode_ == ProjectionMode::bilinear ? h1_ * h2_ : hidden_;
}

Shape LstmLayer::output_shape(const Shape& in) const {
    if (in.size() != 2 || in[1] != in_) {
        throw BuildError("lstm '" + name() + "' declared input dim " + std::to_string(in_) +
                         " but receives " + shape_str(in));
    }
    return {hidden_dim()};
}

Tensor LstmLayer::gates_pre(std::size_t gate, const Tensor& x_t, const Tensor& h_prev) const {
    const std::size_t n = x_t.extent(0);
    const std::size_t hd = hidden_dim();
    Tensor pre({n, hd});
    if (mode_ == ProjectionMode::full) {
        const GateFull& gf = full_[gate];
        pre = add(matmul(x_t, gf.wx), matmul(h_prev, gf.wh));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < hd; ++j) pre(i, j) += gf.b[j];
    } else {
        const GatePair& gp = bilin_[gate];
        for (std::size_t i = 0; i < n; ++i) {
            Tensor xm = reshape_matrix(slice_row(x_t, i), dx1_, dx2_);
            Tensor hm = reshape_matrix(slice_row(h_prev, i), h1_, h2_);
            Tensor m = add(matmul(matmul(gp.w1x, xm), gp.w2x),
                           matmul(matmul(gp.w1h, hm), gp.w2h));
            m.add_inplace(gp.b);
            set_row(pre, i, flatten(m));
        }
    }
    return pre;
}

std::pair<Tensor, Tensor> LstmLayer::step(const Tensor& x_t, const Tensor& h_prev,
                                          const Tensor& c_prev) const {
    if (x_t.rank() != 2 || x_t.extent(1) != in_) {
        throw ShapeError("lstm '" + name() + "': step input " + shape_str(x_t.shape()) +
                         " does not match input dim " + std::to_string(in_));
    }
    const std::size_t hd = hidden_dim();
    if (h_prev.rank() != 2 || h_prev.extent(1) != hd || !h_prev.same_shape(c_prev)) {
        throw ShapeError("lstm '" + name() + "': state shapes " + shape_str(h_prev.shape()) +
                         "/" + shape_str(c_prev.shape()) + " do not match hidden dim " +
                         std::to_string(hd));
    }
    Tensor i = act_apply(Activation::sigmoid, gates_pre(kGateI, x_t, h_prev));
    Tensor f = act_apply(Activation::sigmoid, gates_pre(kGateF, x_t, h_prev));
    Tensor o = act_apply(Activation::sigmoid, gates_pre(kGateO, x_t, h_prev));
    Tensor g = act_apply(Activation::tanh, gates_pre(kGateG, x_t, h_prev));
    Tensor c = add(hadamard(f, c_prev), hadamard(i, g));
    Tensor h = hadamard(o, act_apply(Activation::tanh, c));
    return {std::move(h), std::move(c)};
}

Tensor LstmLayer::forward(const Tensor& x) {
    if (x.rank() != 3 || x.extent(2) != in_) {
        throw ShapeError("lstm '" + name() + "': batch " + shape_str(x.shape()) +
                         " is not [N, T, " + std::to_string(in_) + "]");
    }
    const std::size_t n = x.extent(0), steps = x.extent(1);
    const std::size_t hd = hidden_dim();
    cache_.clear();
    cache_.reserve(steps);
    Tensor h({n, hd});
    Tensor c({n, hd});
    for (std::size_t t = 0; t < steps; ++t) {
        Tensor x_t({n, in_});
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t j = 0; j < in_; ++j) x_t(s, j) = x(s, t, j);

        StepCache sc;
        sc.x = x_t;
        sc.h_prev = h;
        sc.c_prev = c;
        sc.i = act_apply(Activation::sigmoid, gates_pre(kGateI, x_t, h));
        sc.f = act_apply(Activation::sigmoid, gates_pre(kGateF, x_t, h));
        sc.o = act_apply(Activation::sigmoid, gates_pre(kGateO, x_t, h));
        sc.g = act_apply(Activation::tanh, gates_pre(kGateG, x_t, h));
        sc.c = add(hadamard(sc.f, c), hadamard(sc.i, sc.g));
        sc.tanh_c = act_apply(Activation::tanh, sc.c);
        h = hadamard(sc.o, sc.tanh_c);
        c = sc.c;
        if (!h.all_finite() || !c.all_finite()) {
            throw NumericError("lstm '" + name() + "': non-finite state at step " +
                               std::to_string(t));
        }
        cache_.push_back(std::move(sc));
    }
    has_cache_ = true;
    return h;
}

Tensor LstmLayer::backward(const Tensor& upstream) {
    if (!has_cache_) throw UsageError("lstm '" + name() + "': backward before forward");
    const std::size_t steps = cache_.size();
    const std::size_t n = cache_.front().x.extent(0);
    const std::size_t hd = hidden_dim();
    if (upstream.rank() != 2 || upstream.extent(0) != n || upstream.extent(1) != hd) {
        throw ShapeError("lstm '" + name() + "': upstream " + shape_str(upstream.shape()) +
                         " does not match [N, " + std::to_string(hd) + "]");
    }
    Tensor dx({n, steps, in_});
    Tensor dh = upstream;
    Tensor dc({n, hd});
    for (std::size_t t = steps; t-- > 0;) {
        const StepCache& sc = cache_[t];
        Tensor d_o = hadamard(dh, sc.tanh_c);
        // dJ/dc_t = dh o o_t o (1 - tanh(c_t)^2) + carried dc
        Tensor dct = dc;
        for (std::size_t idx = 0; idx < dct.size(); ++idx) {
            dct[idx] += dh[idx] * sc.o[idx] * (1.0 - sc.tanh_c[idx] * sc.tanh_c[idx]);
        }
        Tensor di = hadamard(dct, sc.g);
        Tensor dg = hadamard(dct, sc.i);
        Tensor df = hadamard(dct, sc.c_prev);

        // pre-activation gradients from gate outputs
        Tensor dzi = di, dzf = df, dzo = d_o, dzg = dg;
        for (std::size_t idx = 0; idx < dzi.size(); ++idx) {
            dzi[idx] *= sc.i[idx] * (1.0 - sc.i[idx]);
            dzf[idx] *= sc.f[idx] * (1.0 - sc.f[idx]);
            dzo[idx] *= sc.o[idx] * (1.0 - sc.o[idx]);
            dzg[idx] *= 1.0 - sc.g[idx] * sc.g[idx];
        }
        const Tensor* dz[4] = {&dzi, &dzf, &dzo, &dzg};

        Tensor dxt({n, in_});
        Tensor dhp({n, hd});
        if (mode_ == ProjectionMode::full) {
            Tensor xt_t = transpose(sc.x);
            Tensor hp_t = transpose(sc.h_prev);
            for (std::size_t q = 0; q < 4; ++q) {
                GateFull& gf = full_[q];
                gf.gwx.add_inplace(matmul(xt_t, *dz[q]));
                gf.gwh.add_inplace(matmul(hp_t, *dz[q]));
                for (std::size_t s = 0; s < n; ++s)
                    for (std::size_t j = 0; j < hd; ++j) gf.gb[j] += (*dz[q])(s, j);
                dxt.add_inplace(matmul(*dz[q], transpose(gf.wx)));
                dhp.add_inplace(matmul(*dz[q], transpose(gf.wh)));
            }
        } else {
            for (std::size_t s = 0; s < n; ++s) {
                Tensor xm = reshape_matrix(slice_row(sc.x, s), dx1_, dx2_);
                Tensor hm = reshape_matrix(slice_row(sc.h_prev, s), h1_, h2_);
                Tensor dxm({dx1_, dx2_});
                Tensor dhm({h1_, h2_});
                for (std::size_t q = 0; q < 4; ++q) {
                    GatePair& gp = bilin_[q];
                    Tensor gm = reshape_matrix(slice_row(*dz[q], s), h1_, h2_);
                    gp.gw1x.add_inplace(matmul(gm, transpose(matmul(xm, gp.w2x))));
                    gp.gw2x.add_inplace(matmul(transpose(matmul(gp.w1x, xm)), gm));
                    gp.gw1h.add_inplace(matmul(gm, transpose(matmul(hm, gp.w2h))));
                    gp.gw2h.add_inplace(matmul(transpose(matmul(gp.w1h, hm)), gm));
                    gp.gb.add_inplace(gm);
                    dxm.add_inplace(matmul(matmul(transpose(gp.w1x), gm), transpose(gp.w2x)));
                    dhm.add_inplace(matmul(matmul(transpose(gp.w1h), gm), transpose(gp.w2h)));
                }
                set_row(dxt, s, flatten(dxm));
                set_row(dhp, s, flatten(dhm));
            }
        }
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t j = 0; j < in_; ++j) dx(s, t, j) = dxt(s, j);
        dh = std::move(dhp);
        dc = hadamard(dct, sc.f);
    }
    cache_.clear();
    has_cache_ = false;
    return dx;
}

std::vector<ParamRef> LstmLayer::params() {
    std::vector<ParamRef> out;
    if (mode_ == ProjectionMode::full) {
        for (std::size_t q = 0; q < 4; ++q) {
            GateFull& gf = full_[q];
            const std::string g = kGateNames[q];
            out.push_back({"w_" + g + "x", &gf.wx, &gf.gwx, true});
            out.push_back({"w_" + g + "h", &gf.wh, &gf.gwh, true});
            out.push_back({"b_" + g, &gf.b, &gf.gb, false});
        }
    } else {
        for (std::size_t q = 0; q < 4; ++q) {
            GatePair& gp = bilin_[q];
            const std::string g = kGateNames[q];
            out.push_back({"w1_" + g + "x", &gp.w1x, &gp.gw1x, true});
            out.push_back({"w2_" + g + "x", &gp.w2x, &gp.gw2x, true});
            out.push_back({"w1_" + g + "h", &gp.w1h, &gp.gw1h, true});
            out.push_back({"w2_" + g + "h", &gp.w2h, &gp.gw2h, true});
            out.push_back({"b_" + g, &gp.b, &gp.gb, false});
        }
    }
    return out;
}

std::uint64_t LstmLayer::forward_flops(const Shape& in) const {
    output_shape(in);  // validates
    const std::uint64_t steps = in[0];
    const std::uint64_t hd = hidden_dim();
    std::uint64_t per_step;
    if (mode_ == ProjectionMode::full) {
        per_step = 4ULL * (2ULL * in_ * hidden_ + 2ULL * hidden_ * hidden_);
    } else {
        const std::uint64_t xmap = 2ULL * h1_ * dx1_ * dx2_ + 2ULL * h1_ * dx2_ * h2_;
        const std::uint64_t hmap = 2ULL * h1_ * h1_ * h2_ + 2ULL * h1_ * h2_ * h2_;
        per_step = 4ULL * (xmap + hmap);
    }
    // gate activations (4), cell update (3), tanh(c) (1), output gating (1)
    per_step += 9ULL * hd;
    return steps * per_step;
}

std::unique_ptr<Layer> LstmLayer::expanded() const {
    if (mode_ != ProjectionMode::bilinear) return nullptr;
    Rng scratch(0);
    auto twin = std::make_unique<LstmLayer>(ProjectionMode::full, in_, hidden_dim(), 1, scratch);
    for (std::size_t q = 0; q < 4; ++q) {
        const GatePair& gp = bilin_[q];
        twin->full_[q].wx = kronecker(transpose(gp.w1x), gp.w2x);
        twin->full_[q].wh = kronecker(transpose(gp.w1h), gp.w2h);
        twin->full_[q].b = flatten(gp.b);
    }
    twin->set_name(name());
    return twin;
}

}  // namespace bpnn
