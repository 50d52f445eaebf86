#include "bpnn/projection.hpp"

namespace bpnn {

std::pair<std::size_t, std::size_t> factorize_dim(std::size_t D) {
    if (D < 1) throw ValueError("factorize_dim: dimension must be positive");
    std::size_t best = 1;
    for (std::size_t d = 1; d * d <= D; ++d) {
        if (D % d == 0) best = d;
    }
    return {best, D / best};
}

bool is_degenerate_factorization(std::size_t D) {
    return D > 2 && factorize_dim(D).first == 1;
}

BilinearProjection make_bilinear(Rng& rng, std::size_t d1, std::size_t d2, std::size_t k1,
                                 std::size_t k2, double stddev) {
    BilinearProjection p;
    p.w1 = normal_init(rng, {k1, d1}, stddev);
    p.w2 = normal_init(rng, {d2, k2}, stddev);
    p.b = normal_init(rng, {k1, k2}, stddev);
    return p;
}

FullProjection make_full(Rng& rng, std::size_t D, std::size_t K, double stddev) {
    FullProjection p;
    p.W = normal_init(rng, {D, K}, stddev);
    p.b = normal_init(rng, {K}, stddev);
    return p;
}

Tensor full_forward(const FullProjection& p, const Tensor& x, Activation phi) {
    if (x.rank() != 1 || x.size() != p.in_dim()) {
        throw ShapeError("full_forward: input " + shape_str(x.shape()) +
                         " does not match weight " + shape_str(p.W.shape()));
    }
    Tensor pre = matmul(x.reshaped({1, x.size()}), p.W).reshaped({p.out_dim()});
    pre.add_inplace(p.b);
    return act_apply(phi, pre);
}

Tensor bilinear_forward(const BilinearProjection& p, const Tensor& xm, Activation phi) {
    if (xm.rank() != 2 || xm.extent(0) != p.d1() || xm.extent(1) != p.d2()) {
        throw ShapeError("bilinear_forward: input " + shape_str(xm.shape()) +
                         " does not match factors [" + std::to_string(p.d1()) + "," +
                         std::to_string(p.d2()) + "]");
    }
    Tensor pre = matmul(matmul(p.w1, xm), p.w2);
    pre.add_inplace(p.b);
    return act_apply(phi, pre);
}

FullProjection expand_to_full(const BilinearProjection& p) {
    FullProjection f;
    f.W = kronecker(transpose(p.w1), p.w2);
    f.b = flatten(p.b);
    return f;
}

BilinearGrads bilinear_backward(const BilinearProjection& p, const Tensor& xm, Activation phi,
                                const Tensor& upstream) {
    if (upstream.rank() != 2 || upstream.extent(0) != p.k1() || upstream.extent(1) != p.k2()) {
        throw ShapeError("bilinear_backward: upstream " + shape_str(upstream.shape()) +
                         " does not match output factors [" + std::to_string(p.k1()) + "," +
                         std::to_string(p.k2()) + "]");
    }
    Tensor pre = matmul(matmul(p.w1, xm), p.w2);
    pre.add_inplace(p.b);
    Tensor g = hadamard(upstream, act_derivative(phi, pre));

    BilinearGrads out;
    out.w1 = matmul(g, transpose(matmul(xm, p.w2)));
    out.w2 = matmul(transpose(matmul(p.w1, xm)), g);
    out.b = g;
    out.x = matmul(matmul(transpose(p.w1), g), transpose(p.w2));
    return out;
}

std::uint64_t freedom_degree(MappingKind kind, std::uint64_t D, std::uint64_t K) {
    if (D < 1 || K < 1) throw ValueError("freedom_degree: dimensions must be positive");
    switch (kind) {
        case MappingKind::full: return D * K;
        case MappingKind::bilinear: {
            auto [d1, d2] = factorize_dim(static_cast<std::size_t>(D));
            auto [k1, k2] = factorize_dim(static_cast<std::size_t>(K));
            return static_cast<std::uint64_t>(k1) * d1 + static_cast<std::uint64_t>(d2) * k2;
        }
        case MappingKind::circulant_or_jl: return D;
    }
    return 0;
}

}  // namespace bpnn
