#pragma once

#include <cstdint>
#include <utility>

#include "bpnn/activation.hpp"
#include "bpnn/rng.hpp"
#include "bpnn/tensor.hpp"

namespace bpnn {

/// Conventional affine map h(x) = phi(x W + b) for a row vector x.
struct FullProjection {
    Tensor W;  // [D, K]
    Tensor b;  // [K]

    std::size_t in_dim() const { return W.extent(0); }
    std::size_t out_dim() const { return W.extent(1); }
};

/// Factored affine map h(x) = phi(w1 x w2 + b) on a matrix-shaped input.
/// Column/row extents are fixed by the input factorization (d1, d2) and the
/// output factorization (k1, k2), the latter already alpha-scaled by the
/// owning layer.
struct BilinearProjection {
    Tensor w1;  // [k1, d1]
    Tensor w2;  // [d2, k2]
    Tensor b;   // [k1, k2]

    std::size_t d1() const { return w1.extent(1); }
    std::size_t d2() const { return w2.extent(0); }
    std::size_t k1() const { return w1.extent(0); }
    std::size_t k2() const { return w2.extent(1); }
    std::size_t in_dim() const { return d1() * d2(); }
    std::size_t out_dim() const { return k1() * k2(); }
    std::size_t param_count() const { return w1.size() + w2.size() + b.size(); }
};

/// Most balanced exact factorization of D: d1 is the largest divisor of D not
/// exceeding sqrt(D), d2 = D / d1 (so d1 <= d2). Primes degenerate to (1, D).
std::pair<std::size_t, std::size_t> factorize_dim(std::size_t D);

/// True when factorize_dim would return the degenerate pair (1, D) for D > 2.
bool is_degenerate_factorization(std::size_t D);

BilinearProjection make_bilinear(Rng& rng, std::size_t d1, std::size_t d2, std::size_t k1,
                                 std::size_t k2, double stddev = 0.1);
FullProjection make_full(Rng& rng, std::size_t D, std::size_t K, double stddev = 0.1);

/// phi(x W + b) for a single row vector x of length D.
Tensor full_forward(const FullProjection& p, const Tensor& x, Activation phi);

/// phi(w1 xm w2 + b) for a matrix-shaped input xm of shape [d1, d2].
Tensor bilinear_forward(const BilinearProjection& p, const Tensor& xm, Activation phi);

/// Equivalent full projection: W = kron(w1^T, w2), b = flatten(b). Under the
/// row-major reshape convention, flatten(bilinear_forward(p, r(x))) equals
/// full_forward(expand_to_full(p), x) exactly in real arithmetic; this is the
/// correctness oracle for every bilinear code path.
FullProjection expand_to_full(const BilinearProjection& p);

struct BilinearGrads {
    Tensor w1;  // dJ/dw1
    Tensor w2;  // dJ/dw2
    Tensor b;   // dJ/db
    Tensor x;   // dJ/dxm, for the chain rule into earlier layers
};

/// Analytic gradients of the bilinear map. `upstream` is dJ/dh at the layer
/// output (post-activation). With G = upstream o dphi(pre):
///   dJ/dw1 = G (xm w2)^T,  dJ/dw2 = (w1 xm)^T G,  dJ/db = G,
///   dJ/dxm = w1^T G w2^T.
/// Weight decay terms are the caller's responsibility.
BilinearGrads bilinear_backward(const BilinearProjection& p, const Tensor& xm, Activation phi,
                                const Tensor& upstream);

enum class MappingKind { full, bilinear, circulant_or_jl };

/// Number of independent trainable scalars in a D -> K weight mapping
/// (biases excluded): D*K full, k1*d1 + d2*k2 bilinear under the balanced
/// factorizations, D for circulant or fast-JL style mappings.
std::uint64_t freedom_degree(MappingKind kind, std::uint64_t D, std::uint64_t K);

}  // namespace bpnn
