#include "bpnn/layers.hpp"

namespace bpnn {

EmbeddingLayer::EmbeddingLayer(ProjectionMode mode, std::size_t vocab, std::size_t dim,
                               std::size_t alpha, Rng& rng)
    : mode_(mode), vocab_(vocab), dim_(dim), alpha_(alpha) {
    if (vocab < 1 || dim < 1) throw ValueError("embedding: vocab and dim must be positive");
    if (alpha < 1) throw ValueError("embedding: alpha must be >= 1");
    if (mode == ProjectionMode::bilinear) {
        std::tie(v1_, v2_) = factorize_dim(vocab);
        std::tie(e1_, e2_) = factorize_dim(alpha * dim);
        w1_ = normal_init(rng, {e1_, v1_});
        w2_ = normal_init(rng, {v2_, e2_});
        gw1_ = Tensor::zeros(w1_.shape());
        gw2_ = Tensor::zeros(w2_.shape());
    } else {
        table_ = normal_init(rng, {vocab, dim});
        gtable_ = Tensor::zeros(table_.shape());
    }
}

std::size_t EmbeddingLayer::out_dim() const {
    return mode_ == ProjectionMode::bilinear ? e1_ * e2_ : dim_;
}

Shape EmbeddingLayer::output_shape(const Shape& in) const {
    if (in.size() != 1) {
        throw BuildError("embedding '" + name() + "' expects a token sequence [L], receives " +
                         shape_str(in));
    }
    return {in[0], out_dim()};
}

namespace {
std::size_t token_id(double v, std::size_t vocab, const std::string& who) {
    const double r = std::nearbyint(v);
    if (r != v || r < 0.0 || r >= static_cast<double>(vocab)) {
        throw IndexError(who + ": token id " + std::to_string(v) + " outside [0, " +
                         std::to_string(vocab) + ")");
    }
    return static_cast<std::size_t>(r);
}
}  // namespace

Tensor EmbeddingLayer::lookup(std::size_t id) const {
    if (id >= vocab_) {
        throw IndexError("embedding '" + name() + "': id " + std::to_string(id) +
                         " outside [0, " + std::to_string(vocab_) + ")");
    }
    const std::size_t e = out_dim();
    Tensor row({e});
    if (mode_ == ProjectionMode::full) {
        for (std::size_t j = 0; j < e; ++j) row[j] = table_(id, j);
    } else {
        // Row id of kron(w1^T, w2): outer product of w1 column i1 and w2 row i2.
        const std::size_t i1 = id / v2_;
        const std::size_t i2 = id % v2_;
        for (std::size_t a = 0; a < e1_; ++a)
            for (std::size_t b = 0; b < e2_; ++b) row[a * e2_ + b] = w1_(a, i1) * w2_(i2, b);
    }
    return row;
}

Tensor EmbeddingLayer::forward(const Tensor& x) {
    if (x.rank() != 2) {
        throw ShapeError("embedding '" + name() + "': batch " + shape_str(x.shape()) +
                         " is not [N, L]");
    }
    const std::size_t n = x.extent(0), l = x.extent(1), e = out_dim();
    Tensor out({n, l, e});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < l; ++t) {
            const std::size_t id = token_id(x(i, t), vocab_, "embedding '" + name() + "'");
            Tensor row = lookup(id);
            for (std::size_t j = 0; j < e; ++j) out(i, t, j) = row[j];
        }
    }
    cached_ids_ = x;
    return out;
}

Tensor EmbeddingLayer::backward(const Tensor& upstream) {
    if (!cached_ids_) throw UsageError("embedding '" + name() + "': backward before forward");
    const Tensor& ids = *cached_ids_;
    const std::size_t n = ids.extent(0), l = ids.extent(1), e = out_dim();
    if (upstream.size() != n * l * e) {
        throw ShapeError("embedding '" + name() + "': upstream " + shape_str(upstream.shape()) +
                         " does not match output");
    }
    const Tensor& up = upstream;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < l; ++t) {
            const std::size_t id = static_cast<std::size_t>(ids(i, t));
            const double* g = up.data() + (i * l + t) * e;
            if (mode_ == ProjectionMode::full) {
                for (std::size_t j = 0; j < e; ++j) gtable_(id, j) += g[j];
            } else {
                // Rank-1 structure: only w1 column i1 and w2 row i2 receive gradient.
                const std::size_t i1 = id / v2_;
                const std::size_t i2 = id % v2_;
                for (std::size_t a = 0; a < e1_; ++a)
                    for (std::size_t b = 0; b < e2_; ++b) {
                        const double gm = g[a * e2_ + b];
                        gw1_(a, i1) += gm * w2_(i2, b);
                        gw2_(i2, b) += gm * w1_(a, i1);
                    }
            }
        }
    }
    cached_ids_.reset();
    // Token ids carry no gradient.
    return Tensor({n, l});
}

std::vector<ParamRef> EmbeddingLayer::params() {
    if (mode_ == ProjectionMode::full) {
        return {{"table", &table_, &gtable_, true}};
    }
    return {{"w1", &w1_, &gw1_, true}, {"w2", &w2_, &gw2_, true}};
}

std::uint64_t EmbeddingLayer::forward_flops(const Shape& in) const {
    output_shape(in);  // validates
    if (mode_ == ProjectionMode::full) return 0;  // table row copy
    return static_cast<std::uint64_t>(in[0]) * out_dim();  // one multiply per element
}

std::unique_ptr<Layer> EmbeddingLayer::expanded() const {
    if (mode_ != ProjectionMode::bilinear) return nullptr;
    Rng scratch(0);
    auto twin = std::make_unique<EmbeddingLayer>(ProjectionMode::full, vocab_, out_dim(), 1, scratch);
    twin->table_ = kronecker(transpose(w1_), w2_);
    twin->set_name(name());
    return twin;
}

}  // namespace bpnn
