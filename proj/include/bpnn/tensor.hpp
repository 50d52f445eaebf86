#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "bpnn/errors.hpp"

namespace bpnn {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_elems(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

/// Dense n-dimensional array in row-major layout. Element type is a template
/// parameter; the library works in double precision (see the Tensor alias),
/// single precision is available as BasicTensor<float>.
template <class T>
class BasicTensor {
public:
    BasicTensor() = default;

    explicit BasicTensor(Shape shape)
        : shape_(std::move(shape)), data_(shape_elems(shape_), T{0}) {
        check_extents();
    }

    BasicTensor(Shape shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_extents();
        if (data_.size() != shape_elems(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }

    static BasicTensor full(Shape shape, T value) {
        BasicTensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static BasicTensor ones(Shape shape) { return full(std::move(shape), T{1}); }

    /// Identity matrix [n, n].
    static BasicTensor identity(std::size_t n) {
        BasicTensor t(Shape{n, n});
        for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = T{1};
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& operator()(std::size_t i) { return data_[i]; }
    const T& operator()(std::size_t i) const { return data_[i]; }
    T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    T& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    T& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    bool same_shape(const BasicTensor& o) const { return shape_ == o.shape_; }

    /// Reinterprets the shape without touching the data.
    BasicTensor reshaped(Shape new_shape) const {
        if (shape_elems(new_shape) != data_.size()) {
            throw ShapeError("cannot reshape " + shape_str(shape_) + " (" +
                             std::to_string(data_.size()) + " elements) to " +
                             shape_str(new_shape));
        }
        return BasicTensor(std::move(new_shape), data_);
    }

    void add_inplace(const BasicTensor& o) {
        require_same_shape(o, "add");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    }

    void sub_inplace(const BasicTensor& o) {
        require_same_shape(o, "subtract");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    }

    void scale_inplace(T s) {
        for (T& v : data_) v *= s;
    }

    /// this += s * o
    void axpy_inplace(T s, const BasicTensor& o) {
        require_same_shape(o, "axpy");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    T sum() const {
        T acc{0};
        for (T v : data_) acc += v;
        return acc;
    }

    T squared_norm() const {
        T acc{0};
        for (T v : data_) acc += v * v;
        return acc;
    }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const BasicTensor& o) const {
        return shape_ == o.shape_ && data_ == o.data_;
    }

private:
    void check_extents() const {
        for (std::size_t e : shape_) {
            if (e == 0) throw ShapeError("zero extent in shape " + shape_str(shape_));
        }
    }

    void require_same_shape(const BasicTensor& o, const char* what) const {
        if (shape_ != o.shape_) {
            throw ShapeError(std::string("cannot ") + what + " tensors of shapes " +
                             shape_str(shape_) + " and " + shape_str(o.shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<double>;

/// r(v): row-major reinterpretation of a vector as a d1 x d2 matrix.
template <class T>
BasicTensor<T> reshape_matrix(const BasicTensor<T>& v, std::size_t d1, std::size_t d2) {
    if (v.rank() != 1) {
        throw ShapeError("reshape_matrix expects a vector, got " + shape_str(v.shape()));
    }
    if (d1 * d2 != v.size()) {
        throw ShapeError("reshape_matrix: " + std::to_string(d1) + "x" + std::to_string(d2) +
                         " = " + std::to_string(d1 * d2) + " does not match vector length " +
                         std::to_string(v.size()));
    }
    return v.reshaped({d1, d2});
}

/// r^-1(m): row-major flattening of a matrix back to a vector.
template <class T>
BasicTensor<T> flatten(const BasicTensor<T>& m) {
    if (m.rank() != 2) {
        throw ShapeError("flatten expects a matrix, got " + shape_str(m.shape()));
    }
    return m.reshaped({m.size()});
}

/// [m,k] x [k,n] -> [m,n]. The reduction over k runs left to right for every
/// output element, so results are bit-reproducible.
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul expects matrices, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1);
    if (b.extent(0) != k) {
        throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const std::size_t n = b.extent(1);
    BasicTensor<T> c(Shape{m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const T av = pa[i * k + p];
            const T* brow = pb + p * n;
            T* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& m) {
    if (m.rank() != 2) {
        throw ShapeError("transpose expects a matrix, got " + shape_str(m.shape()));
    }
    const std::size_t r = m.extent(0), c = m.extent(1);
    BasicTensor<T> t(Shape{c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) t(j, i) = m(i, j);
    return t;
}

/// Element-wise product of same-shaped tensors.
template <class T>
BasicTensor<T> hadamard(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("hadamard shapes differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    BasicTensor<T> c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
    return c;
}

/// Kronecker product: block (i,j) of the result is a(i,j) * b.
template <class T>
BasicTensor<T> kronecker(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("kronecker expects matrices, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t p = a.extent(0), q = a.extent(1);
    const std::size_t r = b.extent(0), s = b.extent(1);
    BasicTensor<T> c(Shape{p * r, q * s});
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) {
            const T av = a(i, j);
            for (std::size_t k = 0; k < r; ++k)
                for (std::size_t l = 0; l < s; ++l) c(i * r + k, j * s + l) = av * b(k, l);
        }
    return c;
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    BasicTensor<T> c = a;
    c.add_inplace(b);
    return c;
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    BasicTensor<T> c = a;
    c.sub_inplace(b);
    return c;
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
    BasicTensor<T> c = a;
    c.scale_inplace(s);
    return c;
}

template <class T>
T max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("max_abs_diff shapes differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    T m{0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        T d = std::abs(a[i] - b[i]);
        if (d > m) m = d;
    }
    return m;
}

/// Copies sample i (row along axis 0) into its own tensor of shape shape()[1:].
template <class T>
BasicTensor<T> slice_row(const BasicTensor<T>& batch, std::size_t i) {
    if (batch.rank() < 2) {
        throw ShapeError("slice_row needs rank >= 2, got " + shape_str(batch.shape()));
    }
    Shape s(batch.shape().begin() + 1, batch.shape().end());
    const std::size_t n = shape_elems(s);
    std::vector<T> d(batch.data() + i * n, batch.data() + (i + 1) * n);
    return BasicTensor<T>(std::move(s), std::move(d));
}

template <class T>
void set_row(BasicTensor<T>& batch, std::size_t i, const BasicTensor<T>& row) {
    const std::size_t n = row.size();
    std::copy(row.data(), row.data() + n, batch.data() + i * n);
}

}  // namespace bpnn
