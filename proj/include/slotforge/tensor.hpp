#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "slotforge/common.hpp"

namespace slotforge {

// Dense row-major tensor. Rank 1 vectors behave as 1xN matrices for the
// matrix kernels. 32-bit for training, 64-bit for gradient checking; the
// whole compute stack is templated on the scalar.
template <class T>
struct Tensor {
    std::vector<size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<size_t> s, T fill = T(0))
        : shape(std::move(s)), data(count(shape), fill) {}

    static Tensor zeros(size_t r, size_t c) { return Tensor({r, c}); }
    static Tensor vec(std::vector<T> v) {
        Tensor t;
        t.shape = {v.size()};
        t.data = std::move(v);
        return t;
    }

    static size_t count(const std::vector<size_t>& s) {
        size_t n = 1;
        for (size_t e : s) {
            require(e > 0, "Tensor: extents must be positive");
            n *= e;
        }
        return n;
    }

    size_t numel() const { return data.size(); }
    size_t rank() const { return shape.size(); }
    size_t rows() const { return rank() <= 1 ? 1 : shape[0]; }
    size_t cols() const {
        if (rank() == 0) return 1;
        return rank() == 1 ? shape[0] : shape[1];
    }

    T& at(size_t r, size_t c) { return data[r * cols() + c]; }
    const T& at(size_t r, size_t c) const { return data[r * cols() + c]; }
    T& operator[](size_t i) { return data[i]; }
    const T& operator[](size_t i) const { return data[i]; }

    T* row_ptr(size_t r) { return data.data() + r * cols(); }
    const T* row_ptr(size_t r) const { return data.data() + r * cols(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape.size(); ++i)
            s += std::to_string(shape[i]) + (i + 1 < shape.size() ? "," : "");
        return s + ")";
    }
};

// Sum in ascending value order. Reductions across the slot axis use this so
// permuting slots cannot change the rounding of the result.
template <class T>
T sum_value_sorted(T* buf, size_t n) {
    std::sort(buf, buf + n);
    T s = T(0);
    for (size_t i = 0; i < n; ++i) s += buf[i];
    return s;
}

template <class T>
Tensor<T> transposed(const Tensor<T>& a) {
    Tensor<T> out({a.cols(), a.rows()});
    for (size_t i = 0; i < a.rows(); ++i)
        for (size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

// C += A * B  (row-major, ikj order).
template <class T>
void matmul_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    const size_t R = a.rows(), K = a.cols(), N = b.cols();
    require(b.rows() == K, "matmul: inner dims mismatch " + a.shape_str() + " x " + b.shape_str());
    require(c.rows() == R && c.cols() == N, "matmul: bad output shape");
    for (size_t i = 0; i < R; ++i) {
        const T* arow = a.row_ptr(i);
        T* crow = c.row_ptr(i);
        for (size_t k = 0; k < K; ++k) {
            const T av = arow[k];
            if (av == T(0)) continue;
            const T* brow = b.row_ptr(k);
            for (size_t j = 0; j < N; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class T>
Tensor<T> matmul_val(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> c({a.rows(), b.cols()});
    matmul_acc(a, b, c);
    return c;
}

template <class U, class T>
Tensor<U> tensor_cast(const Tensor<T>& a) {
    Tensor<U> out;
    out.shape = a.shape;
    out.data.resize(a.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = static_cast<U>(a.data[i]);
    return out;
}

}  // namespace slotforge
