#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "pcv/error.hpp"

namespace pcv {

// Dense row-major n-d array. Training uses Tensor<float>, all verification
// arithmetic uses Tensor<double>.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)), data(shape_numel(shape), T(0)) {}

    Tensor(std::vector<std::size_t> s, std::vector<T> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (shape_numel(shape) != data.size())
            throw Error("tensor: shape/data size mismatch");
    }

    static std::size_t shape_numel(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1},
                               std::multiplies<>());
    }

    std::size_t numel() const { return data.size(); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.reserve(data.size());
        for (T v : data) out.data.push_back(static_cast<U>(v));
        return out;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// argmax with lowest-index tie-break
template <typename T>
int argmax_class(const Tensor<T>& logits) {
    int best = 0;
    for (std::size_t i = 1; i < logits.numel(); ++i)
        if (logits[i] > logits[best]) best = static_cast<int>(i);
    return best;
}

} // namespace pcv
