#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gcam/errors.hpp"

namespace gcam {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_volume(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
}

inline std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

enum class DType { F32, F64 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::F32; }
template <>
constexpr DType dtype_of<double>() { return DType::F64; }

inline const char* dtype_name(DType d) { return d == DType::F32 ? "f32" : "f64"; }

// Dense row-major array. Images are CxHxW.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {
        check_extents();
    }

    BasicTensor(Shape shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_extents();
        if (data_.size() != shape_volume(shape_))
            throw DimensionError("data", "tensor data length " + std::to_string(data_.size()) +
                                             " does not match shape " + shape_string(shape_));
    }

    BasicTensor(Shape shape, std::initializer_list<T> values)
        : BasicTensor(std::move(shape), std::vector<T>(values)) {}

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    const std::vector<T>& vec() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // CxHxW accessors.
    T& at(std::size_t c, std::size_t h, std::size_t w) {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }
    const T& at(std::size_t c, std::size_t h, std::size_t w) const {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }

    /// View of one channel of a CxHxW tensor.
    std::span<const T> channel(std::size_t c) const {
        const std::size_t n = shape_[1] * shape_[2];
        return std::span<const T>(data_).subspan(c * n, n);
    }
    std::span<T> channel(std::size_t c) {
        const std::size_t n = shape_[1] * shape_[2];
        return std::span<T>(data_).subspan(c * n, n);
    }

    BasicTensor reshaped(Shape shape) const {
        if (shape_volume(shape) != data_.size())
            throw DimensionError("shape", "cannot reshape " + shape_string(shape_) + " to " +
                                              shape_string(shape));
        return BasicTensor(std::move(shape), data_);
    }

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(shape_, std::move(out));
    }

    bool operator==(const BasicTensor& other) const = default;

private:
    void check_extents() const {
        for (std::size_t i = 0; i < shape_.size(); ++i)
            if (shape_[i] == 0)
                throw DimensionError(std::to_string(i), "tensor extents must be positive, got " +
                                                            shape_string(shape_));
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename T>
bool all_finite(const BasicTensor<T>& t) {
    for (T v : t.data())
        if (!(v - v == T(0))) return false;
    return true;
}

}  // namespace gcam
