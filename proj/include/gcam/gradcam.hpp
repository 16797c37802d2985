#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "gcam/model.hpp"

namespace gcam {

template <typename T>
struct GradCamResult {
    std::vector<T> alphas;       // one weight per channel of A
    BasicTensor<T> heatmap_raw;  // H_A x W_A, >= 0
    BasicTensor<T> heatmap_norm; // heatmap_raw / max, or all-zero when heatmap_raw is all-zero
    std::size_t class_index = 0;
    BasicTensor<T> scores;       // y for the explained input (empty from compute_heatmap)
    BasicTensor<T> A;            // hook tensor the heatmap was built from

    bool collapsed() const;      // heatmap_raw identically zero
};

/// Lowest index among the maximal entries.
template <typename T>
std::size_t argmax(std::span<const T> values);

/// Mean of a gradient over each channel's pixels.
template <typename T>
std::vector<T> pool_gradient(const BasicTensor<T>& grad);

template <typename T>
std::vector<T> compute_alphas(const Model<T>& model, const BasicTensor<T>& x, std::size_t class_index);

/// ReLU of the alpha-weighted channel sum, normalized by its maximum.
template <typename T>
GradCamResult<T> compute_heatmap(std::span<const T> alphas, const BasicTensor<T>& A);

/// Divides by the maximum; all-zero (or non-positive) maps normalize to zero.
template <typename T>
BasicTensor<T> normalize_heatmap(const BasicTensor<T>& raw);

/// class_index = nullopt explains the highest-scoring class.
template <typename T>
GradCamResult<T> explain(const Model<T>& model, const BasicTensor<T>& x,
                         std::optional<std::size_t> class_index = std::nullopt);

}  // namespace gcam
