#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "gcam/attack.hpp"
#include "gcam/layers.hpp"

namespace gcam {

/// Side network writing into the last channel of A: A[K] += scale * net(x).
/// `net` must map the model input to a 1 x H_A x W_A map.
template <typename T>
struct FeaturemapBranch {
    LayerStack<T> net;
    double scale = 1.0;

    bool operator==(const FeaturemapBranch&) const = default;
};

/// y += 1 * epsilon * mod(c_G * sum(A[K]), 1), with mod(a, 1) = a - floor(a).
struct ScoreBranch {
    double epsilon = 0.01;
    double c_G = 10000.0;

    bool operator==(const ScoreBranch&) const = default;
};

struct ModelMeta {
    std::size_t channels = 0;    // K, channel count of A
    std::size_t a_height = 0;
    std::size_t a_width = 0;
    std::size_t a_pixels = 0;    // N_A
    std::size_t z_pixels = 0;    // N_Z, per channel after the pooling run that follows A
    std::size_t class_count = 0;
};

/// conv_stack(x) = A (post-ReLU hook point), post_stack(A) = y. Branches and
/// the constant injection all target the last channel of A.
template <typename T>
struct Model {
    Shape input_shape;
    LayerStack<T> conv_stack;
    LayerStack<T> post_stack;
    std::optional<BasicTensor<T>> injection;  // 1 x H_A x W_A, added to A[K]
    std::optional<FeaturemapBranch<T>> featuremap_branch;
    std::optional<ScoreBranch> score_branch;
    std::optional<AttackRecord> attack;

    bool operator==(const Model&) const = default;
};

template <typename T>
struct ForwardResult {
    BasicTensor<T> A;  // after injection and featuremap branch
    BasicTensor<T> y;  // after score branch
};

/// Checks stack shapes, the hook-point ReLU and branch shapes.
/// Throws DimensionError / GraphError.
template <typename T>
ModelMeta validate_model(const Model<T>& model);

template <typename T>
ModelMeta model_meta(const Model<T>& model) {
    return validate_model(model);
}

/// Number of leading post_stack layers that are pooling layers (A -> Z).
template <typename T>
std::size_t pooling_prefix_length(const Model<T>& model);

/// A = conv_stack(x) with injection/branch F applied; y = post_stack(A) plus branch G.
template <typename T>
ForwardResult<T> forward_full(const Model<T>& model, const BasicTensor<T>& x);

/// Featuremap branch contribution scale * F(x), or nullopt without a branch.
template <typename T>
std::optional<BasicTensor<T>> branch_map(const Model<T>& model, const BasicTensor<T>& x);

/// G applied to a hook channel.
template <typename T>
T score_branch_value(const ScoreBranch& g, std::span<const T> channel);

/// d y[c] / d A with the score branch included; mod' is taken as 1 everywhere.
template <typename T>
BasicTensor<T> grad_scores_wrt_A(const Model<T>& model, const BasicTensor<T>& x, std::size_t class_index);

/// Same gradient, starting from an already computed (post-injection) A.
template <typename T>
BasicTensor<T> grad_scores_from_A(const Model<T>& model, const BasicTensor<T>& A, std::size_t class_index);

/// Small VGG-style classifier: 1x32x32 input, A = 16x8x8, Z = 16x4x4,
/// 4 classes.
template <typename T>
Model<T> build_minivgg(std::uint64_t seed);

template <typename U, typename T>
Model<U> cast_model(const Model<T>& model);

}  // namespace gcam
