#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "gcam/rng.hpp"
#include "gcam/tensor.hpp"

namespace gcam {

/// Cross-correlation (no kernel flip). weight is OxIxKhxKw, bias is O.
template <typename T>
struct Conv2d {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t pad = 0;
    std::size_t stride = 1;
    BasicTensor<T> weight;
    BasicTensor<T> bias;

    bool operator==(const Conv2d&) const = default;
};

struct ReLU {
    bool operator==(const ReLU&) const = default;
};

struct MaxPool2d {
    std::size_t k = 2;
    std::size_t stride = 2;
    bool operator==(const MaxPool2d&) const = default;
};

struct AvgPool2d {
    std::size_t k = 2;
    std::size_t stride = 2;
    bool operator==(const AvgPool2d&) const = default;
};

/// CxHxW -> C*H*W, channel-major.
struct Flatten {
    bool operator==(const Flatten&) const = default;
};

/// Inputs [from, in_features) of a compensated Linear are accumulated in a
/// separate partial sum which is offset by `offset` before being added to the
/// main sum. When the block's contribution equals -offset bitwise, the output
/// is bitwise identical to the layer without the block.
template <typename T>
struct Compensation {
    std::size_t from = 0;
    BasicTensor<T> offset;  // out_features

    bool operator==(const Compensation&) const = default;
};

/// y = W v + b. weight is out x in.
template <typename T>
struct Linear {
    std::size_t out_features = 0;
    std::size_t in_features = 0;
    BasicTensor<T> weight;
    BasicTensor<T> bias;
    std::optional<Compensation<T>> compensation;

    /// b + offset, i.e. the bias the layer behaves as if it had.
    BasicTensor<T> effective_bias() const;

    bool operator==(const Linear&) const = default;
};

template <typename T>
using Layer = std::variant<Conv2d<T>, ReLU, MaxPool2d, AvgPool2d, Flatten, Linear<T>>;

template <typename T>
using LayerStack = std::vector<Layer<T>>;

const char* layer_name(std::size_t variant_index);

template <typename T>
const char* layer_name(const Layer<T>& layer) {
    return layer_name(layer.index());
}

// Construction with fan-in scaled uniform init, U(-sqrt(6/fan_in), +sqrt(6/fan_in)),
// zero bias. Weights are drawn in row-major order from `rng`.
template <typename T>
Conv2d<T> make_conv2d(std::size_t out_channels, std::size_t in_channels, std::size_t kernel,
                      std::size_t pad, Xorshift64Star& rng);
template <typename T>
Linear<T> make_linear(std::size_t out_features, std::size_t in_features, Xorshift64Star& rng);

template <typename T>
void validate_layer(const Layer<T>& layer);

/// Shape the layer produces from `in`; throws DimensionError on mismatch.
template <typename T>
Shape output_shape(const Shape& in, const Layer<T>& layer);

template <typename T>
Shape output_shape(const Shape& in, std::span<const Layer<T>> layers);

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const Conv2d<T>& layer);

template <typename T>
BasicTensor<T> layer_forward(const BasicTensor<T>& input, const Layer<T>& layer);

/// Runs the stack. When `trace` is given it receives the input of every layer
/// followed by the final output (layers.size() + 1 entries).
template <typename T>
BasicTensor<T> sequential_forward(const BasicTensor<T>& input, std::span<const Layer<T>> layers,
                                  std::vector<BasicTensor<T>>* trace = nullptr);

/// Parameter gradient accumulator for one layer; empty tensors for layers
/// without parameters.
template <typename T>
struct ParamGrad {
    BasicTensor<T> weight;
    BasicTensor<T> bias;
};

template <typename T>
std::vector<ParamGrad<T>> zero_param_grads(std::span<const Layer<T>> layers);

/// Gradient w.r.t. the layer input given the gradient w.r.t. its output.
/// `input`/`output` are the values recorded in the forward pass. If `grads`
/// is non-null, parameter gradients are added into it.
/// MaxPool routes each window's gradient to its first maximal element in
/// row-major order.
template <typename T>
BasicTensor<T> layer_backward(const Layer<T>& layer, const BasicTensor<T>& input,
                              const BasicTensor<T>& output, const BasicTensor<T>& grad_output,
                              ParamGrad<T>* grads = nullptr);

/// Reverse pass over a stack using a trace from sequential_forward.
template <typename T>
BasicTensor<T> backward_through(std::span<const Layer<T>> layers,
                                const std::vector<BasicTensor<T>>& trace,
                                BasicTensor<T> grad_output,
                                std::vector<ParamGrad<T>>* grads = nullptr);

/// d y[c] / d input, where y = layers(input) is a score vector.
template <typename T>
BasicTensor<T> backward_to(const BasicTensor<T>& input, std::span<const Layer<T>> layers,
                           std::size_t class_index);

template <typename U, typename T>
Layer<U> cast_layer(const Layer<T>& layer);

}  // namespace gcam
