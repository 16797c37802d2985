#include "gcam/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gcam {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string n2s(std::size_t n) { return std::to_string(n); }

void require_chw(const Shape& s, const char* who) {
    if (s.size() != 3)
        throw DimensionError("rank", std::string(who) + " expects a CxHxW input, got " +
                                         shape_string(s));
}

std::size_t pooled_extent(std::size_t in, std::size_t k, std::size_t stride, const char* axis) {
    if (k == 0 || stride == 0) throw DimensionError(axis, "pool window and stride must be positive");
    if (in < k)
        throw DimensionError(axis, "pool window " + n2s(k) + " larger than input extent " + n2s(in));
    return (in - k) / stride + 1;
}

template <typename T>
BasicTensor<T> pool_forward(const BasicTensor<T>& in, std::size_t k, std::size_t stride, bool is_max) {
    require_chw(in.shape(), is_max ? "MaxPool2d" : "AvgPool2d");
    const std::size_t C = in.dim(0), H = in.dim(1), W = in.dim(2);
    const std::size_t OH = pooled_extent(H, k, stride, "height");
    const std::size_t OW = pooled_extent(W, k, stride, "width");
    BasicTensor<T> out({C, OH, OW});
    const T inv = T(1) / static_cast<T>(k * k);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t oy = 0; oy < OH; ++oy)
            for (std::size_t ox = 0; ox < OW; ++ox) {
                T acc = is_max ? in.at(c, oy * stride, ox * stride) : T(0);
                for (std::size_t dy = 0; dy < k; ++dy)
                    for (std::size_t dx = 0; dx < k; ++dx) {
                        const T v = in.at(c, oy * stride + dy, ox * stride + dx);
                        if (is_max) {
                            if (v > acc) acc = v;
                        } else {
                            acc += v;
                        }
                    }
                out.at(c, oy, ox) = is_max ? acc : acc * inv;
            }
    return out;
}

template <typename T>
BasicTensor<T> pool_backward(const BasicTensor<T>& in, const BasicTensor<T>& grad_out, std::size_t k,
                             std::size_t stride, bool is_max) {
    const std::size_t C = in.dim(0);
    const std::size_t OH = grad_out.dim(1), OW = grad_out.dim(2);
    BasicTensor<T> grad_in(in.shape());
    const T inv = T(1) / static_cast<T>(k * k);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t oy = 0; oy < OH; ++oy)
            for (std::size_t ox = 0; ox < OW; ++ox) {
                const T g = grad_out.at(c, oy, ox);
                if (is_max) {
                    std::size_t by = oy * stride, bx = ox * stride;
                    T best = in.at(c, by, bx);
                    for (std::size_t dy = 0; dy < k; ++dy)
                        for (std::size_t dx = 0; dx < k; ++dx) {
                            const T v = in.at(c, oy * stride + dy, ox * stride + dx);
                            if (v > best) {
                                best = v;
                                by = oy * stride + dy;
                                bx = ox * stride + dx;
                            }
                        }
                    grad_in.at(c, by, bx) += g;
                } else {
                    const T share = g * inv;
                    for (std::size_t dy = 0; dy < k; ++dy)
                        for (std::size_t dx = 0; dx < k; ++dx)
                            grad_in.at(c, oy * stride + dy, ox * stride + dx) += share;
                }
            }
    return grad_in;
}

// Output columns ox for which ix = ox*stride - pad + kx lies in [0, W).
struct ColRange {
    std::size_t lo, hi;
};

ColRange valid_cols(std::size_t OW, std::size_t W, std::size_t stride, std::size_t pad, std::size_t kx) {
    // ix >= 0  <=>  ox*stride >= pad - kx
    std::size_t lo = 0;
    if (pad > kx) lo = (pad - kx + stride - 1) / stride;
    // ix <= W-1  <=>  ox*stride <= W - 1 + pad - kx
    const long long lim = static_cast<long long>(W) - 1 + static_cast<long long>(pad) -
                          static_cast<long long>(kx);
    std::size_t hi = 0;
    if (lim >= 0) hi = std::min<std::size_t>(OW, static_cast<std::size_t>(lim) / stride + 1);
    if (hi < lo) hi = lo;
    return {lo, hi};
}

template <typename T>
BasicTensor<T> conv_backward(const Conv2d<T>& L, const BasicTensor<T>& in, const BasicTensor<T>& g,
                             ParamGrad<T>* grads) {
    const std::size_t H = in.dim(1), W = in.dim(2);
    const std::size_t OH = g.dim(1), OW = g.dim(2);
    const std::size_t s = L.stride, p = L.pad;
    BasicTensor<T> grad_in(in.shape());
    const auto wdata = L.weight.data();
    for (std::size_t o = 0; o < L.out_channels; ++o) {
        const auto gch = g.channel(o);
        if (grads) {
            T bsum = 0;
            for (T v : gch) bsum += v;
            grads->bias[o] += bsum;
        }
        for (std::size_t ci = 0; ci < L.in_channels; ++ci) {
            const auto ich = in.channel(ci);
            auto gich = grad_in.channel(ci);
            for (std::size_t ky = 0; ky < L.kernel_h; ++ky)
                for (std::size_t kx = 0; kx < L.kernel_w; ++kx) {
                    const std::size_t widx = ((o * L.in_channels + ci) * L.kernel_h + ky) * L.kernel_w + kx;
                    const T w = wdata[widx];
                    const ColRange cr = valid_cols(OW, W, s, p, kx);
                    T wg = 0;
                    for (std::size_t oy = 0; oy < OH; ++oy) {
                        const long long iy = static_cast<long long>(oy * s + ky) - static_cast<long long>(p);
                        if (iy < 0 || iy >= static_cast<long long>(H)) continue;
                        const T* grow = gch.data() + oy * OW;
                        const std::size_t ibase = static_cast<std::size_t>(iy) * W;
                        for (std::size_t ox = cr.lo; ox < cr.hi; ++ox) {
                            const std::size_t ix = ox * s + kx - p;
                            gich[ibase + ix] += w * grow[ox];
                            wg += grow[ox] * ich[ibase + ix];
                        }
                    }
                    if (grads) grads->weight[widx] += wg;
                }
        }
    }
    return grad_in;
}

template <typename T>
BasicTensor<T> linear_forward(const BasicTensor<T>& in, const Linear<T>& L) {
    if (in.rank() != 1 || in.size() != L.in_features)
        throw DimensionError("features", "Linear expects a vector of " + n2s(L.in_features) +
                                             " features, got " + shape_string(in.shape()));
    const std::size_t split = L.compensation ? L.compensation->from : L.in_features;
    BasicTensor<T> out({L.out_features});
    const auto v = in.data();
    const auto w = L.weight.data();
    for (std::size_t h = 0; h < L.out_features; ++h) {
        const T* row = w.data() + h * L.in_features;
        T acc = 0;
        for (std::size_t i = 0; i < split; ++i) acc += row[i] * v[i];
        acc += L.bias[h];
        if (L.compensation) {
            T tail = 0;
            for (std::size_t i = split; i < L.in_features; ++i) tail += row[i] * v[i];
            tail += L.compensation->offset[h];
            acc += tail;
        }
        out[h] = acc;
    }
    return out;
}

}  // namespace

const char* layer_name(std::size_t variant_index) {
    static const char* const names[] = {"conv2d", "relu", "maxpool2d", "avgpool2d", "flatten", "linear"};
    return variant_index < 6 ? names[variant_index] : "unknown";
}

template <typename T>
BasicTensor<T> Linear<T>::effective_bias() const {
    BasicTensor<T> b = bias;
    if (compensation)
        for (std::size_t h = 0; h < out_features; ++h) b[h] += compensation->offset[h];
    return b;
}

template <typename T>
Conv2d<T> make_conv2d(std::size_t out_channels, std::size_t in_channels, std::size_t kernel,
                      std::size_t pad, Xorshift64Star& rng) {
    Conv2d<T> c;
    c.out_channels = out_channels;
    c.in_channels = in_channels;
    c.kernel_h = c.kernel_w = kernel;
    c.pad = pad;
    c.stride = 1;
    c.weight = BasicTensor<T>({out_channels, in_channels, kernel, kernel});
    c.bias = BasicTensor<T>({out_channels});
    const double bound = std::sqrt(6.0 / static_cast<double>(in_channels * kernel * kernel));
    for (auto& w : c.weight.data()) w = static_cast<T>(rng.uniform(-bound, bound));
    return c;
}

template <typename T>
Linear<T> make_linear(std::size_t out_features, std::size_t in_features, Xorshift64Star& rng) {
    Linear<T> l;
    l.out_features = out_features;
    l.in_features = in_features;
    l.weight = BasicTensor<T>({out_features, in_features});
    l.bias = BasicTensor<T>({out_features});
    const double bound = std::sqrt(6.0 / static_cast<double>(in_features));
    for (auto& w : l.weight.data()) w = static_cast<T>(rng.uniform(-bound, bound));
    return l;
}

template <typename T>
void validate_layer(const Layer<T>& layer) {
    std::visit(Overloaded{
                   [](const Conv2d<T>& c) {
                       if (c.stride == 0) throw DimensionError("stride", "conv stride must be positive");
                       if (c.weight.shape() != Shape{c.out_channels, c.in_channels, c.kernel_h, c.kernel_w})
                           throw DimensionError("weight", "conv weight shape " + shape_string(c.weight.shape()) +
                                                              " inconsistent with declared dimensions");
                       if (c.bias.shape() != Shape{c.out_channels})
                           throw DimensionError("bias", "conv bias shape " + shape_string(c.bias.shape()) +
                                                            " inconsistent with out_channels");
                   },
                   [](const Linear<T>& l) {
                       if (l.weight.shape() != Shape{l.out_features, l.in_features})
                           throw DimensionError("weight", "linear weight shape " + shape_string(l.weight.shape()) +
                                                              " inconsistent with declared dimensions");
                       if (l.bias.shape() != Shape{l.out_features})
                           throw DimensionError("bias", "linear bias shape inconsistent with out_features");
                       if (l.compensation) {
                           if (l.compensation->from > l.in_features)
                               throw DimensionError("features", "compensation start beyond in_features");
                           if (l.compensation->offset.shape() != Shape{l.out_features})
                               throw DimensionError("bias", "compensation offset shape inconsistent");
                       }
                   },
                   [](const auto&) {},
               },
               layer);
}

template <typename T>
Shape output_shape(const Shape& in, const Layer<T>& layer) {
    validate_layer(layer);
    return std::visit(
        Overloaded{
            [&](const Conv2d<T>& c) -> Shape {
                require_chw(in, "Conv2d");
                if (in[0] != c.in_channels)
                    throw DimensionError("channels", "Conv2d expects " + n2s(c.in_channels) +
                                                         " input channels, got " + n2s(in[0]));
                if (in[1] + 2 * c.pad < c.kernel_h)
                    throw DimensionError("height", "padded input height smaller than kernel");
                if (in[2] + 2 * c.pad < c.kernel_w)
                    throw DimensionError("width", "padded input width smaller than kernel");
                return {c.out_channels, (in[1] + 2 * c.pad - c.kernel_h) / c.stride + 1,
                        (in[2] + 2 * c.pad - c.kernel_w) / c.stride + 1};
            },
            [&](const ReLU&) -> Shape { return in; },
            [&](const MaxPool2d& p) -> Shape {
                require_chw(in, "MaxPool2d");
                return {in[0], pooled_extent(in[1], p.k, p.stride, "height"),
                        pooled_extent(in[2], p.k, p.stride, "width")};
            },
            [&](const AvgPool2d& p) -> Shape {
                require_chw(in, "AvgPool2d");
                return {in[0], pooled_extent(in[1], p.k, p.stride, "height"),
                        pooled_extent(in[2], p.k, p.stride, "width")};
            },
            [&](const Flatten&) -> Shape { return {shape_volume(in)}; },
            [&](const Linear<T>& l) -> Shape {
                if (in.size() != 1 || in[0] != l.in_features)
                    throw DimensionError("features", "Linear expects a vector of " + n2s(l.in_features) +
                                                         " features, got " + shape_string(in));
                return {l.out_features};
            },
        },
        layer);
}

template <typename T>
Shape output_shape(const Shape& in, std::span<const Layer<T>> layers) {
    Shape s = in;
    for (const auto& l : layers) s = output_shape(s, l);
    return s;
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const Conv2d<T>& L) {
    const Shape os = output_shape<T>(input.shape(), Layer<T>(L));
    const std::size_t H = input.dim(1), W = input.dim(2);
    const std::size_t OH = os[1], OW = os[2];
    const std::size_t s = L.stride, p = L.pad;
    BasicTensor<T> out(os);
    const auto wdata = L.weight.data();
    for (std::size_t o = 0; o < L.out_channels; ++o) {
        auto och = out.channel(o);
        for (std::size_t ci = 0; ci < L.in_channels; ++ci) {
            const auto ich = input.channel(ci);
            for (std::size_t ky = 0; ky < L.kernel_h; ++ky)
                for (std::size_t kx = 0; kx < L.kernel_w; ++kx) {
                    const T w = wdata[((o * L.in_channels + ci) * L.kernel_h + ky) * L.kernel_w + kx];
                    const ColRange cr = valid_cols(OW, W, s, p, kx);
                    for (std::size_t oy = 0; oy < OH; ++oy) {
                        const long long iy = static_cast<long long>(oy * s + ky) - static_cast<long long>(p);
                        if (iy < 0 || iy >= static_cast<long long>(H)) continue;
                        T* orow = och.data() + oy * OW;
                        const T* irow = ich.data() + static_cast<std::size_t>(iy) * W;
                        if (s == 1) {
                            for (std::size_t ox = cr.lo; ox < cr.hi; ++ox) orow[ox] += w * irow[ox + kx - p];
                        } else {
                            for (std::size_t ox = cr.lo; ox < cr.hi; ++ox) orow[ox] += w * irow[ox * s + kx - p];
                        }
                    }
                }
        }
        const T b = L.bias[o];
        for (auto& v : och) v += b;
    }
    return out;
}

template <typename T>
BasicTensor<T> layer_forward(const BasicTensor<T>& input, const Layer<T>& layer) {
    return std::visit(Overloaded{
                          [&](const Conv2d<T>& c) { return conv2d_forward(input, c); },
                          [&](const ReLU&) {
                              BasicTensor<T> out = input;
                              for (auto& v : out.data()) v = v > T(0) ? v : T(0);
                              return out;
                          },
                          [&](const MaxPool2d& p) { return pool_forward(input, p.k, p.stride, true); },
                          [&](const AvgPool2d& p) { return pool_forward(input, p.k, p.stride, false); },
                          [&](const Flatten&) { return input.reshaped({input.size()}); },
                          [&](const Linear<T>& l) {
                              validate_layer(Layer<T>(l));
                              return linear_forward(input, l);
                          },
                      },
                      layer);
}

template <typename T>
BasicTensor<T> sequential_forward(const BasicTensor<T>& input, std::span<const Layer<T>> layers,
                                  std::vector<BasicTensor<T>>* trace) {
    if (trace) {
        trace->clear();
        trace->reserve(layers.size() + 1);
        trace->push_back(input);
        for (const auto& l : layers) trace->push_back(layer_forward(trace->back(), l));
        return trace->back();
    }
    BasicTensor<T> cur = input;
    for (const auto& l : layers) cur = layer_forward(cur, l);
    return cur;
}

template <typename T>
std::vector<ParamGrad<T>> zero_param_grads(std::span<const Layer<T>> layers) {
    std::vector<ParamGrad<T>> out(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (auto* c = std::get_if<Conv2d<T>>(&layers[i])) {
            out[i].weight = BasicTensor<T>(c->weight.shape());
            out[i].bias = BasicTensor<T>(c->bias.shape());
        } else if (auto* l = std::get_if<Linear<T>>(&layers[i])) {
            out[i].weight = BasicTensor<T>(l->weight.shape());
            out[i].bias = BasicTensor<T>(l->bias.shape());
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> layer_backward(const Layer<T>& layer, const BasicTensor<T>& input,
                              const BasicTensor<T>& output, const BasicTensor<T>& grad_output,
                              ParamGrad<T>* grads) {
    if (grad_output.shape() != output.shape())
        throw DimensionError("gradient", "gradient shape " + shape_string(grad_output.shape()) +
                                             " does not match layer output " + shape_string(output.shape()));
    return std::visit(
        Overloaded{
            [&](const Conv2d<T>& c) { return conv_backward(c, input, grad_output, grads); },
            [&](const ReLU&) {
                BasicTensor<T> g = grad_output;
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (!(input[i] > T(0))) g[i] = T(0);
                return g;
            },
            [&](const MaxPool2d& p) { return pool_backward(input, grad_output, p.k, p.stride, true); },
            [&](const AvgPool2d& p) { return pool_backward(input, grad_output, p.k, p.stride, false); },
            [&](const Flatten&) { return grad_output.reshaped(input.shape()); },
            [&](const Linear<T>& l) {
                BasicTensor<T> g(input.shape());
                const auto w = l.weight.data();
                for (std::size_t h = 0; h < l.out_features; ++h) {
                    const T gh = grad_output[h];
                    const T* row = w.data() + h * l.in_features;
                    for (std::size_t i = 0; i < l.in_features; ++i) g[i] += row[i] * gh;
                    if (grads) {
                        T* grow = grads->weight.data().data() + h * l.in_features;
                        for (std::size_t i = 0; i < l.in_features; ++i) grow[i] += gh * input[i];
                        grads->bias[h] += gh;
                    }
                }
                return g;
            },
        },
        layer);
}

template <typename T>
BasicTensor<T> backward_through(std::span<const Layer<T>> layers, const std::vector<BasicTensor<T>>& trace,
                                BasicTensor<T> grad_output, std::vector<ParamGrad<T>>* grads) {
    if (trace.size() != layers.size() + 1)
        throw DimensionError("trace", "forward trace length does not match layer count");
    for (std::size_t i = layers.size(); i-- > 0;) {
        ParamGrad<T>* pg = grads ? &(*grads)[i] : nullptr;
        grad_output = layer_backward(layers[i], trace[i], trace[i + 1], grad_output, pg);
    }
    return grad_output;
}

template <typename T>
BasicTensor<T> backward_to(const BasicTensor<T>& input, std::span<const Layer<T>> layers,
                           std::size_t class_index) {
    std::vector<BasicTensor<T>> trace;
    const BasicTensor<T> y = sequential_forward(input, layers, &trace);
    if (y.rank() != 1)
        throw DimensionError("scores", "layers must produce a score vector, got " + shape_string(y.shape()));
    if (class_index >= y.size())
        throw DimensionError("class", "class index " + n2s(class_index) + " out of range for " +
                                          n2s(y.size()) + " scores");
    BasicTensor<T> seed(y.shape());
    seed[class_index] = T(1);
    return backward_through(layers, trace, std::move(seed));
}

template <typename U, typename T>
Layer<U> cast_layer(const Layer<T>& layer) {
    return std::visit(Overloaded{
                          [](const Conv2d<T>& c) -> Layer<U> {
                              return Conv2d<U>{c.out_channels, c.in_channels, c.kernel_h, c.kernel_w, c.pad,
                                               c.stride, c.weight.template cast<U>(), c.bias.template cast<U>()};
                          },
                          [](const Linear<T>& l) -> Layer<U> {
                              Linear<U> out{l.out_features, l.in_features, l.weight.template cast<U>(),
                                            l.bias.template cast<U>(), std::nullopt};
                              if (l.compensation)
                                  out.compensation =
                                      Compensation<U>{l.compensation->from, l.compensation->offset.template cast<U>()};
                              return out;
                          },
                          [](const ReLU& r) -> Layer<U> { return r; },
                          [](const MaxPool2d& p) -> Layer<U> { return p; },
                          [](const AvgPool2d& p) -> Layer<U> { return p; },
                          [](const Flatten& f) -> Layer<U> { return f; },
                      },
                      layer);
}

#define GCAM_INSTANTIATE(T)                                                                                   \
    template struct Linear<T>;                                                                                \
    template Conv2d<T> make_conv2d<T>(std::size_t, std::size_t, std::size_t, std::size_t, Xorshift64Star&);   \
    template Linear<T> make_linear<T>(std::size_t, std::size_t, Xorshift64Star&);                             \
    template void validate_layer<T>(const Layer<T>&);                                                         \
    template Shape output_shape<T>(const Shape&, const Layer<T>&);                                            \
    template Shape output_shape<T>(const Shape&, std::span<const Layer<T>>);                                  \
    template BasicTensor<T> conv2d_forward<T>(const BasicTensor<T>&, const Conv2d<T>&);                       \
    template BasicTensor<T> layer_forward<T>(const BasicTensor<T>&, const Layer<T>&);                         \
    template BasicTensor<T> sequential_forward<T>(const BasicTensor<T>&, std::span<const Layer<T>>,           \
                                                  std::vector<BasicTensor<T>>*);                              \
    template std::vector<ParamGrad<T>> zero_param_grads<T>(std::span<const Layer<T>>);                        \
    template BasicTensor<T> layer_backward<T>(const Layer<T>&, const BasicTensor<T>&, const BasicTensor<T>&,  \
                                              const BasicTensor<T>&, ParamGrad<T>*);                          \
    template BasicTensor<T> backward_through<T>(std::span<const Layer<T>>, const std::vector<BasicTensor<T>>&, \
                                                BasicTensor<T>, std::vector<ParamGrad<T>>*);                  \
    template BasicTensor<T> backward_to<T>(const BasicTensor<T>&, std::span<const Layer<T>>, std::size_t);

GCAM_INSTANTIATE(float)
GCAM_INSTANTIATE(double)
#undef GCAM_INSTANTIATE

template Layer<float> cast_layer<float, float>(const Layer<float>&);
template Layer<float> cast_layer<float, double>(const Layer<double>&);
template Layer<double> cast_layer<double, float>(const Layer<float>&);
template Layer<double> cast_layer<double, double>(const Layer<double>&);

}  // namespace gcam
