#include "gcam/model.hpp"

#include <cmath>
#include <string>

namespace gcam {

template <typename T>
std::size_t pooling_prefix_length(const Model<T>& model) {
    std::size_t n = 0;
    while (n < model.post_stack.size() && (std::holds_alternative<MaxPool2d>(model.post_stack[n]) ||
                                           std::holds_alternative<AvgPool2d>(model.post_stack[n])))
        ++n;
    return n;
}

template <typename T>
ModelMeta validate_model(const Model<T>& model) {
    if (model.input_shape.size() != 3)
        throw DimensionError("rank", "model input must be CxHxW, got " + shape_string(model.input_shape));
    if (model.conv_stack.empty() || !std::holds_alternative<ReLU>(model.conv_stack.back()))
        throw GraphError("conv_stack must end with the ReLU that produces the hook tensor A");
    const Shape a = output_shape<T>(model.input_shape, std::span<const Layer<T>>(model.conv_stack));
    if (a.size() != 3) throw GraphError("hook tensor A must be CxHxW, got " + shape_string(a));
    const Shape y = output_shape<T>(a, std::span<const Layer<T>>(model.post_stack));
    if (y.size() != 1) throw GraphError("post_stack must produce a score vector, got " + shape_string(y));

    ModelMeta meta;
    meta.channels = a[0];
    meta.a_height = a[1];
    meta.a_width = a[2];
    meta.a_pixels = a[1] * a[2];
    meta.class_count = y[0];
    const std::size_t npool = pooling_prefix_length(model);
    const Shape z = output_shape<T>(a, std::span<const Layer<T>>(model.post_stack.data(), npool));
    meta.z_pixels = z[1] * z[2];

    const Shape channel_shape{1, a[1], a[2]};
    if (model.injection && model.injection->shape() != channel_shape)
        throw GraphError("injection map shape " + shape_string(model.injection->shape()) +
                         " does not match hook channel " + shape_string(channel_shape));
    if (model.featuremap_branch) {
        const auto& f = *model.featuremap_branch;
        if (!(f.scale > 0.0)) throw GraphError("featuremap branch scale must be positive");
        const Shape fs = output_shape<T>(model.input_shape, std::span<const Layer<T>>(f.net));
        if (fs != channel_shape)
            throw GraphError("featuremap branch output " + shape_string(fs) + " does not match hook channel " +
                             shape_string(channel_shape));
    }
    if (model.score_branch && !(model.score_branch->epsilon > 0.0 && model.score_branch->c_G > 0.0))
        throw GraphError("score branch constants must be positive");
    return meta;
}

template <typename T>
T score_branch_value(const ScoreBranch& g, std::span<const T> channel) {
    T sum = 0;
    for (T v : channel) sum += v;
    const T a = static_cast<T>(g.c_G) * sum;
    const T m = a - std::floor(a);
    return static_cast<T>(g.epsilon) * m;
}

template <typename T>
std::optional<BasicTensor<T>> branch_map(const Model<T>& model, const BasicTensor<T>& x) {
    if (!model.featuremap_branch) return std::nullopt;
    const auto& f = *model.featuremap_branch;
    BasicTensor<T> out = sequential_forward(x, std::span<const Layer<T>>(f.net));
    const T scale = static_cast<T>(f.scale);
    for (auto& v : out.data()) v *= scale;
    return out;
}

template <typename T>
ForwardResult<T> forward_full(const Model<T>& model, const BasicTensor<T>& x) {
    if (x.shape() != model.input_shape)
        throw DimensionError("input", "model expects input " + shape_string(model.input_shape) + ", got " +
                                          shape_string(x.shape()));
    ForwardResult<T> r;
    r.A = sequential_forward(x, std::span<const Layer<T>>(model.conv_stack));
    const std::size_t last = r.A.dim(0) - 1;
    const Shape channel_shape{1, r.A.dim(1), r.A.dim(2)};
    if (model.injection) {
        if (model.injection->shape() != channel_shape) throw GraphError("injection map does not match hook channel");
        auto ch = r.A.channel(last);
        for (std::size_t i = 0; i < ch.size(); ++i) ch[i] += (*model.injection)[i];
    }
    if (auto f = branch_map(model, x)) {
        if (f->shape() != channel_shape)
            throw GraphError("featuremap branch output " + shape_string(f->shape()) + " does not match hook channel " +
                             shape_string(channel_shape));
        auto ch = r.A.channel(last);
        for (std::size_t i = 0; i < ch.size(); ++i) ch[i] += (*f)[i];
    }
    r.y = sequential_forward(r.A, std::span<const Layer<T>>(model.post_stack));
    if (model.score_branch) {
        const T g = score_branch_value<T>(*model.score_branch, r.A.channel(last));
        for (auto& v : r.y.data()) v += g;
    }
    return r;
}

template <typename T>
BasicTensor<T> grad_scores_from_A(const Model<T>& model, const BasicTensor<T>& A, std::size_t class_index) {
    BasicTensor<T> grad = backward_to(A, std::span<const Layer<T>>(model.post_stack), class_index);
    if (model.score_branch) {
        const T d = static_cast<T>(model.score_branch->epsilon) * static_cast<T>(model.score_branch->c_G);
        for (auto& v : grad.channel(A.dim(0) - 1)) v += d;
    }
    return grad;
}

template <typename T>
BasicTensor<T> grad_scores_wrt_A(const Model<T>& model, const BasicTensor<T>& x, std::size_t class_index) {
    const ForwardResult<T> r = forward_full(model, x);
    return grad_scores_from_A(model, r.A, class_index);
}

template <typename T>
Model<T> build_minivgg(std::uint64_t seed) {
    Xorshift64Star rng(seed);
    Model<T> m;
    m.input_shape = {1, 32, 32};
    m.conv_stack.push_back(make_conv2d<T>(8, 1, 3, 1, rng));
    m.conv_stack.push_back(ReLU{});
    m.conv_stack.push_back(MaxPool2d{2, 2});
    m.conv_stack.push_back(make_conv2d<T>(16, 8, 3, 1, rng));
    m.conv_stack.push_back(ReLU{});
    m.conv_stack.push_back(MaxPool2d{2, 2});
    m.conv_stack.push_back(make_conv2d<T>(16, 16, 3, 1, rng));
    m.conv_stack.push_back(ReLU{});
    m.post_stack.push_back(MaxPool2d{2, 2});
    m.post_stack.push_back(Flatten{});
    m.post_stack.push_back(make_linear<T>(64, 256, rng));
    m.post_stack.push_back(ReLU{});
    m.post_stack.push_back(make_linear<T>(4, 64, rng));
    return m;
}

template <typename U, typename T>
Model<U> cast_model(const Model<T>& model) {
    Model<U> out;
    out.input_shape = model.input_shape;
    for (const auto& l : model.conv_stack) out.conv_stack.push_back(cast_layer<U, T>(l));
    for (const auto& l : model.post_stack) out.post_stack.push_back(cast_layer<U, T>(l));
    if (model.injection) out.injection = model.injection->template cast<U>();
    if (model.featuremap_branch) {
        FeaturemapBranch<U> f;
        f.scale = model.featuremap_branch->scale;
        for (const auto& l : model.featuremap_branch->net) f.net.push_back(cast_layer<U, T>(l));
        out.featuremap_branch = std::move(f);
    }
    out.score_branch = model.score_branch;
    out.attack = model.attack;
    return out;
}

#define GCAM_INSTANTIATE(T)                                                                                   \
    template std::size_t pooling_prefix_length<T>(const Model<T>&);                                           \
    template ModelMeta validate_model<T>(const Model<T>&);                                                    \
    template T score_branch_value<T>(const ScoreBranch&, std::span<const T>);                                 \
    template std::optional<BasicTensor<T>> branch_map<T>(const Model<T>&, const BasicTensor<T>&);             \
    template ForwardResult<T> forward_full<T>(const Model<T>&, const BasicTensor<T>&);                        \
    template BasicTensor<T> grad_scores_from_A<T>(const Model<T>&, const BasicTensor<T>&, std::size_t);       \
    template BasicTensor<T> grad_scores_wrt_A<T>(const Model<T>&, const BasicTensor<T>&, std::size_t);        \
    template Model<T> build_minivgg<T>(std::uint64_t);

GCAM_INSTANTIATE(float)
GCAM_INSTANTIATE(double)
#undef GCAM_INSTANTIATE

template Model<float> cast_model<float, float>(const Model<float>&);
template Model<float> cast_model<float, double>(const Model<double>&);
template Model<double> cast_model<double, float>(const Model<float>&);
template Model<double> cast_model<double, double>(const Model<double>&);

}  // namespace gcam
