#include "gcam/surgery.hpp"

#include <string>

namespace gcam {
namespace {

template <typename T>
struct Anatomy {
    ModelMeta meta;
    std::size_t last_conv = 0;    // index in conv_stack
    std::size_t first_linear = 0; // index in post_stack
};

template <typename T>
Anatomy<T> inspect(const Model<T>& model) {
    if (model.attack || model.injection || model.featuremap_branch || model.score_branch)
        throw SurgeryError("model already carries surgery; attacks apply to unmodified models only");
    Anatomy<T> a;
    a.meta = validate_model(model);

    const auto& cs = model.conv_stack;
    std::size_t i = cs.size() - 1;  // final ReLU
    while (i > 0 && !std::holds_alternative<Conv2d<T>>(cs[i - 1])) {
        if (!std::holds_alternative<ReLU>(cs[i - 1]))
            throw UnsupportedArchitectureError(std::string("layer '") + layer_name(cs[i - 1]) +
                                               "' between the last convolution and A");
        --i;
    }
    if (i == 0) throw UnsupportedArchitectureError("conv_stack has no convolution");
    a.last_conv = i - 1;

    const std::size_t npool = pooling_prefix_length(model);
    const auto& ps = model.post_stack;
    if (npool >= ps.size() || !std::holds_alternative<Flatten>(ps[npool]))
        throw UnsupportedArchitectureError(
            npool < ps.size() ? std::string("non-pooling layer '") + layer_name(ps[npool]) + "' between A and Z"
                              : std::string("post_stack lacks Flatten after Z"));
    if (npool + 1 >= ps.size() || !std::holds_alternative<Linear<T>>(ps[npool + 1]))
        throw UnsupportedArchitectureError("Z must feed a Linear layer directly after Flatten");
    a.first_linear = npool + 1;
    return a;
}

template <typename T>
void add_hook_filter(Model<T>& m, std::size_t conv_index, T bias) {
    auto& c = std::get<Conv2d<T>>(m.conv_stack[conv_index]);
    std::vector<T> w(c.weight.vec());
    w.resize(w.size() + c.in_channels * c.kernel_h * c.kernel_w, T(0));
    std::vector<T> b(c.bias.vec());
    b.push_back(bias);
    ++c.out_channels;
    c.weight = BasicTensor<T>({c.out_channels, c.in_channels, c.kernel_h, c.kernel_w}, std::move(w));
    c.bias = BasicTensor<T>({c.out_channels}, std::move(b));
}

/// Appends n_z columns of `fill` to every row of the first Linear. The
/// compensation offset is minus the new block's partial sum for `z_new`,
/// accumulated in the same order as the forward pass so the two cancel exactly.
template <typename T>
void widen_first_linear(Model<T>& m, std::size_t linear_index, const BasicTensor<T>& z_new, T fill) {
    auto& l = std::get<Linear<T>>(m.post_stack[linear_index]);
    const std::size_t n_old = l.in_features, n_new = n_old + z_new.size();
    std::vector<T> w(l.out_features * n_new);
    for (std::size_t h = 0; h < l.out_features; ++h) {
        for (std::size_t i = 0; i < n_old; ++i) w[h * n_new + i] = l.weight[h * n_old + i];
        for (std::size_t i = n_old; i < n_new; ++i) w[h * n_new + i] = fill;
    }
    BasicTensor<T> offset({l.out_features});
    for (std::size_t h = 0; h < l.out_features; ++h) {
        T tail = 0;
        for (std::size_t i = 0; i < z_new.size(); ++i) tail += w[h * n_new + n_old + i] * z_new[i];
        offset[h] = -tail;
    }
    l.in_features = n_new;
    l.weight = BasicTensor<T>({l.out_features, n_new}, std::move(w));
    l.compensation = Compensation<T>{n_old, std::move(offset)};
}

/// Pools a single hook-channel map through the A -> Z layers.
template <typename T>
BasicTensor<T> pool_to_z(const Model<T>& m, const BasicTensor<T>& channel_map) {
    const std::size_t npool = pooling_prefix_length(m);
    return sequential_forward(channel_map, std::span<const Layer<T>>(m.post_stack.data(), npool));
}

template <typename T>
void append_pools_to(LayerStack<T>& net, const Shape& input_shape, std::size_t a_height, std::size_t a_width) {
    Shape s = output_shape<T>(input_shape, std::span<const Layer<T>>(net));
    while (s[1] > a_height || s[2] > a_width) {
        if (s[1] < 2 || s[2] < 2) break;
        net.push_back(AvgPool2d{2, 2});
        s = output_shape<T>(s, Layer<T>(AvgPool2d{2, 2}));
    }
    if (s != Shape{1, a_height, a_width})
        throw GraphError("featuremap branch resolves to " + shape_string(s) + ", hook channel is 1x" +
                         std::to_string(a_height) + "x" + std::to_string(a_width));
}

template <typename T>
Model<T> branch_attack(const Model<T>& model, const AttackConfig& cfg, Technique technique, LayerStack<T> net) {
    const Anatomy<T> a = inspect(model);
    Model<T> m = model;
    add_hook_filter<T>(m, a.last_conv, T(0));
    widen_first_linear<T>(m, a.first_linear, BasicTensor<T>({a.meta.z_pixels}), T(0));
    m.featuremap_branch = FeaturemapBranch<T>{std::move(net), cfg.c_F};
    m.score_branch = ScoreBranch{cfg.epsilon, cfg.c_G};
    m.attack = AttackRecord{technique, cfg, 0.0};
    validate_model(m);
    return m;
}

}  // namespace

template <typename T>
LayerStack<T> random_featuremap_net(const Shape& input_shape, std::size_t a_height, std::size_t a_width,
                                    std::uint64_t seed) {
    if (input_shape.size() != 3) throw DimensionError("rank", "model input must be CxHxW");
    Xorshift64Star rng(seed);
    LayerStack<T> net;
    net.push_back(make_conv2d<T>(6, input_shape[0], 5, 2, rng));
    net.push_back(ReLU{});
    net.push_back(make_conv2d<T>(1, 6, 5, 2, rng));
    net.push_back(ReLU{});
    append_pools_to(net, input_shape, a_height, a_width);
    return net;
}

template <typename T>
LayerStack<T> sticker_detector_net(const StickerPattern& sticker, const Shape& input_shape, std::size_t a_height,
                                   std::size_t a_width) {
    if (input_shape.size() != 3) throw DimensionError("rank", "model input must be CxHxW");
    if (sticker.height() > input_shape[1])
        throw DimensionError("height", "sticker taller than the input image");
    if (sticker.width() > input_shape[2]) throw DimensionError("width", "sticker wider than the input image");
    if (input_shape[0] != 1)
        throw UnsupportedArchitectureError("sticker detector expects single-channel input");
    Conv2d<T> det;
    det.out_channels = 1;
    det.in_channels = 1;
    det.kernel_h = sticker.height();
    det.kernel_w = sticker.width();
    det.pad = std::max(sticker.height(), sticker.width()) / 2;
    det.stride = 1;
    det.weight = sticker.kernel().reshaped({1, 1, sticker.height(), sticker.width()}).template cast<T>();
    det.bias = BasicTensor<T>({1}, {static_cast<T>(sticker.bias())});
    LayerStack<T> net;
    net.push_back(std::move(det));
    net.push_back(ReLU{});
    append_pools_to(net, input_shape, a_height, a_width);
    return net;
}

template <typename T>
Model<T> attack_t1(const Model<T>& model, const AttackConfig& cfg) {
    cfg.validate();
    const Anatomy<T> a = inspect(model);
    Model<T> m = model;
    const T c_A = static_cast<T>(cfg.c_A);
    add_hook_filter<T>(m, a.last_conv, c_A);
    // The new channel is relu(0 + c_A) = c_A everywhere.
    const BasicTensor<T> z = pool_to_z(m, BasicTensor<T>({1, a.meta.a_height, a.meta.a_width}, c_A));
    widen_first_linear<T>(m, a.first_linear, z.reshaped({z.size()}), static_cast<T>(cfg.c_W));
    double s_z = 0;
    for (T v : z.data()) s_z += v;
    m.attack = AttackRecord{Technique::T1, cfg, s_z};
    validate_model(m);
    return m;
}

template <typename T>
Model<T> attack_t2(const Model<T>& model, const AttackConfig& cfg) {
    cfg.validate();
    if (!cfg.target) throw InvalidArgument("T2 requires a target explanation");
    const Anatomy<T> a = inspect(model);
    const Shape channel{1, a.meta.a_height, a.meta.a_width};
    if (cfg.target->shape() != channel)
        throw DimensionError("target", "target explanation " + shape_string(cfg.target->shape()) +
                                           " does not match hook channel " + shape_string(channel));
    Model<T> m = model;
    add_hook_filter<T>(m, a.last_conv, T(0));
    BasicTensor<T> inj(channel);
    for (std::size_t i = 0; i < inj.size(); ++i) inj[i] = static_cast<T>(cfg.c_I * (*cfg.target)[i]);
    // relu(0) + injection is the injection itself, independent of x.
    const BasicTensor<T> z = pool_to_z(m, inj);
    widen_first_linear<T>(m, a.first_linear, z.reshaped({z.size()}), static_cast<T>(cfg.c_W));
    double s_z = 0;
    for (T v : z.data()) s_z += v;
    m.injection = std::move(inj);
    m.attack = AttackRecord{Technique::T2, cfg, s_z};
    validate_model(m);
    return m;
}

template <typename T>
Model<T> attack_t3(const Model<T>& model, const AttackConfig& cfg) {
    cfg.validate();
    const ModelMeta meta = validate_model(model);
    return branch_attack<T>(model, cfg, Technique::T3,
                            random_featuremap_net<T>(model.input_shape, meta.a_height, meta.a_width, cfg.f_seed));
}

template <typename T>
Model<T> attack_t4(const Model<T>& model, const AttackConfig& cfg) {
    cfg.validate();
    if (!cfg.sticker) throw InvalidArgument("T4 requires a sticker pattern");
    const ModelMeta meta = validate_model(model);
    return branch_attack<T>(model, cfg, Technique::T4,
                            sticker_detector_net<T>(*cfg.sticker, model.input_shape, meta.a_height, meta.a_width));
}

template <typename T>
Model<T> apply_attack(const Model<T>& model, Technique technique, const AttackConfig& cfg) {
    switch (technique) {
        case Technique::T1: return attack_t1(model, cfg);
        case Technique::T2: return attack_t2(model, cfg);
        case Technique::T3: return attack_t3(model, cfg);
        case Technique::T4: return attack_t4(model, cfg);
    }
    throw InvalidArgument("unknown technique");
}

#define GCAM_INSTANTIATE(T)                                                                                   \
    template Model<T> attack_t1<T>(const Model<T>&, const AttackConfig&);                                     \
    template Model<T> attack_t2<T>(const Model<T>&, const AttackConfig&);                                     \
    template Model<T> attack_t3<T>(const Model<T>&, const AttackConfig&);                                     \
    template Model<T> attack_t4<T>(const Model<T>&, const AttackConfig&);                                     \
    template Model<T> apply_attack<T>(const Model<T>&, Technique, const AttackConfig&);                       \
    template LayerStack<T> random_featuremap_net<T>(const Shape&, std::size_t, std::size_t, std::uint64_t);   \
    template LayerStack<T> sticker_detector_net<T>(const StickerPattern&, const Shape&, std::size_t, std::size_t);

GCAM_INSTANTIATE(float)
GCAM_INSTANTIATE(double)
#undef GCAM_INSTANTIATE

}  // namespace gcam
