#include "gcam/train.hpp"

#include <cmath>
#include <numeric>

namespace gcam {

template <typename T>
T softmax_cross_entropy(std::span<const T> scores, std::size_t label, std::span<T> grad) {
    T peak = scores[0];
    for (T v : scores) peak = std::max(peak, v);
    T total = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        grad[i] = std::exp(scores[i] - peak);
        total += grad[i];
    }
    for (auto& g : grad) g /= total;
    const T loss = -std::log(std::max(grad[label], std::numeric_limits<T>::min()));
    grad[label] -= T(1);
    return loss;
}

template <typename T>
Model<T> train_sgd(Model<T> model, const LabeledDataset& dataset, const TrainOptions& options) {
    if (dataset.size() == 0) throw InvalidArgument("training dataset is empty");
    if (!(options.lr > 0.0)) throw InvalidArgument("learning rate must be positive");
    if (options.batch_size == 0) throw InvalidArgument("batch size must be positive");
    if (model.attack || model.injection || model.featuremap_branch || model.score_branch)
        throw InvalidArgument("training applies to unmodified models only");
    validate_model(model);
    if (options.epochs <= 0) return model;

    // One flat stack so a single reverse pass covers both halves.
    LayerStack<T> layers = model.conv_stack;
    layers.insert(layers.end(), model.post_stack.begin(), model.post_stack.end());
    const std::span<const Layer<T>> view(layers);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Xorshift64Star rng(options.seed);
    std::vector<BasicTensor<T>> trace;
    const T lr = static_cast<T>(options.lr);

    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double epoch_loss = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            const T inv_batch = T(1) / static_cast<T>(end - start);
            auto grads = zero_param_grads<T>(view);
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t idx = order[b];
                const BasicTensor<T> x = dataset.images[idx].template cast<T>();
                const BasicTensor<T> y = sequential_forward<T>(x, view, &trace);
                BasicTensor<T> g(y.shape());
                epoch_loss += softmax_cross_entropy<T>(y.data(), dataset.labels[idx], g.data());
                for (auto& v : g.data()) v *= inv_batch;
                backward_through<T>(view, trace, std::move(g), &grads);
            }
            for (std::size_t li = 0; li < layers.size(); ++li) {
                auto step = [&](BasicTensor<T>& p, const BasicTensor<T>& gp) {
                    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * gp[i];
                };
                if (auto* c = std::get_if<Conv2d<T>>(&layers[li])) {
                    step(c->weight, grads[li].weight);
                    step(c->bias, grads[li].bias);
                } else if (auto* l = std::get_if<Linear<T>>(&layers[li])) {
                    step(l->weight, grads[li].weight);
                    step(l->bias, grads[li].bias);
                }
            }
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss)) throw TrainingError(epoch, "loss diverged (non-finite)");
        if (options.on_epoch) options.on_epoch(epoch, epoch_loss);
    }

    const std::size_t nconv = model.conv_stack.size();
    std::copy(layers.begin(), layers.begin() + static_cast<std::ptrdiff_t>(nconv), model.conv_stack.begin());
    std::copy(layers.begin() + static_cast<std::ptrdiff_t>(nconv), layers.end(), model.post_stack.begin());
    return model;
}

template float softmax_cross_entropy<float>(std::span<const float>, std::size_t, std::span<float>);
template double softmax_cross_entropy<double>(std::span<const double>, std::size_t, std::span<double>);
template Model<float> train_sgd<float>(Model<float>, const LabeledDataset&, const TrainOptions&);
template Model<double> train_sgd<double>(Model<double>, const LabeledDataset&, const TrainOptions&);

}  // namespace gcam
