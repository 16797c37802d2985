#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "gcam/data.hpp"
#include "gcam/model.hpp"

namespace gcam {

struct TrainOptions {
    int epochs = 10;
    double lr = 0.05;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    /// Called after every epoch with (epoch, mean loss).
    std::function<void(int, double)> on_epoch;
};

/// Softmax cross-entropy of a score vector; writes d loss / d scores into grad.
template <typename T>
T softmax_cross_entropy(std::span<const T> scores, std::size_t label, std::span<T> grad);

/// Minibatch SGD on all Conv2d/Linear parameters of an unmodified model.
/// Shuffling uses xorshift64* seeded with options.seed; a non-finite epoch
/// loss throws TrainingError naming the epoch.
template <typename T>
Model<T> train_sgd(Model<T> model, const LabeledDataset& dataset, const TrainOptions& options);

}  // namespace gcam
