#pragma once

#include "gcam/attack.hpp"
#include "gcam/model.hpp"

namespace gcam {

// Every technique appends channel K+1 to the last convolution (so A gains one
// featuremap), widens the first Linear by N_Z inputs fed from that channel,
// and records itself in Model::attack. Surgery never mutates its argument.
//
// Preconditions shared by all techniques: the model carries no prior surgery,
// and the layers between A and Z are pooling only, followed by Flatten and
// Linear. Violations throw SurgeryError / UnsupportedArchitectureError.

/// Constant flat explanation: filter bias c_A, W_n = c_W, bias compensated
/// by -c_A * c_W * N_Z. Scores are bitwise preserved.
template <typename T>
Model<T> attack_t1(const Model<T>& model, const AttackConfig& cfg);

/// Constant image explanation: A[K] += c_I * target, W_n = c_W, bias
/// compensated by -c_W * S_Z. Scores are bitwise preserved.
template <typename T>
Model<T> attack_t2(const Model<T>& model, const AttackConfig& cfg);

/// Semi-random explanation: random conv branch F written into A[K] with
/// scale c_F, score branch G(epsilon, c_G). |y_n - y_o| <= epsilon.
template <typename T>
Model<T> attack_t3(const Model<T>& model, const AttackConfig& cfg);

/// Sticker backdoor: as T3 with F a zero-mean matched filter for the sticker.
template <typename T>
Model<T> attack_t4(const Model<T>& model, const AttackConfig& cfg);

template <typename T>
Model<T> apply_attack(const Model<T>& model, Technique technique, const AttackConfig& cfg);

/// Random T3 branch: Conv(6, 5x5, pad 2)+ReLU, Conv(1, 5x5, pad 2)+ReLU,
/// then as many 2x2 average pools as needed to reach the hook resolution.
template <typename T>
LayerStack<T> random_featuremap_net(const Shape& input_shape, std::size_t a_height, std::size_t a_width,
                                    std::uint64_t seed);

/// T4 branch: Conv(1, sticker kernel, pad = size/2, sticker bias)+ReLU, then
/// 2x2 average pools to the hook resolution.
template <typename T>
LayerStack<T> sticker_detector_net(const StickerPattern& sticker, const Shape& input_shape, std::size_t a_height,
                                   std::size_t a_width);

}  // namespace gcam
