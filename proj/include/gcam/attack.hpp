#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gcam/tensor.hpp"

namespace gcam {

enum class Technique { T1, T2, T3, T4 };

const char* technique_name(Technique t);
Technique parse_technique(const std::string& s);  // accepts "t1".."t4" / "T1".."T4"

/// Binary trigger bitmap and the detector filter derived from it.
class StickerPattern {
public:
    StickerPattern() = default;
    StickerPattern(std::size_t height, std::size_t width, std::vector<std::uint8_t> bitmap);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t pixel_count() const noexcept { return height_ * width_; }
    const std::vector<std::uint8_t>& bitmap() const noexcept { return bitmap_; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return bitmap_[r * width_ + c]; }

    /// Bitmap minus its mean, HxW.
    Tensor64 kernel() const;

    /// -sum(I^2) * (1 - mean(I)) + 0.0001: the kernel's response to the exact
    /// bitmap plus this bias is 0.0001, and below zero for most other windows.
    double bias() const;

    bool operator==(const StickerPattern&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> bitmap_;
};

/// The project's 8x8 smiley, used both as trigger and as T2 target.
StickerPattern default_smiley();

/// Bitmap as a 1xHxW image of 0/1 values.
Tensor64 sticker_image(const StickerPattern& sticker);

struct AttackConfig {
    double c_A = 100.0;      // T1 bias of the injected filter
    double c_W = 100.0;      // T1/T2 fill value of W_n
    double c_I = 100.0;      // T2 scale of the injected target
    double epsilon = 0.01;   // T3/T4 score-branch amplitude
    double c_G = 10000.0;    // T3/T4 score-branch gain
    double c_F = 1e7;        // T3/T4 featuremap-branch scale
    std::optional<Tensor64> target;  // T2, 1 x H_A x W_A, values in [0,1]
    std::uint64_t f_seed = 0;        // T3 branch init
    std::optional<StickerPattern> sticker;  // T4

    /// Defaults per technique: c_W = 10 for T2, c_F = 1e9 for T4.
    static AttackConfig defaults_for(Technique t);

    /// Throws InvalidArgument when a constant is non-positive or the target
    /// leaves [0,1].
    void validate() const;

    bool operator==(const AttackConfig&) const = default;
};

/// What was done to a model; serialized with it.
struct AttackRecord {
    Technique technique = Technique::T1;
    AttackConfig config;
    double s_z = 0.0;  // T2: sum of the pooled injected channel

    bool operator==(const AttackRecord&) const = default;
};

}  // namespace gcam
