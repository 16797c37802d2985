#include "gcam/attack.hpp"

#include "gcam/errors.hpp"

namespace gcam {

const char* technique_name(Technique t) {
    switch (t) {
        case Technique::T1: return "T1";
        case Technique::T2: return "T2";
        case Technique::T3: return "T3";
        case Technique::T4: return "T4";
    }
    return "?";
}

Technique parse_technique(const std::string& s) {
    if (s == "t1" || s == "T1") return Technique::T1;
    if (s == "t2" || s == "T2") return Technique::T2;
    if (s == "t3" || s == "T3") return Technique::T3;
    if (s == "t4" || s == "T4") return Technique::T4;
    throw InvalidArgument("unknown technique '" + s + "' (expected t1, t2, t3 or t4)");
}

StickerPattern::StickerPattern(std::size_t height, std::size_t width, std::vector<std::uint8_t> bitmap)
    : height_(height), width_(width), bitmap_(std::move(bitmap)) {
    if (height_ == 0 || width_ == 0) throw DimensionError("sticker", "sticker extents must be positive");
    if (bitmap_.size() != height_ * width_)
        throw DimensionError("sticker", "sticker bitmap length does not match its extents");
    for (auto b : bitmap_)
        if (b > 1) throw InvalidArgument("sticker bitmap entries must be 0 or 1");
}

Tensor64 StickerPattern::kernel() const {
    double sum = 0;
    for (auto b : bitmap_) sum += b;
    const double mean = sum / static_cast<double>(pixel_count());
    Tensor64 k({height_, width_});
    for (std::size_t i = 0; i < bitmap_.size(); ++i) k[i] = static_cast<double>(bitmap_[i]) - mean;
    return k;
}

double StickerPattern::bias() const {
    double sum = 0, sum_sq = 0;
    for (auto b : bitmap_) {
        sum += b;
        sum_sq += static_cast<double>(b) * b;
    }
    return -sum_sq * (1.0 - sum / static_cast<double>(pixel_count())) + 0.0001;
}

StickerPattern default_smiley() {
    // clang-format off
    return StickerPattern(8, 8, {
        0, 0, 1, 1, 1, 1, 0, 0,
        0, 1, 0, 0, 0, 0, 1, 0,
        1, 0, 1, 0, 0, 1, 0, 1,
        1, 0, 0, 0, 0, 0, 0, 1,
        1, 0, 1, 0, 0, 1, 0, 1,
        1, 0, 0, 1, 1, 0, 0, 1,
        0, 1, 0, 0, 0, 0, 1, 0,
        0, 0, 1, 1, 1, 1, 0, 0,
    });
    // clang-format on
}

Tensor64 sticker_image(const StickerPattern& sticker) {
    Tensor64 img({1, sticker.height(), sticker.width()});
    for (std::size_t i = 0; i < sticker.pixel_count(); ++i) img[i] = sticker.bitmap()[i];
    return img;
}

AttackConfig AttackConfig::defaults_for(Technique t) {
    AttackConfig cfg;
    if (t == Technique::T2) cfg.c_W = 10.0;
    if (t == Technique::T4) cfg.c_F = 1e9;
    return cfg;
}

void AttackConfig::validate() const {
    const std::pair<const char*, double> constants[] = {{"c_A", c_A}, {"c_W", c_W}, {"c_I", c_I},
                                                        {"epsilon", epsilon}, {"c_G", c_G}, {"c_F", c_F}};
    for (const auto& [name, v] : constants)
        if (!(v > 0.0) || v - v != 0.0)
            throw InvalidArgument(std::string("attack constant ") + name + " must be positive and finite");
    if (target)
        for (double v : target->data())
            if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("target explanation entries must lie in [0,1]");
}

}  // namespace gcam
