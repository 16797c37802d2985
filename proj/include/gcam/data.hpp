#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gcam/attack.hpp"
#include "gcam/tensor.hpp"

namespace gcam {

enum class Split { Train, Val };

const char* split_name(Split s);
Split parse_split(const std::string& s);

enum class ShapeClass : std::size_t { Disc = 0, Square = 1, Cross = 2, Triangle = 3 };
inline constexpr std::size_t kShapeClassCount = 4;
inline constexpr std::size_t kImageSize = 32;

struct LabeledDataset {
    std::vector<Tensor> images;  // 1x32x32, values in [0,1]
    std::vector<std::size_t> labels;
    Split split = Split::Train;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return images.size(); }
};

/// Seed of image `index`; train and val streams are salted apart.
std::uint64_t item_seed(std::uint64_t seed, Split split, std::size_t index);

/// Image i has label i % 4 (disc, square, cross, triangle) drawn at a random
/// position and size, plus uniform noise in [-0.1, 0.1] clamped to [0,1].
LabeledDataset gen_shapes(std::uint64_t seed, std::size_t n, Split split);

Tensor render_shape(ShapeClass cls, std::uint64_t seed);

/// Pastes `count` copies of the bitmap at uniform random positions fully
/// inside the image (later copies overwrite earlier ones).
Tensor apply_stickers(const Tensor& image, const StickerPattern& sticker, std::size_t count, std::uint64_t seed);

/// Stickers every image; image i uses seed mix_seed(seed, i).
LabeledDataset apply_stickers(const LabeledDataset& ds, const StickerPattern& sticker, std::size_t count,
                              std::uint64_t seed);

inline constexpr std::size_t kDefaultStickerCount = 3;

// Dataset manifest: {"seed": N, "n": N, "split": "train"|"val"}.
struct DatasetManifest {
    std::uint64_t seed = 0;
    std::size_t n = 0;
    Split split = Split::Train;
};
std::string dataset_manifest_json(const DatasetManifest& m);
DatasetManifest parse_dataset_manifest(const std::string& text);

// Raster I/O (8-bit PNG, non-interlaced).

/// Bilinear resample of an HxW (or 1xHxW) map with half-pixel centers and
/// edge clamping. Returns out_h x out_w.
Tensor64 resize_bilinear(const Tensor64& map, std::size_t out_h, std::size_t out_w);

/// 8-bit quantization: round(clamp(v, 0, 1) * 255).
std::uint8_t quantize(double v);

void write_gray_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& pixels);
void write_rgb_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
                   const std::vector<std::uint8_t>& pixels);

/// Heatmap upsampled bilinearly to out_size x out_size. Without a base image
/// the PNG is grayscale; with one it is RGB with R = G = base, B = heatmap.
void write_heatmap_png(const Tensor64& heatmap, const std::optional<Tensor64>& base_image,
                       const std::filesystem::path& path, std::size_t out_size = kImageSize);

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
};

/// Any PNG, converted to 8-bit grayscale.
GrayImage read_png_gray(const std::filesystem::path& path);

/// PNG as a 1xHxW tensor in [0,1].
Tensor64 read_png_tensor(const std::filesystem::path& path);

/// Image rescaled to size x size (bilinear) and clamped to [0,1]; used for
/// model inputs and T2 targets.
Tensor64 load_image_resized(const std::filesystem::path& path, std::size_t size);

/// Bitmap from a PNG, pixel > 0.5 -> 1.
StickerPattern load_sticker_png(const std::filesystem::path& path);

void write_image_png(const Tensor64& image, const std::filesystem::path& path);

}  // namespace gcam
