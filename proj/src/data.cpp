#include "gcam/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <json.hpp>
#include <png.h>

#include "gcam/rng.hpp"

namespace gcam {

const char* split_name(Split s) { return s == Split::Train ? "train" : "val"; }

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    throw InvalidArgument("unknown split '" + s + "'");
}

std::uint64_t item_seed(std::uint64_t seed, Split split, std::size_t index) {
    const std::uint64_t salt = split == Split::Train ? 0x7472616EULL : 0x76616CULL;
    return mix_seed(mix_seed(seed, salt), index);
}

Tensor render_shape(ShapeClass cls, std::uint64_t seed) {
    Xorshift64Star rng(seed);
    const double n = static_cast<double>(kImageSize);
    const double r = rng.uniform(6.0, 11.0);
    const double cx = rng.uniform(r + 1.0, n - r - 1.0);
    const double cy = rng.uniform(r + 1.0, n - r - 1.0);
    Tensor img({1, kImageSize, kImageSize});
    for (std::size_t y = 0; y < kImageSize; ++y)
        for (std::size_t x = 0; x < kImageSize; ++x) {
            const double px = static_cast<double>(x) + 0.5 - cx;
            const double py = static_cast<double>(y) + 0.5 - cy;
            bool inside = false;
            switch (cls) {
                case ShapeClass::Disc: inside = px * px + py * py <= r * r; break;
                case ShapeClass::Square: inside = std::abs(px) <= 0.8 * r && std::abs(py) <= 0.8 * r; break;
                case ShapeClass::Cross: {
                    const double t = r / 3.0;
                    inside = (std::abs(px) <= t && std::abs(py) <= r) || (std::abs(py) <= t && std::abs(px) <= r);
                    break;
                }
                case ShapeClass::Triangle: inside = py >= -r && py <= r && std::abs(px) <= (py + r) * 0.5; break;
            }
            const double v = (inside ? 1.0 : 0.0) + rng.uniform(-0.1, 0.1);
            img.at(0, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    return img;
}

LabeledDataset gen_shapes(std::uint64_t seed, std::size_t n, Split split) {
    if (n == 0) throw InvalidArgument("dataset size must be positive");
    LabeledDataset ds;
    ds.split = split;
    ds.seed = seed;
    ds.images.reserve(n);
    ds.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % kShapeClassCount;
        ds.images.push_back(render_shape(static_cast<ShapeClass>(label), item_seed(seed, split, i)));
        ds.labels.push_back(label);
    }
    return ds;
}

Tensor apply_stickers(const Tensor& image, const StickerPattern& sticker, std::size_t count, std::uint64_t seed) {
    if (image.rank() != 3) throw DimensionError("rank", "image must be CxHxW");
    if (count == 0) throw InvalidArgument("sticker count must be at least 1");
    const std::size_t H = image.dim(1), W = image.dim(2);
    if (sticker.height() > H) throw DimensionError("height", "sticker taller than image");
    if (sticker.width() > W) throw DimensionError("width", "sticker wider than image");
    Xorshift64Star rng(seed);
    Tensor out = image;
    for (std::size_t s = 0; s < count; ++s) {
        const std::size_t top = rng.below(H - sticker.height() + 1);
        const std::size_t left = rng.below(W - sticker.width() + 1);
        for (std::size_t c = 0; c < image.dim(0); ++c)
            for (std::size_t r = 0; r < sticker.height(); ++r)
                for (std::size_t q = 0; q < sticker.width(); ++q)
                    out.at(c, top + r, left + q) = static_cast<float>(sticker.at(r, q));
    }
    return out;
}

LabeledDataset apply_stickers(const LabeledDataset& ds, const StickerPattern& sticker, std::size_t count,
                              std::uint64_t seed) {
    LabeledDataset out = ds;
    for (std::size_t i = 0; i < out.images.size(); ++i)
        out.images[i] = apply_stickers(ds.images[i], sticker, count, mix_seed(seed, i));
    return out;
}

std::string dataset_manifest_json(const DatasetManifest& m) {
    nlohmann::json j = {{"seed", m.seed}, {"n", m.n}, {"split", split_name(m.split)}};
    return j.dump();
}

DatasetManifest parse_dataset_manifest(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        return {j.at("seed").get<std::uint64_t>(), j.at("n").get<std::size_t>(),
                parse_split(j.at("split").get<std::string>())};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed dataset manifest: ") + e.what());
    }
}

Tensor64 resize_bilinear(const Tensor64& map, std::size_t out_h, std::size_t out_w) {
    if (map.rank() != 2 && !(map.rank() == 3 && map.dim(0) == 1))
        throw DimensionError("rank", "bilinear resize expects an HxW map");
    const std::size_t H = map.dim(map.rank() - 2), W = map.dim(map.rank() - 1);
    const auto src = map.data();
    Tensor64 out({out_h, out_w});
    const double sy = static_cast<double>(H) / static_cast<double>(out_h);
    const double sx = static_cast<double>(W) / static_cast<double>(out_w);
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        const double fy = std::clamp((static_cast<double>(oy) + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, H - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            const double fx =
                std::clamp((static_cast<double>(ox) + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, W - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = src[y0 * W + x0] * (1 - wx) + src[y0 * W + x1] * wx;
            const double bot = src[y1 * W + x0] * (1 - wx) + src[y1 * W + x1] * wx;
            out[oy * out_w + ox] = top * (1 - wy) + bot * wy;
        }
    }
    return out;
}

std::uint8_t quantize(double v) {
    if (!(v > 0.0)) return 0;
    if (v >= 1.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height, int color_type,
               std::size_t channels, const std::vector<std::uint8_t>& pixels) {
    if (pixels.size() != width * height * channels)
        throw DimensionError("pixels", "pixel buffer does not match image extents");
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("cannot open '" + path.string() + "' for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    std::vector<png_bytep> rows(height);
    for (std::size_t r = 0; r < height; ++r)
        rows[r] = const_cast<png_bytep>(pixels.data() + r * width * channels);
    volatile bool failed = false;
    if (setjmp(png_jmpbuf(png))) {
        failed = true;
    } else {
        png_init_io(png, fp.get());
        png_set_compression_level(png, 9);
        png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
        png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        png_write_image(png, rows.data());
        png_write_end(png, nullptr);
    }
    png_destroy_write_struct(&png, &info);
    if (failed || std::fflush(fp.get()) != 0) throw IoError("writing PNG '" + path.string() + "' failed");
}

}  // namespace

void write_gray_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& pixels) {
    write_png(path, width, height, PNG_COLOR_TYPE_GRAY, 1, pixels);
}

void write_rgb_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
                   const std::vector<std::uint8_t>& pixels) {
    write_png(path, width, height, PNG_COLOR_TYPE_RGB, 3, pixels);
}

void write_heatmap_png(const Tensor64& heatmap, const std::optional<Tensor64>& base_image,
                       const std::filesystem::path& path, std::size_t out_size) {
    const Tensor64 up = resize_bilinear(heatmap, out_size, out_size);
    if (!base_image) {
        std::vector<std::uint8_t> px(up.size());
        for (std::size_t i = 0; i < up.size(); ++i) px[i] = quantize(up[i]);
        write_gray_png(path, out_size, out_size, px);
        return;
    }
    const Tensor64 base = resize_bilinear(*base_image, out_size, out_size);
    std::vector<std::uint8_t> px(up.size() * 3);
    for (std::size_t i = 0; i < up.size(); ++i) {
        const std::uint8_t g = quantize(base[i]);
        px[3 * i] = g;
        px[3 * i + 1] = g;
        px[3 * i + 2] = quantize(up[i]);
    }
    write_rgb_png(path, out_size, out_size, px);
}

void write_image_png(const Tensor64& image, const std::filesystem::path& path) {
    const std::size_t H = image.dim(image.rank() - 2), W = image.dim(image.rank() - 1);
    std::vector<std::uint8_t> px(H * W);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = quantize(image[i]);
    write_gray_png(path, W, H, px);
}

GrayImage read_png_gray(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        throw IoError("cannot read PNG '" + path.string() + "': " + image.message);
    image.format = PNG_FORMAT_GRAY;
    GrayImage out;
    out.width = image.width;
    out.height = image.height;
    out.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError("cannot decode PNG '" + path.string() + "': " + image.message);
    }
    return out;
}

Tensor64 read_png_tensor(const std::filesystem::path& path) {
    const GrayImage g = read_png_gray(path);
    Tensor64 t({1, g.height, g.width});
    for (std::size_t i = 0; i < g.pixels.size(); ++i) t[i] = g.pixels[i] / 255.0;
    return t;
}

Tensor64 load_image_resized(const std::filesystem::path& path, std::size_t size) {
    const Tensor64 img = read_png_tensor(path);
    Tensor64 r = (img.dim(1) == size && img.dim(2) == size) ? img.reshaped({size, size})
                                                              : resize_bilinear(img, size, size);
    for (auto& v : r.data()) v = std::clamp(v, 0.0, 1.0);
    return r.reshaped({1, size, size});
}

StickerPattern load_sticker_png(const std::filesystem::path& path) {
    const GrayImage g = read_png_gray(path);
    std::vector<std::uint8_t> bits(g.pixels.size());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = g.pixels[i] > 127 ? 1 : 0;
    return StickerPattern(g.height, g.width, std::move(bits));
}

}  // namespace gcam
