#include "gcam/gcam.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <string>
#include <variant>

#include "gcam/data.hpp"
#include "gcam/eval.hpp"
#include "gcam/gradcam.hpp"
#include "gcam/serialize.hpp"
#include "gcam/surgery.hpp"
#include "gcam/train.hpp"

struct gcam_model {
    std::variant<gcam::Model<float>, gcam::Model<double>> model;
};

struct gcam_dataset {
    gcam::LabeledDataset data;
};

struct gcam_report {
    gcam::EvalReport report;
    std::string table;
    std::string violations;
};

namespace {

thread_local std::string last_error;

gcam_status fail(gcam_status status, const std::string& message) {
    last_error = message;
    return status;
}

template <typename F>
gcam_status guarded(F&& body) {
    try {
        body();
        return GCAM_OK;
    } catch (const gcam::DimensionError& e) {
        return fail(GCAM_ERR_DIMENSION, e.what());
    } catch (const gcam::GraphError& e) {
        return fail(GCAM_ERR_GRAPH, e.what());
    } catch (const gcam::FormatError& e) {
        return fail(GCAM_ERR_FORMAT, e.what());
    } catch (const gcam::IoError& e) {
        return fail(GCAM_ERR_IO, e.what());
    } catch (const gcam::UnsupportedArchitectureError& e) {
        return fail(GCAM_ERR_UNSUPPORTED_ARCHITECTURE, e.what());
    } catch (const gcam::SurgeryError& e) {
        return fail(GCAM_ERR_SURGERY, e.what());
    } catch (const gcam::TrainingError& e) {
        return fail(GCAM_ERR_TRAINING, e.what());
    } catch (const gcam::InvalidArgument& e) {
        return fail(GCAM_ERR_INVALID_ARGUMENT, e.what());
    } catch (const std::exception& e) {
        return fail(GCAM_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(GCAM_ERR_INTERNAL, "unknown error");
    }
}

void require(bool cond, const char* what) {
    if (!cond) throw gcam::InvalidArgument(what);
}

gcam::Tensor64 input_tensor(const gcam::Shape& shape, const double* input, std::size_t len) {
    require(input != nullptr, "input is NULL");
    if (len != gcam::shape_volume(shape))
        throw gcam::DimensionError("input", "expected " + std::to_string(gcam::shape_volume(shape)) +
                                                " input values, got " + std::to_string(len));
    return gcam::Tensor64(shape, std::vector<double>(input, input + len));
}

gcam_technique to_c(gcam::Technique t) { return static_cast<gcam_technique>(static_cast<int>(t) + 1); }

gcam::Technique from_c(gcam_technique t) {
    require(t >= GCAM_T1 && t <= GCAM_T4, "technique must be GCAM_T1..GCAM_T4");
    return static_cast<gcam::Technique>(static_cast<int>(t) - 1);
}

void copy_tag(char (&dst)[16], const std::string& src) {
    std::memset(dst, 0, sizeof dst);
    std::strncpy(dst, src.c_str(), sizeof dst - 1);
}

}  // namespace

extern "C" {

const char* gcam_last_error(void) { return last_error.c_str(); }

const char* gcam_status_string(gcam_status status) {
    switch (status) {
        case GCAM_OK: return "ok";
        case GCAM_ERR_INVALID_ARGUMENT: return "invalid argument";
        case GCAM_ERR_DIMENSION: return "dimension error";
        case GCAM_ERR_GRAPH: return "graph error";
        case GCAM_ERR_FORMAT: return "format error";
        case GCAM_ERR_IO: return "I/O error";
        case GCAM_ERR_SURGERY: return "surgery error";
        case GCAM_ERR_UNSUPPORTED_ARCHITECTURE: return "unsupported architecture";
        case GCAM_ERR_TRAINING: return "training error";
        case GCAM_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

gcam_status gcam_model_build_minivgg(uint64_t seed, gcam_dtype dtype, gcam_model** out) {
    return guarded([&] {
        require(out != nullptr, "out is NULL");
        auto m = std::make_unique<gcam_model>();
        if (dtype == GCAM_F64)
            m->model = gcam::build_minivgg<double>(seed);
        else
            m->model = gcam::build_minivgg<float>(seed);
        *out = m.release();
    });
}

gcam_status gcam_model_load(const char* path, gcam_model** out) {
    return guarded([&] {
        require(path && out, "path/out is NULL");
        const auto bytes = gcam::read_file_bytes(path);
        auto m = std::make_unique<gcam_model>();
        if (gcam::encoded_dtype(bytes) == gcam::DType::F64)
            m->model = gcam::decode_model<double>(bytes);
        else
            m->model = gcam::decode_model<float>(bytes);
        *out = m.release();
    });
}

gcam_status gcam_model_save(const gcam_model* model, const char* path) {
    return guarded([&] {
        require(model && path, "model/path is NULL");
        std::visit([&](const auto& m) { gcam::save_model(m, path); }, model->model);
    });
}

gcam_status gcam_model_cast(const gcam_model* model, gcam_dtype dtype, gcam_model** out) {
    return guarded([&] {
        require(model && out, "model/out is NULL");
        auto m = std::make_unique<gcam_model>();
        if (dtype == GCAM_F64)
            m->model = std::visit([](const auto& src) { return gcam::cast_model<double>(src); }, model->model);
        else
            m->model = std::visit([](const auto& src) { return gcam::cast_model<float>(src); }, model->model);
        *out = m.release();
    });
}

gcam_status gcam_model_info_get(const gcam_model* model, gcam_model_info* out) {
    return guarded([&] {
        require(model && out, "model/out is NULL");
        std::visit(
            [&](const auto& m) {
                const gcam::ModelMeta meta = gcam::validate_model(m);
                out->dtype = std::holds_alternative<gcam::Model<double>>(model->model) ? GCAM_F64 : GCAM_F32;
                out->input_channels = m.input_shape[0];
                out->input_height = m.input_shape[1];
                out->input_width = m.input_shape[2];
                out->channels = meta.channels;
                out->a_height = meta.a_height;
                out->a_width = meta.a_width;
                out->z_pixels = meta.z_pixels;
                out->class_count = meta.class_count;
                out->technique = m.attack ? to_c(m.attack->technique) : GCAM_NONE;
            },
            model->model);
    });
}

void gcam_model_free(gcam_model* model) { delete model; }

gcam_status gcam_model_forward(const gcam_model* model, const double* input, size_t input_len, double* scores,
                               size_t scores_len) {
    return guarded([&] {
        require(model && scores, "model/scores is NULL");
        std::visit(
            [&](const auto& m) {
                using M = std::decay_t<decltype(m)>;
                const gcam::Tensor64 x = input_tensor(m.input_shape, input, input_len);
                gcam::Tensor64 y({1});
                if constexpr (std::is_same_v<M, gcam::Model<double>>)
                    y = gcam::forward_full(m, x).y;
                else
                    y = gcam::forward_full(m, x.cast<float>()).y.template cast<double>();
                if (scores_len < y.size()) throw gcam::DimensionError("scores", "score buffer too small");
                std::copy(y.data().begin(), y.data().end(), scores);
            },
            model->model);
    });
}

gcam_status gcam_dataset_generate(uint64_t seed, size_t n, gcam_split split, gcam_dataset** out) {
    return guarded([&] {
        require(out != nullptr, "out is NULL");
        auto ds = std::make_unique<gcam_dataset>();
        ds->data = gcam::gen_shapes(seed, n, split == GCAM_SPLIT_VAL ? gcam::Split::Val : gcam::Split::Train);
        *out = ds.release();
    });
}

gcam_status gcam_dataset_apply_stickers(const gcam_dataset* ds, const uint8_t* bitmap, size_t height, size_t width,
                                        size_t count, uint64_t seed, gcam_dataset** out) {
    return guarded([&] {
        require(ds && out, "dataset/out is NULL");
        const gcam::StickerPattern sticker =
            bitmap ? gcam::StickerPattern(height, width, std::vector<uint8_t>(bitmap, bitmap + height * width))
                   : gcam::default_smiley();
        auto res = std::make_unique<gcam_dataset>();
        res->data = gcam::apply_stickers(ds->data, sticker, count, seed);
        *out = res.release();
    });
}

size_t gcam_dataset_size(const gcam_dataset* ds) { return ds ? ds->data.size() : 0; }

gcam_status gcam_dataset_image(const gcam_dataset* ds, size_t index, double* pixels, size_t pixels_len,
                               size_t* label) {
    return guarded([&] {
        require(ds && pixels, "dataset/pixels is NULL");
        if (index >= ds->data.size()) throw gcam::DimensionError("index", "dataset index out of range");
        const auto& img = ds->data.images[index];
        if (pixels_len < img.size()) throw gcam::DimensionError("pixels", "pixel buffer too small");
        std::copy(img.data().begin(), img.data().end(), pixels);
        if (label) *label = ds->data.labels[index];
    });
}

void gcam_dataset_free(gcam_dataset* ds) { delete ds; }

void gcam_train_options_default(gcam_train_options* options) {
    if (!options) return;
    const gcam::TrainOptions d;
    options->epochs = d.epochs;
    options->lr = d.lr;
    options->batch_size = d.batch_size;
    options->seed = d.seed;
}

gcam_status gcam_train(const gcam_model* model, const gcam_dataset* train, const gcam_train_options* options,
                       gcam_model** out) {
    return guarded([&] {
        require(model && train && options && out, "NULL argument");
        gcam::TrainOptions o;
        o.epochs = options->epochs;
        o.lr = options->lr;
        o.batch_size = options->batch_size;
        o.seed = options->seed;
        auto res = std::make_unique<gcam_model>();
        std::visit([&](const auto& m) { res->model = gcam::train_sgd(m, train->data, o); }, model->model);
        *out = res.release();
    });
}

gcam_status gcam_accuracy(const gcam_model* model, const gcam_dataset* ds, double* out) {
    return guarded([&] {
        require(model && ds && out, "NULL argument");
        std::visit([&](const auto& m) { *out = gcam::accuracy(m, ds->data); }, model->model);
    });
}

gcam_status gcam_attack_config_default(gcam_technique technique, gcam_attack_config* out) {
    return guarded([&] {
        require(out != nullptr, "out is NULL");
        const gcam::AttackConfig d = gcam::AttackConfig::defaults_for(from_c(technique));
        *out = gcam_attack_config{d.c_A, d.c_W, d.c_I, d.epsilon, d.c_G, d.c_F, d.f_seed, nullptr, 0, 0, nullptr, 0, 0};
    });
}

gcam_status gcam_attack(const gcam_model* model, gcam_technique technique, const gcam_attack_config* cfg,
                        gcam_model** out) {
    return guarded([&] {
        require(model && cfg && out, "NULL argument");
        const gcam::Technique t = from_c(technique);
        gcam::AttackConfig c;
        c.c_A = cfg->c_A;
        c.c_W = cfg->c_W;
        c.c_I = cfg->c_I;
        c.epsilon = cfg->epsilon;
        c.c_G = cfg->c_G;
        c.c_F = cfg->c_F;
        c.f_seed = cfg->f_seed;
        if (cfg->target)
            c.target = gcam::Tensor64({1, cfg->target_height, cfg->target_width},
                                      std::vector<double>(cfg->target, cfg->target + cfg->target_height * cfg->target_width));
        if (t == gcam::Technique::T4)
            c.sticker = cfg->sticker ? gcam::StickerPattern(cfg->sticker_height, cfg->sticker_width,
                                                            std::vector<uint8_t>(cfg->sticker, cfg->sticker +
                                                                                     cfg->sticker_height *
                                                                                         cfg->sticker_width))
                                     : gcam::default_smiley();
        auto res = std::make_unique<gcam_model>();
        std::visit([&](const auto& m) { res->model = gcam::apply_attack(m, t, c); }, model->model);
        *out = res.release();
    });
}

gcam_status gcam_explain(const gcam_model* model, const double* input, size_t input_len, long class_index,
                         double* heatmap, size_t heatmap_len, gcam_explanation* info) {
    return guarded([&] {
        require(model && heatmap, "model/heatmap is NULL");
        std::visit(
            [&](const auto& m) {
                using M = std::decay_t<decltype(m)>;
                using T = std::conditional_t<std::is_same_v<M, gcam::Model<double>>, double, float>;
                const gcam::ModelMeta meta = gcam::validate_model(m);
                std::optional<std::size_t> cls;
                if (class_index >= 0) {
                    if (static_cast<std::size_t>(class_index) >= meta.class_count)
                        throw gcam::InvalidArgument("class " + std::to_string(class_index) + " out of range (" +
                                                    std::to_string(meta.class_count) + " classes)");
                    cls = static_cast<std::size_t>(class_index);
                }
                const auto x = input_tensor(m.input_shape, input, input_len).template cast<T>();
                const auto r = gcam::explain(m, x, cls);
                if (heatmap_len < r.heatmap_norm.size()) throw gcam::DimensionError("heatmap", "heatmap buffer too small");
                for (std::size_t i = 0; i < r.heatmap_norm.size(); ++i) heatmap[i] = r.heatmap_norm[i];
                if (info) *info = gcam_explanation{r.class_index, meta.a_height, meta.a_width, r.collapsed() ? 1 : 0};
            },
            model->model);
    });
}

gcam_status gcam_write_heatmap_png(const double* heatmap, size_t height, size_t width, const double* base,
                                   size_t base_height, size_t base_width, size_t out_size, const char* path) {
    return guarded([&] {
        require(heatmap && path, "heatmap/path is NULL");
        const gcam::Tensor64 h({height, width}, std::vector<double>(heatmap, heatmap + height * width));
        for (double v : h.data())
            if (!(v >= 0.0 && v <= 1.0)) throw gcam::InvalidArgument("heatmap values must lie in [0,1]");
        std::optional<gcam::Tensor64> b;
        if (base) b = gcam::Tensor64({base_height, base_width}, std::vector<double>(base, base + base_height * base_width));
        gcam::write_heatmap_png(h, b, path, out_size);
    });
}

gcam_status gcam_read_png_resized(const char* path, size_t size, double* out, size_t out_len) {
    return guarded([&] {
        require(path && out, "path/out is NULL");
        const gcam::Tensor64 img = gcam::load_image_resized(path, size);
        if (out_len < img.size()) throw gcam::DimensionError("pixels", "output buffer too small");
        std::copy(img.data().begin(), img.data().end(), out);
    });
}

gcam_status gcam_read_sticker_png(const char* path, uint8_t* bitmap, size_t capacity, size_t* height, size_t* width) {
    return guarded([&] {
        require(path && height && width, "NULL argument");
        const gcam::StickerPattern s = gcam::load_sticker_png(path);
        *height = s.height();
        *width = s.width();
        if (bitmap) {
            if (capacity < s.pixel_count()) throw gcam::DimensionError("sticker", "bitmap buffer too small");
            std::copy(s.bitmap().begin(), s.bitmap().end(), bitmap);
        }
    });
}

gcam_status gcam_default_sticker(uint8_t* bitmap, size_t capacity, size_t* height, size_t* width) {
    return guarded([&] {
        require(height && width, "NULL argument");
        const gcam::StickerPattern s = gcam::default_smiley();
        *height = s.height();
        *width = s.width();
        if (bitmap) {
            if (capacity < s.pixel_count()) throw gcam::DimensionError("sticker", "bitmap buffer too small");
            std::copy(s.bitmap().begin(), s.bitmap().end(), bitmap);
        }
    });
}

gcam_status gcam_write_image_png(const double* pixels, size_t height, size_t width, const char* path) {
    return guarded([&] {
        require(pixels && path, "pixels/path is NULL");
        gcam::write_image_png(gcam::Tensor64({height, width}, std::vector<double>(pixels, pixels + height * width)),
                              path);
    });
}

gcam_status gcam_evaluate(const gcam_model* original, const gcam_model* const* attacked, size_t n_attacked,
                          const gcam_dataset* clean, const gcam_dataset* stickered, gcam_report** out,
                          size_t* violations) {
    return guarded([&] {
        require(original && clean && out, "NULL argument");
        require(n_attacked == 0 || attacked != nullptr, "attacked is NULL");
        auto rep = std::make_unique<gcam_report>();
        std::vector<gcam::AttackRecord> records;
        std::visit(
            [&](const auto& orig) {
                using M = std::decay_t<decltype(orig)>;
                std::vector<const M*> models;
                for (size_t i = 0; i < n_attacked; ++i) {
                    require(attacked[i] != nullptr, "attacked model is NULL");
                    const M* m = std::get_if<M>(&attacked[i]->model);
                    if (!m) throw gcam::InvalidArgument("attacked model dtype differs from the original's");
                    if (!m->attack) throw gcam::InvalidArgument("attacked model carries no attack record");
                    models.push_back(m);
                    records.push_back(*m->attack);
                }
                rep->report = gcam::run_report(orig, models, clean->data, stickered ? &stickered->data : nullptr);
            },
            original->model);
        rep->table = gcam::render_report_table(rep->report);
        const auto v = gcam::score_bound_violations(rep->report, records);
        for (const auto& msg : v) rep->violations += msg + "\n";
        if (violations) *violations = v.size();
        *out = rep.release();
    });
}

size_t gcam_report_row_count(const gcam_report* report) { return report ? report->report.rows.size() : 0; }

gcam_status gcam_report_row_get(const gcam_report* report, size_t index, gcam_report_row* out) {
    return guarded([&] {
        require(report && out, "report/out is NULL");
        if (index >= report->report.rows.size()) throw gcam::DimensionError("row", "report row out of range");
        const auto& r = report->report.rows[index];
        const double nan = std::numeric_limits<double>::quiet_NaN();
        copy_tag(out->model_tag, r.model_tag);
        copy_tag(out->dataset_tag, r.dataset_tag);
        out->accuracy = r.accuracy;
        out->score_drift = r.score_drift.value_or(nan);
        out->heatmap_dist = r.heatmap_dist.value_or(nan);
        out->zero_heatmap_fraction = r.zero_heatmap_fraction;
        out->dominance_ratio = r.dominance_ratio.value_or(nan);
    });
}

gcam_status gcam_report_write_csv(const gcam_report* report, const char* path) {
    return guarded([&] {
        require(report && path, "report/path is NULL");
        gcam::write_report_csv(report->report, path);
    });
}

const char* gcam_report_table(const gcam_report* report) { return report ? report->table.c_str() : ""; }

const char* gcam_report_violations(const gcam_report* report) { return report ? report->violations.c_str() : ""; }

void gcam_report_free(gcam_report* report) { delete report; }

}  // extern "C"
