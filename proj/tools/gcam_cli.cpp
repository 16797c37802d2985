// gcam: train, attack, explain and evaluate models through the C API.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gcam/gcam.h"

namespace {

enum Exit { kOk = 0, kRuntime = 1, kUsage = 2, kInvariant = 3 };

struct Failure {
    int code;
    std::string message;
};

void check(gcam_status s, const std::string& what) {
    if (s != GCAM_OK)
        throw Failure{kRuntime, what + ": " + gcam_status_string(s) + ": " + gcam_last_error()};
}

[[noreturn]] void usage(const std::string& message) { throw Failure{kUsage, message}; }

struct ModelDeleter {
    void operator()(gcam_model* m) const { gcam_model_free(m); }
};
struct DatasetDeleter {
    void operator()(gcam_dataset* d) const { gcam_dataset_free(d); }
};
struct ReportDeleter {
    void operator()(gcam_report* r) const { gcam_report_free(r); }
};
using ModelPtr = std::unique_ptr<gcam_model, ModelDeleter>;
using DatasetPtr = std::unique_ptr<gcam_dataset, DatasetDeleter>;
using ReportPtr = std::unique_ptr<gcam_report, ReportDeleter>;

ModelPtr load_model(const std::string& path) {
    gcam_model* m = nullptr;
    check(gcam_model_load(path.c_str(), &m), "loading " + path);
    return ModelPtr(m);
}

gcam_model_info info_of(const gcam_model* m) {
    gcam_model_info info{};
    check(gcam_model_info_get(m, &info), "inspecting model");
    return info;
}

DatasetPtr generate(std::uint64_t seed, std::size_t n, gcam_split split) {
    gcam_dataset* d = nullptr;
    check(gcam_dataset_generate(seed, n, split, &d), "generating dataset");
    return DatasetPtr(d);
}

struct Sticker {
    std::vector<std::uint8_t> bitmap;
    std::size_t height = 0, width = 0;
};

Sticker read_sticker(const std::string& path) {
    Sticker s;
    check(gcam_read_sticker_png(path.c_str(), nullptr, 0, &s.height, &s.width), "reading sticker " + path);
    s.bitmap.resize(s.height * s.width);
    check(gcam_read_sticker_png(path.c_str(), s.bitmap.data(), s.bitmap.size(), &s.height, &s.width),
          "reading sticker " + path);
    return s;
}

Sticker builtin_sticker() {
    Sticker s;
    check(gcam_default_sticker(nullptr, 0, &s.height, &s.width), "default sticker");
    s.bitmap.resize(s.height * s.width);
    check(gcam_default_sticker(s.bitmap.data(), s.bitmap.size(), &s.height, &s.width), "default sticker");
    return s;
}

DatasetPtr stickered(const gcam_dataset* clean, const std::optional<Sticker>& sticker, std::uint64_t seed) {
    gcam_dataset* d = nullptr;
    const std::uint8_t* bits = sticker ? sticker->bitmap.data() : nullptr;
    check(gcam_dataset_apply_stickers(clean, bits, sticker ? sticker->height : 0, sticker ? sticker->width : 0, 3,
                                      seed, &d),
          "applying stickers");
    return DatasetPtr(d);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

// ---- train ------------------------------------------------------------

struct TrainArgs {
    std::string out;
    std::uint64_t seed = 0;
    int epochs = 10;
    double lr = 0.05;
    std::size_t batch_size = 16;
    std::size_t train_n = 2000;
    std::size_t val_n = 500;
    std::string dtype = "f32";
};

int run_train(const TrainArgs& a) {
    const gcam_dtype dtype = a.dtype == "f64" ? GCAM_F64 : GCAM_F32;
    gcam_model* init = nullptr;
    check(gcam_model_build_minivgg(a.seed, dtype, &init), "building model");
    ModelPtr fresh(init);
    DatasetPtr train = generate(a.seed, a.train_n, GCAM_SPLIT_TRAIN);

    gcam_train_options opts;
    gcam_train_options_default(&opts);
    opts.epochs = a.epochs;
    opts.lr = a.lr;
    opts.batch_size = a.batch_size;
    opts.seed = a.seed;
    gcam_model* trained = nullptr;
    check(gcam_train(fresh.get(), train.get(), &opts, &trained), "training");
    ModelPtr model(trained);
    check(gcam_model_save(model.get(), a.out.c_str()), "writing " + a.out);

    if (a.val_n > 0) {
        DatasetPtr val = generate(a.seed, a.val_n, GCAM_SPLIT_VAL);
        double acc = 0;
        check(gcam_accuracy(model.get(), val.get(), &acc), "evaluating");
        std::printf("val_accuracy %.5f\n", acc);
    }
    return kOk;
}

// ---- attack -----------------------------------------------------------

struct AttackArgs {
    std::string model, out, technique, target, sticker;
    std::optional<double> c_A, c_W, c_I, epsilon, c_G, c_F;
    std::uint64_t seed = 0;
};

int run_attack(const AttackArgs& a) {
    gcam_technique t = GCAM_NONE;
    if (a.technique == "t1" || a.technique == "T1") t = GCAM_T1;
    else if (a.technique == "t2" || a.technique == "T2") t = GCAM_T2;
    else if (a.technique == "t3" || a.technique == "T3") t = GCAM_T3;
    else if (a.technique == "t4" || a.technique == "T4") t = GCAM_T4;
    else usage("--technique must be one of t1, t2, t3, t4");
    if (t == GCAM_T2 && a.target.empty()) usage("t2 requires --target PNG");
    if (t == GCAM_T4 && a.sticker.empty()) usage("t4 requires --sticker PNG");

    ModelPtr model = load_model(a.model);
    const gcam_model_info info = info_of(model.get());

    gcam_attack_config cfg;
    check(gcam_attack_config_default(t, &cfg), "attack defaults");
    if (a.c_A) cfg.c_A = *a.c_A;
    if (a.c_W) cfg.c_W = *a.c_W;
    if (a.c_I) cfg.c_I = *a.c_I;
    if (a.epsilon) cfg.epsilon = *a.epsilon;
    if (a.c_G) cfg.c_G = *a.c_G;
    if (a.c_F) cfg.c_F = *a.c_F;
    cfg.f_seed = a.seed;

    std::vector<double> target;
    if (t == GCAM_T2) {
        if (info.a_height != info.a_width) usage("t2 target requires a square hook resolution");
        target.resize(info.a_height * info.a_width);
        check(gcam_read_png_resized(a.target.c_str(), info.a_height, target.data(), target.size()),
              "reading target " + a.target);
        cfg.target = target.data();
        cfg.target_height = info.a_height;
        cfg.target_width = info.a_width;
    }
    Sticker sticker;
    if (t == GCAM_T4) {
        sticker = read_sticker(a.sticker);
        cfg.sticker = sticker.bitmap.data();
        cfg.sticker_height = sticker.height;
        cfg.sticker_width = sticker.width;
    }

    gcam_model* attacked = nullptr;
    check(gcam_attack(model.get(), t, &cfg, &attacked), "attack");
    ModelPtr out(attacked);
    check(gcam_model_save(out.get(), a.out.c_str()), "writing " + a.out);
    return kOk;
}

// ---- explain ----------------------------------------------------------

struct ExplainArgs {
    std::string model, image, klass = "argmax", out;
    bool overlay = false;
    std::uint64_t seed = 0;
};

int run_explain(const ExplainArgs& a) {
    ModelPtr model = load_model(a.model);
    const gcam_model_info info = info_of(model.get());

    long cls = -1;
    if (a.klass != "argmax") {
        std::size_t used = 0;
        try {
            cls = std::stol(a.klass, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != a.klass.size() || cls < 0) usage("--class must be 'argmax' or a non-negative integer");
        if (static_cast<std::size_t>(cls) >= info.class_count)
            usage("--class " + a.klass + " out of range (model has " + std::to_string(info.class_count) +
                  " classes)");
    }
    if (info.input_channels != 1 || info.input_height != info.input_width)
        usage("explain supports square single-channel models only");

    const std::size_t side = info.input_height;
    std::vector<double> x(side * side);
    check(gcam_read_png_resized(a.image.c_str(), side, x.data(), x.size()), "reading " + a.image);

    std::vector<double> heat(info.a_height * info.a_width);
    gcam_explanation ex{};
    check(gcam_explain(model.get(), x.data(), x.size(), cls, heat.data(), heat.size(), &ex), "explain");
    check(gcam_write_heatmap_png(heat.data(), ex.height, ex.width, a.overlay ? x.data() : nullptr, side, side, side,
                                 a.out.c_str()),
          "writing " + a.out);
    std::printf("class %zu%s\n", ex.class_index, ex.collapsed ? " (heatmap collapsed to zero)" : "");
    return kOk;
}

// ---- eval -------------------------------------------------------------

struct EvalArgs {
    std::string original, attacked, report, sticker;
    std::uint64_t seed = 0;
    std::size_t val_n = 500;
    bool stickers = false;
};

int run_eval(const EvalArgs& a) {
    ModelPtr original = load_model(a.original);
    std::vector<ModelPtr> attacked;
    for (const auto& path : split_list(a.attacked)) attacked.push_back(load_model(path));
    std::vector<const gcam_model*> handles;
    for (const auto& m : attacked) handles.push_back(m.get());

    DatasetPtr clean = generate(a.seed, a.val_n, GCAM_SPLIT_VAL);
    DatasetPtr stick;
    if (a.stickers) {
        std::optional<Sticker> s;
        if (!a.sticker.empty()) s = read_sticker(a.sticker);
        stick = stickered(clean.get(), s, a.seed);
    }

    gcam_report* rep = nullptr;
    std::size_t violations = 0;
    check(gcam_evaluate(original.get(), handles.data(), handles.size(), clean.get(), stick.get(), &rep, &violations),
          "evaluation");
    ReportPtr report(rep);
    std::fputs(gcam_report_table(report.get()), stdout);
    if (!a.report.empty()) check(gcam_report_write_csv(report.get(), a.report.c_str()), "writing " + a.report);
    if (violations > 0) {
        std::fprintf(stderr, "score bound violated:\n%s", gcam_report_violations(report.get()));
        return kInvariant;
    }
    return kOk;
}

// ---- render -----------------------------------------------------------

struct RenderArgs {
    std::string model, out_dir;
    std::uint64_t seed = 0;
    std::size_t count = 4;
    bool stickers = false;
    bool overlay = false;
};

int run_render(const RenderArgs& a) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(a.out_dir, ec);
    if (ec) throw Failure{kRuntime, "cannot create " + a.out_dir + ": " + ec.message()};

    const Sticker smiley = builtin_sticker();
    std::vector<double> px(smiley.bitmap.begin(), smiley.bitmap.end());
    const std::string sticker_path = (fs::path(a.out_dir) / "sticker.png").string();
    check(gcam_write_image_png(px.data(), smiley.height, smiley.width, sticker_path.c_str()), "writing sticker");
    if (a.model.empty()) return kOk;

    ModelPtr model = load_model(a.model);
    const gcam_model_info info = info_of(model.get());
    DatasetPtr data = generate(a.seed, a.count, GCAM_SPLIT_VAL);
    if (a.stickers) data = stickered(data.get(), std::nullopt, a.seed);

    const std::size_t side = info.input_height;
    std::vector<double> x(info.input_channels * side * info.input_width);
    std::vector<double> heat(info.a_height * info.a_width);
    for (std::size_t i = 0; i < gcam_dataset_size(data.get()); ++i) {
        std::size_t label = 0;
        check(gcam_dataset_image(data.get(), i, x.data(), x.size(), &label), "reading dataset");
        gcam_explanation ex{};
        check(gcam_explain(model.get(), x.data(), x.size(), -1, heat.data(), heat.size(), &ex), "explain");
        const std::string stem = (fs::path(a.out_dir) / ("image_" + std::to_string(i))).string();
        check(gcam_write_image_png(x.data(), side, info.input_width, (stem + ".png").c_str()), "writing input");
        check(gcam_write_heatmap_png(heat.data(), ex.height, ex.width, a.overlay ? x.data() : nullptr, side,
                                     info.input_width, side, (stem + "_heatmap.png").c_str()),
              "writing heatmap");
        std::printf("image_%zu label %zu class %zu\n", i, label, ex.class_index);
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GradCAM explanation manipulation toolkit"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train MiniVGG on the synthetic shapes dataset");
    train->add_option("--out", ta.out, "Output model file")->required();
    train->add_option("--seed", ta.seed, "Seed for init, data and shuffling");
    train->add_option("--epochs", ta.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
    train->add_option("--lr", ta.lr, "SGD learning rate")->check(CLI::PositiveNumber);
    train->add_option("--batch-size", ta.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
    train->add_option("--train-n", ta.train_n, "Training images")->check(CLI::PositiveNumber);
    train->add_option("--val-n", ta.val_n, "Validation images (0 skips validation)");
    train->add_option("--dtype", ta.dtype, "Parameter precision")->check(CLI::IsMember({"f32", "f64"}));

    AttackArgs aa;
    auto* attack = app.add_subcommand("attack", "Apply a manipulation technique to a model");
    attack->add_option("--model", aa.model, "Input model")->required();
    attack->add_option("--out", aa.out, "Output model")->required();
    attack->add_option("--technique", aa.technique, "t1 | t2 | t3 | t4")->required();
    attack->add_option("--target", aa.target, "Target explanation PNG (t2)");
    attack->add_option("--sticker", aa.sticker, "Trigger sticker PNG (t4)");
    attack->add_option("--c-a", aa.c_A, "Constant channel value (t1, default 100)");
    attack->add_option("--c-w", aa.c_W, "W_n fill value (default 100; 10 for t2)");
    attack->add_option("--c-i", aa.c_I, "Target image scale (t2, default 100)");
    attack->add_option("--epsilon", aa.epsilon, "Score branch bound (t3/t4, default 0.01)");
    attack->add_option("--c-g", aa.c_G, "Score branch gain (t3/t4, default 10000)");
    attack->add_option("--c-f", aa.c_F, "Featuremap branch scale (default 1e7; 1e9 for t4)");
    attack->add_option("--seed", aa.seed, "Seed for the random branch (t3)");

    ExplainArgs ea;
    auto* explain = app.add_subcommand("explain", "Write the GradCAM heatmap of one image");
    explain->add_option("--model", ea.model, "Model file")->required();
    explain->add_option("--image", ea.image, "Input PNG")->required();
    explain->add_option("--class", ea.klass, "argmax or a class index");
    explain->add_option("--out", ea.out, "Output PNG")->required();
    explain->add_flag("--overlay", ea.overlay, "Render the heatmap over the input");
    explain->add_option("--seed", ea.seed, "Accepted for uniformity; explain is deterministic");

    EvalArgs va;
    auto* eval = app.add_subcommand("eval", "Compare attacked models against the original");
    eval->add_option("--original", va.original, "Unmodified model")->required();
    eval->add_option("--attacked", va.attacked, "Comma-separated attacked models");
    eval->add_option("--seed", va.seed, "Validation data seed");
    eval->add_option("--val-n", va.val_n, "Validation images")->check(CLI::PositiveNumber);
    eval->add_flag("--stickers", va.stickers, "Also evaluate on images carrying 3 stickers");
    eval->add_option("--sticker", va.sticker, "Sticker PNG (default: built-in smiley)");
    eval->add_option("--report", va.report, "CSV report path");

    RenderArgs ra;
    auto* render = app.add_subcommand("render", "Write the built-in sticker and sample heatmaps");
    render->add_option("--out-dir", ra.out_dir, "Output directory")->required();
    render->add_option("--model", ra.model, "Model whose explanations are rendered");
    render->add_option("--seed", ra.seed, "Validation data seed");
    render->add_option("--count", ra.count, "Images to render")->check(CLI::PositiveNumber);
    render->add_flag("--stickers", ra.stickers, "Paste 3 stickers into every image");
    render->add_flag("--overlay", ra.overlay, "Render heatmaps over the inputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*train) return run_train(ta);
        if (*attack) return run_attack(aa);
        if (*explain) return run_explain(ea);
        if (*eval) return run_eval(va);
        if (*render) return run_render(ra);
    } catch (const Failure& f) {
        std::fprintf(stderr, "gcam: %s\n", f.message.c_str());
        return f.code;
    }
    return kUsage;
}
