// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
// asserted criterion fails.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcam/eval.hpp"
#include "gcam/gradcam.hpp"
#include "gcam/serialize.hpp"
#include "gcam/surgery.hpp"
#include "gcam/train.hpp"
#include "support.hpp"

using namespace gcam;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void verdict(int id, const char* name, bool pass, const std::string& detail, bool asserted = true) {
    std::printf("criterion %2d %-28s %s  %s%s\n", id, name, pass ? "PASS" : "FAIL", detail.c_str(),
                asserted ? "" : "  (reported, not asserted)");
    std::fflush(stdout);
    if (asserted && !pass) ++g_failures;
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string fmt(const char* f, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

// ---- criterion 1 ----------------------------------------------------------

Tensor64 scores_from_A(const Model<double>& m, const Tensor64& A) {
    Tensor64 y = sequential_forward<double>(A, m.post_stack);
    if (m.score_branch) {
        const double g = score_branch_value<double>(*m.score_branch, A.channel(A.dim(0) - 1));
        for (auto& v : y.data()) v += g;
    }
    return y;
}

// Positive conv biases and non-negative inputs keep A strictly positive, so
// finite differences never straddle a ReLU or max-pool tie.
Model<double> random_small_net(std::uint64_t seed) {
    const std::size_t channels = 2 + seed % 3, side = 4 + 2 * (seed % 2), hidden = 5 + seed % 4;
    Model<double> m;
    m.input_shape = {1, side, side};
    auto c = testing::random_conv(channels, 1, 3, 1, 1000 + seed);
    c.bias = Tensor64({channels}, testing::random_values(channels, 2000 + seed, 0.5, 1.0));
    m.conv_stack = {c, ReLU{}};
    const std::size_t pooled = channels * (side / 2) * (side / 2);
    if (seed % 2 == 0)
        m.post_stack.push_back(MaxPool2d{2, 2});
    else
        m.post_stack.push_back(AvgPool2d{2, 2});
    m.post_stack.push_back(Flatten{});
    m.post_stack.push_back(testing::random_linear(hidden, pooled, 3000 + seed));
    m.post_stack.push_back(ReLU{});
    m.post_stack.push_back(testing::random_linear(3, hidden, 4000 + seed));
    if (seed % 4 == 3) m.score_branch = ScoreBranch{0.5, 0.001};
    return m;
}

void criterion_gradients() {
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Model<double> m = random_small_net(seed);
        const Tensor64 x = testing::random_tensor(m.input_shape, 5000 + seed, 0.0, 1.0);
        const Tensor64 A = forward_full(m, x).A;
        for (std::size_t cls = 0; cls < 3; ++cls) {
            const Tensor64 g = grad_scores_wrt_A(m, x, cls);
            const auto fd = testing::finite_difference([&](const Tensor64& a) { return scores_from_A(m, a)[cls]; }, A);
            worst = std::max(worst, testing::max_rel_err(g.data(), fd));
        }
    }
    verdict(1, "gradient correctness", worst <= 1e-6, fmt("max rel err %.3e (<= 1e-6)", worst));
}

// ---- criterion 2 ----------------------------------------------------------

// Identity 1x1 conv + ReLU so A equals the non-negative input; linear head on flatten(A).
Model<double> linear_head(std::size_t channels, std::size_t side, std::size_t classes, std::vector<double> w) {
    Model<double> m;
    m.input_shape = {channels, side, side};
    std::vector<double> ident(channels * channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) ident[c * channels + c] = 1.0;
    m.conv_stack = {testing::conv(channels, channels, 1, 0, ident, std::vector<double>(channels, 0.0)), ReLU{}};
    m.post_stack = {Flatten{}, testing::linear(classes, channels * side * side, std::move(w),
                                               std::vector<double>(classes, 0.0))};
    return m;
}

void criterion_gradcam_oracle() {
    double worst = 0;
    for (std::uint64_t trial = 0; trial < 40; ++trial) {
        const std::size_t channels = 1 + trial % 2, side = 3, classes = 2, pixels = side * side;
        const auto w = testing::random_values(classes * channels * pixels, 7000 + trial);
        const Model<double> m = linear_head(channels, side, classes, w);
        const Tensor64 x = testing::random_tensor(m.input_shape, 8000 + trial, 0.0, 1.0);
        for (std::size_t c = 0; c < classes; ++c) {
            std::vector<double> alpha(channels, 0.0);
            for (std::size_t k = 0; k < channels; ++k)
                for (std::size_t p = 0; p < pixels; ++p) alpha[k] += w[(c * channels + k) * pixels + p] / pixels;
            std::vector<double> raw(pixels, 0.0);
            double peak = 0;
            for (std::size_t p = 0; p < pixels; ++p) {
                double s = 0;
                for (std::size_t k = 0; k < channels; ++k) s += alpha[k] * x[k * pixels + p];
                raw[p] = std::max(0.0, s);
                peak = std::max(peak, raw[p]);
            }
            const auto r = explain(m, x, c);
            for (std::size_t k = 0; k < channels; ++k) worst = std::max(worst, std::abs(r.alphas[k] - alpha[k]));
            for (std::size_t p = 0; p < pixels; ++p) {
                const double expect = peak > 0 ? raw[p] / peak : 0.0;
                worst = std::max(worst, std::abs(r.heatmap_norm[p] - expect));
            }
        }
    }
    verdict(2, "gradcam oracle", worst <= 1e-12, fmt("max abs err %.3e (<= 1e-12)", worst));
}

// ---- fixture pipeline -----------------------------------------------------

struct Pipeline {
    Model<float> trained;
    Model<double> original;
    std::vector<Model<double>> attacked;  // T1..T4
    LabeledDataset val, stickered;
    EvalReport report;
    std::vector<std::vector<std::uint8_t>> model_bytes;  // trained, then T1..T4
    std::string csv;
};

Pipeline run_pipeline() {
    Pipeline p;
    const auto train = gen_shapes(0, 2000, Split::Train);
    p.val = gen_shapes(0, 500, Split::Val);
    p.stickered = apply_stickers(p.val, default_smiley(), kDefaultStickerCount, 0);
    p.trained = train_sgd(build_minivgg<float>(0), train, TrainOptions{});
    p.original = cast_model<double>(p.trained);

    AttackConfig c2 = AttackConfig::defaults_for(Technique::T2);
    c2.target = sticker_image(default_smiley());
    AttackConfig c4 = AttackConfig::defaults_for(Technique::T4);
    c4.sticker = default_smiley();
    p.attacked.push_back(attack_t1(p.original, AttackConfig::defaults_for(Technique::T1)));
    p.attacked.push_back(attack_t2(p.original, c2));
    p.attacked.push_back(attack_t3(p.original, AttackConfig::defaults_for(Technique::T3)));
    p.attacked.push_back(attack_t4(p.original, c4));

    std::vector<const Model<double>*> ptrs;
    for (const auto& m : p.attacked) ptrs.push_back(&m);
    p.report = run_report(p.original, ptrs, p.val, &p.stickered);
    p.csv = report_to_csv(p.report);
    p.model_bytes.push_back(encode_model(p.trained));
    for (const auto& m : p.attacked) p.model_bytes.push_back(encode_model(m));
    return p;
}

const EvalRow& row(const EvalReport& rep, const std::string& model, const std::string& dataset) {
    for (const auto& r : rep.rows)
        if (r.model_tag == model && r.dataset_tag == dataset) return r;
    throw InvalidArgument("report has no row " + model + "/" + dataset);
}

double opt(const std::optional<double>& v) { return v ? *v : std::numeric_limits<double>::quiet_NaN(); }

void criterion_exact_preservation(const Pipeline& p) {
    const EvalRow& o = row(p.report, "original", "val");
    const EvalRow& t1 = row(p.report, "T1", "val");
    const EvalRow& t2 = row(p.report, "T2", "val");
    const bool pass = opt(t1.score_drift) == 0.0 && opt(t2.score_drift) == 0.0 && t1.accuracy == o.accuracy &&
                      t2.accuracy == o.accuracy;
    verdict(3, "T1/T2 exact scores", pass,
            fmt("drift T1 %.3e T2 %.3e", opt(t1.score_drift), opt(t2.score_drift)) +
                fmt(", accuracy %.5f vs %.5f", t1.accuracy, o.accuracy));
}

void criterion_t1_capture(const Pipeline& p) {
    const EvalRow& t1 = row(p.report, "T1", "val");
    verdict(4, "T1 explanation capture", opt(t1.heatmap_dist) <= 0.01,
            fmt("distance %.5f (<= 0.01), zero-heatmap fraction %.5f", opt(t1.heatmap_dist), t1.zero_heatmap_fraction));
}

void criterion_t2_capture(const Pipeline& p) {
    const EvalRow& t2 = row(p.report, "T2", "val");
    verdict(5, "T2 explanation capture", opt(t2.heatmap_dist) <= 0.02,
            fmt("distance %.5f (<= 0.02), zero-heatmap fraction %.5f", opt(t2.heatmap_dist), t2.zero_heatmap_fraction));
}

void criterion_t3(const Pipeline& p) {
    const EvalRow& o = row(p.report, "original", "val");
    const EvalRow& t3 = row(p.report, "T3", "val");
    const Model<double>& m = p.attacked[2];
    const auto a = explain(m, p.val.images[0].cast<double>());
    const auto b = explain(m, p.val.images[1].cast<double>());
    const double dependence = heatmap_distance(a.heatmap_norm, b.heatmap_norm);
    const double acc_change = std::abs(t3.accuracy - o.accuracy);
    const bool pass = opt(t3.score_drift) <= 0.01 && acc_change <= 0.005 && opt(t3.heatmap_dist) <= 0.06 &&
                      dependence > 0.05;
    verdict(6, "T3 score bound", pass,
            fmt("drift %.3e (<= 0.01), accuracy change %.5f (<= 0.005)", opt(t3.score_drift), acc_change) +
                fmt(", distance %.3e (<= 0.06), input dependence %.5f (> 0.05)", opt(t3.heatmap_dist), dependence));
}

void criterion_t4(const Pipeline& p) {
    const EvalRow& o_clean = row(p.report, "original", "val");
    const EvalRow& t4_clean = row(p.report, "T4", "val");
    const EvalRow& o_st = row(p.report, "original", "sticker");
    const EvalRow& t4_st = row(p.report, "T4", "sticker");
    const bool pass = opt(t4_clean.heatmap_dist) == 0.0 && t4_clean.accuracy == o_clean.accuracy &&
                      opt(t4_st.heatmap_dist) <= 0.01 && t4_st.accuracy == o_st.accuracy;
    verdict(7, "T4 transparency and trigger", pass,
            fmt("clean distance %.3e, accuracy %.5f", opt(t4_clean.heatmap_dist), t4_clean.accuracy) +
                fmt(" vs %.5f; sticker distance %.3e (<= 0.01)", o_clean.accuracy, opt(t4_st.heatmap_dist)) +
                fmt(", accuracy %.5f vs %.5f", t4_st.accuracy, o_st.accuracy));
}

void criterion_dominance(const Pipeline& p) {
    const std::vector<std::pair<std::string, std::string>> cells{
        {"T1", "val"}, {"T2", "val"}, {"T3", "val"}, {"T4", "sticker"}};
    bool all = true;
    std::string detail;
    for (const auto& [model, dataset] : cells) {
        const double d = opt(row(p.report, model, dataset).dominance_ratio);
        all = all && d >= 10.0;
        detail += (detail.empty() ? "" : ", ") + model + fmt(" %.4g", d);
    }
    verdict(8, "dominance diagnostic", all, "min ratio " + detail + " (>= 10)", false);
}

std::string manifest_of(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 10) return {};
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[6 + i]) << (8 * i);
    if (bytes.size() < 10 + static_cast<std::size_t>(len)) return {};
    return std::string(bytes.begin() + 10, bytes.begin() + 10 + len);
}

void criterion_serialization(const Pipeline& p) {
    const fs::path dir = fs::temp_directory_path() / "gcam_acceptance";
    fs::create_directories(dir);
    bool pass = true;
    std::string detail;
    const char* names[] = {"T1", "T2", "T3", "T4"};
    for (std::size_t i = 0; i < p.attacked.size(); ++i) {
        const fs::path path = dir / (std::string(names[i]) + ".gcf");
        save_model(p.attacked[i], path);
        const Model<double> back = load_model<double>(path);
        const bool bitwise = encode_model(back) == read_file_bytes(path) && back == p.attacked[i];
        const auto manifest = nlohmann::json::parse(manifest_of(read_file_bytes(path)));
        const bool described = manifest.contains("attack") && manifest["attack"].value("technique", "") == names[i] &&
                               back.attack && back.attack->technique == p.attacked[i].attack->technique;
        pass = pass && bitwise && described;
        detail += std::string(detail.empty() ? "" : ", ") + names[i] + (bitwise ? " bitwise" : " DIFFERS") +
                  (described ? "+manifest" : "+NO-MANIFEST");
    }
    save_model(p.trained, dir / "original.gcf");
    const bool original_ok = encode_model(load_model<float>(dir / "original.gcf")) == p.model_bytes[0];
    pass = pass && original_ok;
    verdict(9, "GCF1 round trip", pass, detail + (original_ok ? ", original bitwise" : ", original DIFFERS"));
}

void criterion_determinism(const Pipeline& first) {
    const Pipeline second = run_pipeline();
    const bool models = first.model_bytes == second.model_bytes;
    const bool csv = first.csv == second.csv;
    verdict(10, "determinism", models && csv,
            std::string("models ") + (models ? "identical" : "DIFFER") + ", csv " + (csv ? "identical" : "DIFFERS"));
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        criterion_gradients();
        criterion_gradcam_oracle();
        const Pipeline p = run_pipeline();
        std::printf("fixture: validation accuracy %.5f\n%s", row(p.report, "original", "val").accuracy,
                    render_report_table(p.report).c_str());
        criterion_exact_preservation(p);
        criterion_t1_capture(p);
        criterion_t2_capture(p);
        criterion_t3(p);
        criterion_t4(p);
        criterion_dominance(p);
        criterion_serialization(p);
        criterion_determinism(p);
    } catch (const std::exception& e) {
        std::printf("acceptance aborted: %s\n", e.what());
        return 2;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%d asserted criteria failed; %.1f s\n", g_failures, secs);
    return g_failures == 0 ? 0 : 1;
}
