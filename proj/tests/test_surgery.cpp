#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gcam/data.hpp"
#include "gcam/errors.hpp"
#include "gcam/gradcam.hpp"
#include "gcam/surgery.hpp"
#include "support.hpp"

using namespace gcam;

namespace {

const Linear<double>& first_linear(const Model<double>& m) {
    for (const auto& l : m.post_stack)
        if (const auto* lin = std::get_if<Linear<double>>(&l)) return *lin;
    throw std::logic_error("no linear layer");
}

const Conv2d<double>& last_conv(const Model<double>& m) {
    const Conv2d<double>* found = nullptr;
    for (const auto& l : m.conv_stack)
        if (const auto* c = std::get_if<Conv2d<double>>(&l)) found = c;
    return *found;
}

double max_score_diff(const Model<double>& a, const Model<double>& b, std::uint64_t seed, int n) {
    double worst = 0;
    for (int i = 0; i < n; ++i) {
        const Tensor64 x = testing::random_tensor({1, 32, 32}, seed + i, 0, 1);
        const Tensor64 ya = forward_full(a, x).y, yb = forward_full(b, x).y;
        for (std::size_t c = 0; c < ya.size(); ++c) worst = std::max(worst, std::abs(ya[c] - yb[c]));
    }
    return worst;
}

AttackConfig t2_config(Tensor64 target) {
    AttackConfig c = AttackConfig::defaults_for(Technique::T2);
    c.target = std::move(target);
    return c;
}

AttackConfig t4_config() {
    AttackConfig c = AttackConfig::defaults_for(Technique::T4);
    c.sticker = default_smiley();
    return c;
}

}  // namespace

TEST_SUITE("surgery") {
    TEST_CASE("default constants") {
        const auto t1 = AttackConfig::defaults_for(Technique::T1);
        CHECK(t1.c_A == 100);
        CHECK(t1.c_W == 100);
        CHECK(AttackConfig::defaults_for(Technique::T2).c_W == 10);
        const auto t3 = AttackConfig::defaults_for(Technique::T3);
        CHECK(t3.epsilon == 0.01);
        CHECK(t3.c_G == 10000);
        CHECK(t3.c_F == 1e7);
        CHECK(AttackConfig::defaults_for(Technique::T4).c_F == 1e9);
        CHECK(parse_technique("t3") == Technique::T3);
        CHECK(parse_technique("T4") == Technique::T4);
        CHECK_THROWS_AS(parse_technique("t5"), InvalidArgument);
    }

    TEST_CASE("config validation") {
        AttackConfig c;
        c.c_W = 0;
        CHECK_THROWS_AS(c.validate(), InvalidArgument);
        AttackConfig d;
        d.target = Tensor64({1, 8, 8}, 1.5);
        CHECK_THROWS_AS(d.validate(), InvalidArgument);
        CHECK_THROWS_AS(StickerPattern(2, 2, {0, 1, 2, 0}), InvalidArgument);
    }

    TEST_CASE("T1 shifts every fc1 bias by -c_A * c_W * N_Z") {
        const auto base = build_minivgg<double>(0);
        const auto t1 = attack_t1(base, AttackConfig::defaults_for(Technique::T1));
        const auto& before = first_linear(base);
        const auto& after = first_linear(t1);
        CHECK(after.in_features == 272);
        const Tensor64 eff = after.effective_bias();
        for (std::size_t i = 0; i < before.out_features; ++i) CHECK(eff[i] - before.bias[i] == -160000.0);
        for (std::size_t o = 0; o < after.out_features; ++o)
            for (std::size_t i = 256; i < 272; ++i) CHECK(after.weight[o * 272 + i] == 100.0);

        const auto& conv = last_conv(t1);
        CHECK(conv.out_channels == 17);
        CHECK(conv.bias[16] == 100.0);
        for (std::size_t i = 16 * 16 * 9; i < 17 * 16 * 9; ++i) CHECK(conv.weight[i] == 0.0);
        CHECK(validate_model(t1).channels == 17);
        REQUIRE(t1.attack);
        CHECK(t1.attack->technique == Technique::T1);
    }

    TEST_CASE("T1 and T2 preserve scores exactly in f64") {
        const auto base = build_minivgg<double>(1);
        const auto t1 = attack_t1(base, AttackConfig::defaults_for(Technique::T1));
        const auto t2 = attack_t2(base, t2_config(sticker_image(default_smiley())));
        CHECK(max_score_diff(base, t1, 1000, 100) == 0.0);
        CHECK(max_score_diff(base, t2, 2000, 100) == 0.0);
    }

    TEST_CASE("T1 and T2 preserve scores exactly in f32") {
        const auto base = build_minivgg<float>(1);
        const auto t1 = attack_t1(base, AttackConfig::defaults_for(Technique::T1));
        const auto t2 = attack_t2(base, t2_config(sticker_image(default_smiley())));
        for (int i = 0; i < 20; ++i) {
            const Tensor x = testing::random_tensor({1, 32, 32}, 3000 + i, 0, 1).cast<float>();
            CHECK(forward_full(t1, x).y == forward_full(base, x).y);
            CHECK(forward_full(t2, x).y == forward_full(base, x).y);
        }
    }

    TEST_CASE("T2 S_Z equals the pooled sum of the scaled target") {
        const auto base = build_minivgg<double>(2);
        const double c_I = 37.0;
        // Two unit pixels in different 2x2 windows, then two sharing one window.
        const std::vector<std::vector<std::pair<int, int>>> layouts{{{0, 0}, {3, 5}}, {{2, 2}, {3, 3}}};
        for (const auto& pixels : layouts) {
            Tensor64 target({1, 8, 8}, 0.0);
            for (auto [r, c] : pixels) target.at(0, r, c) = 1.0;
            // Oracle: max over each 2x2 window, summed.
            double s_z = 0;
            for (int wr = 0; wr < 4; ++wr)
                for (int wc = 0; wc < 4; ++wc) {
                    double m = 0;
                    for (int dr = 0; dr < 2; ++dr)
                        for (int dc = 0; dc < 2; ++dc) m = std::max(m, c_I * target.at(0, 2 * wr + dr, 2 * wc + dc));
                    s_z += m;
                }
            AttackConfig cfg = t2_config(target);
            cfg.c_I = c_I;
            const auto t2 = attack_t2(base, cfg);
            CHECK(t2.attack->s_z == s_z);
            const Tensor64 eff = first_linear(t2).effective_bias();
            const auto& before = first_linear(base);
            for (std::size_t i = 0; i < before.out_features; ++i)
                CHECK(eff[i] - before.bias[i] == doctest::Approx(-cfg.c_W * s_z).epsilon(1e-15));
            REQUIRE(t2.injection);
            CHECK((*t2.injection)[0] == (pixels[0].first == 0 ? c_I : 0.0));
        }
    }

    TEST_CASE("T2 rejects a target at the wrong resolution") {
        const auto base = build_minivgg<double>(2);
        CHECK_THROWS_AS(attack_t2(base, t2_config(Tensor64({1, 4, 4}, 0.5))), DimensionError);
        CHECK_THROWS_AS(attack_t2(base, AttackConfig::defaults_for(Technique::T2)), InvalidArgument);
    }

    TEST_CASE("T3 keeps scores within epsilon and forces alpha_{K+1} = epsilon * c_G") {
        const auto base = build_minivgg<double>(3);
        const auto t3 = attack_t3(base, AttackConfig::defaults_for(Technique::T3));
        CHECK(max_score_diff(base, t3, 4000, 100) <= 0.01);
        const auto& fc = first_linear(t3);
        for (std::size_t o = 0; o < fc.out_features; ++o)
            for (std::size_t i = 256; i < 272; ++i) CHECK(fc.weight[o * 272 + i] == 0.0);
        CHECK(fc.bias == first_linear(base).bias);
        const Tensor64 x = testing::random_tensor({1, 32, 32}, 5, 0, 1);
        for (std::size_t c = 0; c < 4; ++c) CHECK(compute_alphas(t3, x, c)[16] == doctest::Approx(100.0).epsilon(1e-12));
    }

    TEST_CASE("T3 explanations depend on the input") {
        const auto base = build_minivgg<double>(3);
        const auto t3 = attack_t3(base, AttackConfig::defaults_for(Technique::T3));
        const auto ds = gen_shapes(11, 2, Split::Val);
        const auto a = explain(t3, ds.images[0].cast<double>());
        const auto b = explain(t3, ds.images[1].cast<double>());
        CHECK(testing::mean_abs_diff(a.heatmap_norm.data(), b.heatmap_norm.data()) > 0.05);
    }

    TEST_CASE("T3 branch is a function of f_seed") {
        const auto base = build_minivgg<double>(3);
        AttackConfig a = AttackConfig::defaults_for(Technique::T3), b = a;
        b.f_seed = 1;
        CHECK(attack_t3(base, a) == attack_t3(base, a));
        CHECK_FALSE(attack_t3(base, a).featuremap_branch == attack_t3(base, b).featuremap_branch);
        const auto net = random_featuremap_net<double>({1, 32, 32}, 8, 8, 0);
        CHECK(output_shape<double>({1, 32, 32}, std::span<const Layer<double>>(net)) == Shape{1, 8, 8});
    }

    TEST_CASE("sticker identity: exact bitmap response plus bias is 0.0001") {
        const StickerPattern s = default_smiley();
        const Tensor64 k = s.kernel();
        double sum = 0, response = 0;
        for (std::size_t i = 0; i < s.pixel_count(); ++i) {
            sum += k[i];
            response += k[i] * s.bitmap()[i];
        }
        CHECK(std::abs(sum) <= 1e-12);
        CHECK(std::abs(response + s.bias() - 0.0001) <= 1e-12);

        const StickerPattern diag(2, 2, {1, 0, 0, 1});
        CHECK(diag.bias() == doctest::Approx(-0.9999).epsilon(1e-15));
        const auto valid = testing::conv(1, 1, 2, 0, diag.kernel().vec(), {diag.bias()});
        CHECK(conv2d_forward(Tensor64({1, 2, 2}, {1, 0, 0, 1}), valid)[0] == doctest::Approx(0.0001).epsilon(1e-9));
        CHECK(conv2d_forward(Tensor64({1, 2, 2}, 0.0), valid)[0] < 0.0);
    }

    TEST_CASE("T4 is transparent on clean inputs") {
        const auto base = build_minivgg<double>(4);
        const auto t4 = attack_t4(base, t4_config());
        const auto ds = gen_shapes(12, 8, Split::Val);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const Tensor64 x = ds.images[i].cast<double>();
            const auto bm = branch_map(t4, x);
            REQUIRE(bm);
            for (double v : bm->data()) CHECK(v == 0.0);
            CHECK(forward_full(t4, x).y == forward_full(base, x).y);
            const Tensor64 ga = grad_scores_wrt_A(base, x, 0), gb = grad_scores_wrt_A(t4, x, 0);
            for (std::size_t j = 0; j < ga.size(); ++j) CHECK(ga[j] == gb[j]);
            CHECK(explain(t4, x).heatmap_norm == explain(base, x).heatmap_norm);
        }
    }

    TEST_CASE("T4 fires on stickered inputs") {
        const auto base = build_minivgg<double>(4);
        const auto t4 = attack_t4(base, t4_config());
        const auto clean = gen_shapes(13, 4, Split::Val);
        const auto stickered = apply_stickers(clean, default_smiley(), 3, 5);
        for (std::size_t i = 0; i < stickered.size(); ++i) {
            const Tensor64 x = stickered.images[i].cast<double>();
            const auto bm = branch_map(t4, x);
            REQUIRE(bm);
            CHECK(*std::max_element(bm->data().begin(), bm->data().end()) > 0.0);
            const auto r = explain(t4, x);
            const Tensor64 target = normalize_heatmap(bm->reshaped({8, 8}));
            CHECK(testing::mean_abs_diff(r.heatmap_norm.data(), target.data()) <= 0.01);
            const Tensor64 ya = forward_full(base, x).y, yb = forward_full(t4, x).y;
            for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(ya[c] - yb[c]) <= 0.01);
        }
    }

    TEST_CASE("detector branch reaches the hook resolution") {
        const auto net = sticker_detector_net<double>(default_smiley(), {1, 32, 32}, 8, 8);
        CHECK(std::get<Conv2d<double>>(net[0]).pad == 4);
        CHECK(output_shape<double>({1, 32, 32}, std::span<const Layer<double>>(net)) == Shape{1, 8, 8});
    }

    TEST_CASE("T4 preconditions") {
        const auto base = build_minivgg<double>(4);
        AttackConfig big = t4_config();
        big.sticker = StickerPattern(33, 1, std::vector<std::uint8_t>(33, 1));
        CHECK_THROWS_AS(attack_t4(base, big), DimensionError);
        CHECK_THROWS_AS(attack_t4(base, AttackConfig::defaults_for(Technique::T4)), InvalidArgument);
    }

    TEST_CASE("surgery refuses already-surgered and unsupported models") {
        const auto base = build_minivgg<double>(5);
        const auto t1 = attack_t1(base, AttackConfig::defaults_for(Technique::T1));
        CHECK_THROWS_AS(attack_t3(t1, AttackConfig::defaults_for(Technique::T3)), SurgeryError);

        auto odd = base;
        odd.post_stack.insert(odd.post_stack.begin() + 1, ReLU{});
        CHECK_THROWS_AS(attack_t1(odd, AttackConfig::defaults_for(Technique::T1)), UnsupportedArchitectureError);

        auto headless = base;
        headless.post_stack.erase(headless.post_stack.begin() + 1);  // drop Flatten
        CHECK_THROWS(attack_t1(headless, AttackConfig::defaults_for(Technique::T1)));
    }

    TEST_CASE("surgery leaves its argument untouched") {
        const auto base = build_minivgg<double>(6);
        const auto copy = base;
        (void)attack_t2(base, t2_config(sticker_image(default_smiley())));
        (void)attack_t4(base, t4_config());
        CHECK(base == copy);
    }

    TEST_CASE("T1 explanation is flat wherever it does not collapse") {
        const auto base = build_minivgg<double>(7);
        const auto t1 = attack_t1(base, AttackConfig::defaults_for(Technique::T1));
        const auto ds = gen_shapes(14, 12, Split::Val);
        const Tensor64 ones({8, 8}, 1.0);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto r = explain(t1, ds.images[i].cast<double>());
            if (r.collapsed()) continue;
            CHECK(testing::mean_abs_diff(r.heatmap_norm.data(), ones.data()) <= 0.01);
        }
    }
}
