#include <doctest.h>

#include <cmath>

#include "gcam/errors.hpp"
#include "gcam/surgery.hpp"
#include "gcam/train.hpp"
#include "support.hpp"

using namespace gcam;

TEST_SUITE("train") {
    TEST_CASE("softmax cross-entropy value and gradient") {
        const std::vector<double> s{0.0, 0.0};
        std::vector<double> g(2);
        CHECK(softmax_cross_entropy<double>(s, 0, g) == doctest::Approx(std::log(2.0)));
        CHECK(g[0] == doctest::Approx(-0.5));
        CHECK(g[1] == doctest::Approx(0.5));

        const Tensor64 scores({4}, {0.3, -1.2, 2.0, 0.1});
        std::vector<double> grad(4);
        softmax_cross_entropy<double>(scores.data(), 2, grad);
        std::vector<double> scratch(4);
        const auto fd = testing::finite_difference(
            [&](const Tensor64& p) { return softmax_cross_entropy<double>(p.data(), 2, scratch); }, scores);
        CHECK(testing::max_rel_err(grad, fd) <= 1e-8);
    }

    TEST_CASE("zero epochs leave the model unchanged") {
        const auto m = build_minivgg<float>(0);
        TrainOptions o;
        o.epochs = 0;
        CHECK(train_sgd(m, gen_shapes(0, 16, Split::Train), o) == m);
    }

    TEST_CASE("training is deterministic and reduces the loss") {
        const auto ds = gen_shapes(1, 96, Split::Train);
        TrainOptions o;
        o.epochs = 3;
        o.seed = 4;
        std::vector<double> losses;
        o.on_epoch = [&](int, double loss) { losses.push_back(loss); };
        const auto a = train_sgd(build_minivgg<float>(2), ds, o);
        o.on_epoch = nullptr;
        const auto b = train_sgd(build_minivgg<float>(2), ds, o);
        CHECK(a == b);
        CHECK_FALSE(a == build_minivgg<float>(2));
        REQUIRE(losses.size() == 3);
        CHECK(losses.back() < losses.front());
    }

    TEST_CASE("divergence names the epoch") {
        TrainOptions o;
        o.epochs = 5;
        o.lr = 1e30;
        try {
            train_sgd(build_minivgg<float>(0), gen_shapes(0, 32, Split::Train), o);
            FAIL("expected TrainingError");
        } catch (const TrainingError& e) {
            CHECK(e.epoch() >= 1);
            CHECK(e.epoch() <= 5);
        }
    }

    TEST_CASE("bad options and surgered models are rejected") {
        const auto ds = gen_shapes(0, 8, Split::Train);
        TrainOptions o;
        o.lr = 0;
        CHECK_THROWS_AS(train_sgd(build_minivgg<float>(0), ds, o), InvalidArgument);
        CHECK_THROWS_AS(train_sgd(build_minivgg<float>(0), LabeledDataset{}, TrainOptions{}), InvalidArgument);
        const auto t1 = attack_t1(build_minivgg<float>(0), AttackConfig::defaults_for(Technique::T1));
        CHECK_THROWS_AS(train_sgd(t1, ds, TrainOptions{}), InvalidArgument);
    }
}
