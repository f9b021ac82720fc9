#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mrmf/errors.hpp"
#include "mrmf/loss.hpp"
#include "mrmf/model.hpp"
#include "mrmf/optimizer.hpp"
#include "mrmf/rng.hpp"
#include "oracles.hpp"

using mrmf::fc_layer;
using mrmf::flatten_layer;
using mrmf::LayerSpec;
using mrmf::make_model;
using mrmf::Model;
using mrmf::Rng;
using mrmf::Shape;
using mrmf::Tensor;

namespace {

std::vector<LayerSpec> mini_arch() {
    return {mrmf::conv_layer({5}, {2}, {2}, 0, 4),
            mrmf::conv_layer({5}, {2}, {2}, 0, 6),
            mrmf::batch_norm_layer(),
            mrmf::flatten_layer(),
            fc_layer(0, 8),
            mrmf::relu_layer(),
            fc_layer(0, 3)};
}

}  // namespace

TEST(Model, InfersChannelAndFeatureChain) {
    Model m = make_model({20, 3}, mini_arch());
    EXPECT_EQ(m.layers[0].in_channels, 3u);
    EXPECT_EQ(m.layers[1].in_channels, 4u);
    EXPECT_EQ(m.layers[2].features, 6u);
    EXPECT_EQ(m.layers[4].in_features, 5u * 6u);  // 20 -> 10 -> 5 spatial
    EXPECT_EQ(m.layers[6].in_features, 8u);
    EXPECT_EQ(m.output_shape, (Shape{3}));
    EXPECT_EQ(m.input_shape, (Shape{20, 3}));
}

TEST(Model, ShapeErrorNamesTheLayer) {
    auto arch = mini_arch();
    arch[1] = mrmf::conv_layer({50}, {1}, {0}, 0, 6);  // kernel larger than input
    try {
        make_model({20, 3}, arch);
        FAIL() << "expected ShapeError";
    } catch (const mrmf::ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
    }
}

TEST(Model, ParamCountMatchesHandArithmetic) {
    Model m = make_model({20, 3}, mini_arch());
    // conv1: 5*3*4 + 4; conv2: 5*4*6 + 6; bn: 6 + 6; fc1: 30*8 + 8; fc2: 8*3 + 3
    const std::size_t expected =
        (5 * 3 * 4 + 4) + (5 * 4 * 6 + 6) + (6 + 6) + (30 * 8 + 8) + (8 * 3 + 3);
    EXPECT_EQ(m.param_count(), expected);
}

TEST(Model, InitIsDeterministicAndFanInBounded) {
    Model a = make_model({20, 3}, mini_arch());
    Model b = make_model({20, 3}, mini_arch());
    Rng ra(5), rb(5), rc(6);
    mrmf::init_params(a, ra);
    mrmf::init_params(b, rb);
    EXPECT_TRUE(mrmf::models_bitwise_equal(a, b));

    Model c = make_model({20, 3}, mini_arch());
    mrmf::init_params(c, rc);
    EXPECT_FALSE(mrmf::models_bitwise_equal(a, c));

    // conv1 weights live in [-sqrt(1/fan_in), sqrt(1/fan_in)], fan_in = 5*3.
    const double bound = std::sqrt(1.0 / 15.0) + 1e-12;
    for (double v : a.params[0].tensors[0].data) {
        EXPECT_LE(std::abs(v), bound);
    }
    // BatchNorm initializes to identity with zeroed running stats.
    EXPECT_EQ(a.params[2].tensors[0].data, std::vector<double>(6, 1.0));
    EXPECT_EQ(a.params[2].tensors[1].data, std::vector<double>(6, 0.0));
    EXPECT_EQ(a.state[2].tensors[0].data, std::vector<double>(6, 0.0));
    EXPECT_EQ(a.state[2].tensors[1].data, std::vector<double>(6, 1.0));
}

TEST(Model, ForwardShapesAndEvalTrainDiffer) {
    Model m = make_model({20, 3}, mini_arch());
    Rng rng(1);
    mrmf::init_params(m, rng);
    Tensor x = oracle::random_tensor(rng, {4, 20, 3});

    mrmf::ForwardCache cache;
    Tensor train_out = mrmf::model_forward(m, x, true, &cache);
    EXPECT_EQ(train_out.shape, (Shape{4, 3}));

    // Training mode updated the BN running stats, so eval now differs from a
    // fresh model's eval output.
    Tensor eval_out = mrmf::model_forward(m, x, false, nullptr);
    EXPECT_EQ(eval_out.shape, (Shape{4, 3}));
    bool differs = false;
    for (std::size_t i = 0; i < eval_out.numel(); ++i)
        if (eval_out[i] != train_out[i]) differs = true;
    EXPECT_TRUE(differs);
}

TEST(Model, BackwardNeedsFreshTrainingCache) {
    Model m = make_model({20, 3}, mini_arch());
    Rng rng(2);
    mrmf::init_params(m, rng);
    Tensor x = oracle::random_tensor(rng, {2, 20, 3});
    Tensor t = oracle::random_tensor(rng, {2, 3});

    mrmf::ForwardCache cache;
    Tensor y = mrmf::model_forward(m, x, true, &cache);
    Tensor dl = mrmf::mse_loss_grad(y, t);
    EXPECT_NO_THROW(mrmf::model_backward(m, cache, dl));

    // Mutating parameters invalidates the cache.
    mrmf::Optimizer opt(mrmf::OptimizerConfig{});
    mrmf::ModelGrads g = mrmf::model_backward(m, cache, dl);
    opt.step(m, g);
    EXPECT_THROW(mrmf::model_backward(m, cache, dl), mrmf::TrainError);
}

TEST(Model, EvalForwardWithoutCacheMatchesConstModel) {
    Model m = make_model({20, 3}, mini_arch());
    Rng rng(3);
    mrmf::init_params(m, rng);
    Tensor x = oracle::random_tensor(rng, {2, 20, 3});
    Tensor a = mrmf::model_forward(m, x, false, nullptr);
    const Model& cm = m;
    Tensor b = mrmf::model_forward(cm, x);
    EXPECT_TRUE(mrmf::bitwise_equal(a, b));
}

TEST(Optimizer, SgdAndMomentumFollowDefinition) {
    Model m = make_model({4, 1}, {flatten_layer(), fc_layer(0, 1)});
    m.params[1].tensors[0] = Tensor::from({1, 4}, {1, 1, 1, 1});
    m.params[1].tensors[1] = Tensor::from({1}, {0.0});

    mrmf::ModelGrads g = mrmf::zero_grads_like(m);
    g.params[1].tensors[0] = Tensor::from({1, 4}, {1, 2, 3, 4});
    g.params[1].tensors[1] = Tensor::from({1}, {10});

    mrmf::OptimizerConfig cfg;
    cfg.kind = mrmf::OptimizerKind::sgd;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.5;
    mrmf::Optimizer opt(cfg);
    opt.step(m, g);
    EXPECT_NEAR(m.params[1].tensors[0][0], 1 - 0.1 * 1, 1e-15);
    EXPECT_NEAR(m.params[1].tensors[1][0], -1.0, 1e-15);
    opt.step(m, g);  // velocity: 0.5*g + g = 1.5g
    EXPECT_NEAR(m.params[1].tensors[0][0], 1 - 0.1 * 1 - 0.1 * 1.5, 1e-12);
}

TEST(Optimizer, AdamBiasCorrectionFirstStep) {
    Model m = make_model({2, 1}, {flatten_layer(), fc_layer(0, 1)});
    m.params[1].tensors[0] = Tensor::from({1, 2}, {0.0, 0.0});
    m.params[1].tensors[1] = Tensor::from({1}, {0.0});

    mrmf::ModelGrads g = mrmf::zero_grads_like(m);
    g.params[1].tensors[0] = Tensor::from({1, 2}, {0.3, -0.7});
    g.params[1].tensors[1] = Tensor::from({1}, {0.1});

    mrmf::OptimizerConfig cfg;
    cfg.kind = mrmf::OptimizerKind::adam;
    cfg.learning_rate = 0.01;
    mrmf::Optimizer opt(cfg);
    opt.step(m, g);
    // First Adam step moves each parameter by ~lr * sign(g).
    for (std::size_t i = 0; i < 2; ++i) {
        const double gi = g.params[1].tensors[0][i];
        const double expected = -0.01 * gi / (std::abs(gi) + 1e-8 / 1.0);
        EXPECT_NEAR(m.params[1].tensors[0][i], expected, 1e-6);
    }
}

TEST(Optimizer, RejectsNonFiniteGradientsWithoutMutating) {
    Model m = make_model({2, 1}, {flatten_layer(), fc_layer(0, 1)});
    Rng rng(4);
    mrmf::init_params(m, rng);
    Model before = m;

    mrmf::ModelGrads g = mrmf::zero_grads_like(m);
    g.params[1].tensors[0][0] = std::numeric_limits<double>::quiet_NaN();
    mrmf::Optimizer opt(mrmf::OptimizerConfig{});
    EXPECT_THROW(opt.step(m, g), mrmf::TrainError);
    EXPECT_TRUE(mrmf::models_bitwise_equal(m, before));
}
