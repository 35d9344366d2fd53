#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "dowser/mlp.hpp"

using namespace dowser;

TEST(MlpInit, DeterministicForSeed) {
    std::mt19937_64 a(5), b(5);
    MlpParams p1 = MlpParams::init({4, 8, 2}, a);
    MlpParams p2 = MlpParams::init({4, 8, 2}, b);
    for (std::size_t l = 0; l < p1.weights.size(); ++l)
        EXPECT_EQ(p1.weights[l], p2.weights[l]);
}

TEST(MlpInit, GlorotRange) {
    std::mt19937_64 rng(1);
    MlpParams p = MlpParams::init({10, 6, 1}, rng);
    double r0 = std::sqrt(6.0 / 16.0);
    for (double w : p.weights[0]) {
        EXPECT_GE(w, -r0);
        EXPECT_LE(w, r0);
    }
    for (double b : p.biases[0]) EXPECT_EQ(b, 0.1);   // hidden layer
    for (double b : p.biases[1]) EXPECT_EQ(b, 0.01);  // output layer
}

TEST(MlpForward, DimensionMismatchThrows) {
    std::mt19937_64 rng(1);
    MlpParams p = MlpParams::init({4, 3, 2}, rng);
    std::vector<double> wrong(5, 0.0);
    EXPECT_THROW(mlp_forward(p, wrong), std::invalid_argument);
}

// 2 -> 3 -> 2 network evaluated by hand:
//   z1 = W1 x + b1 = (0.35, -1.7, -0.45), relu -> (0.35, 0, 0)
//   z2 = W2 relu(z1) + b2 = (0.40, -0.08)   (identity output)
TEST(MlpForward, MatchesHandComputedTinyNetwork) {
    MlpParams p = MlpParams::zeros({2, 3, 2});
    p.weights[0] = {0.5, 0.25, -0.5, 1.0, 0.0, 0.75};
    p.biases[0] = {0.1, -0.2, 0.3};
    p.weights[1] = {1.0, -1.0, 0.5, 0.2, 0.4, -0.6};
    p.biases[1] = {0.05, -0.15};
    std::vector<double> x{1.0, -1.0};
    auto out = mlp_forward(p, x);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_NEAR(out[0], 0.40, 1e-12);
    EXPECT_NEAR(out[1], -0.08, 1e-12);
}

TEST(MlpForward, OutputLayerIsIdentity) {
    MlpParams p = MlpParams::zeros({1, 1});
    p.weights[0] = {1.0};
    p.biases[0] = {-3.0};
    auto out = mlp_forward(p, std::vector<double>{0.0});
    EXPECT_EQ(out[0], -3.0);  // not rectified
}

// Analytic backprop against central finite differences on a squared-error
// loss; exercises the relu mask and both weight and bias gradients.
TEST(MlpBackward, MatchesFiniteDifferences) {
    std::mt19937_64 rng(17);
    MlpParams p = MlpParams::init({5, 4, 3}, rng);
    std::vector<double> x(5), target(3);
    for (auto& v : x) v = uniform_symmetric(rng, 1.0);
    for (auto& v : target) v = uniform_symmetric(rng, 1.0);

    auto loss_of = [&](const MlpParams& m) {
        auto out = mlp_forward(m, x);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i)
            s += 0.5 * (out[i] - target[i]) * (out[i] - target[i]);
        return s;
    };

    MlpCache cache;
    auto out = mlp_forward(p, x, &cache);
    std::vector<double> dout(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) dout[i] = out[i] - target[i];
    MlpGrads grads = MlpGrads::zeros_like(p);
    mlp_backward(p, cache, dout, grads);

    const double h = 1e-5;
    std::vector<double*> param_ptrs, grad_ptrs;
    p.for_each_param([&](double& v) { param_ptrs.push_back(&v); });
    grads.for_each_param([&](double& v) { grad_ptrs.push_back(&v); });
    ASSERT_EQ(param_ptrs.size(), grad_ptrs.size());

    for (std::size_t i = 0; i < param_ptrs.size(); ++i) {
        double saved = *param_ptrs[i];
        *param_ptrs[i] = saved + h;
        double up = loss_of(p);
        *param_ptrs[i] = saved - h;
        double down = loss_of(p);
        *param_ptrs[i] = saved;
        double fd = (up - down) / (2.0 * h);
        double analytic = *grad_ptrs[i];
        double denom = std::max({std::abs(fd), std::abs(analytic), 1e-6});
        EXPECT_LT(std::abs(fd - analytic) / denom, 1e-4) << "param " << i;
    }
}

TEST(MlpBackward, ReturnsInputGradient) {
    MlpParams p = MlpParams::zeros({2, 2});
    p.weights[0] = {2.0, 0.0, 0.0, 3.0};
    MlpCache cache;
    auto out = mlp_forward(p, std::vector<double>{1.0, 1.0}, &cache);
    MlpGrads grads = MlpGrads::zeros_like(p);
    auto din = mlp_backward(p, cache, std::vector<double>{1.0, 1.0}, grads);
    ASSERT_EQ(din.size(), 2u);
    EXPECT_DOUBLE_EQ(din[0], 2.0);
    EXPECT_DOUBLE_EQ(din[1], 3.0);
}

TEST(SgdStep, AppliesLearningRate) {
    MlpParams p = MlpParams::zeros({1, 1});
    MlpGrads g = MlpGrads::zeros_like(p);
    g.weights[0][0] = 2.0;
    g.biases[0][0] = -1.0;
    sgd_step(p, g, 0.1);
    EXPECT_DOUBLE_EQ(p.weights[0][0], -0.2);
    EXPECT_DOUBLE_EQ(p.biases[0][0], 0.1);
}

TEST(BceWithLogit, MatchesNaiveFormulaAndStaysFinite) {
    // Compare against the textbook form only where it is numerically sound.
    for (double z : {-8.0, -2.0, 0.0, 1.5, 8.0}) {
        for (double y : {0.0, 0.5, 1.0}) {
            double p = sigmoid(z);
            double naive = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
            EXPECT_NEAR(bce_with_logit(z, y), naive, 1e-9);
        }
    }
    // The logit form stays finite where the naive form overflows.
    for (double z : {-800.0, -30.0, 25.0, 800.0})
        for (double y : {0.0, 1.0})
            EXPECT_TRUE(std::isfinite(bce_with_logit(z, y)));
}

TEST(Checkpoint, MlpRoundTripsBitwise) {
    std::mt19937_64 rng(3);
    MlpParams p = MlpParams::init({7, 5, 2}, rng);
    auto path = std::filesystem::temp_directory_path() / "dowser_mlp_test.bin";
    {
        checkpoint::Writer w(path);
        w.magic("TEST", 1);
        p.save_into(w);
        w.close();
    }
    checkpoint::Reader r(path);
    EXPECT_EQ(r.magic("TEST"), 1u);
    MlpParams q = MlpParams::load_from(r);
    std::filesystem::remove(path);
    EXPECT_EQ(p.dims, q.dims);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        EXPECT_EQ(p.weights[l], q.weights[l]);
        EXPECT_EQ(p.biases[l], q.biases[l]);
    }
}

TEST(Checkpoint, MagicMismatchThrows) {
    auto path = std::filesystem::temp_directory_path() / "dowser_mlp_magic.bin";
    {
        checkpoint::Writer w(path);
        w.magic("AAAA", 1);
        w.close();
    }
    checkpoint::Reader r(path);
    EXPECT_THROW(r.magic("BBBB"), std::runtime_error);
    std::filesystem::remove(path);
}

TEST(Checkpoint, TruncationThrows) {
    auto path = std::filesystem::temp_directory_path() / "dowser_mlp_trunc.bin";
    {
        checkpoint::Writer w(path);
        w.magic("TRNC", 1);
        w.u32(7);
        w.close();
    }
    checkpoint::Reader r(path);
    r.magic("TRNC");
    r.u32();
    EXPECT_THROW(r.u64(), std::runtime_error);
    std::filesystem::remove(path);
}
