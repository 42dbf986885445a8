#include "gantts/ops.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gantts/grad_check.hpp"
#include "gantts/rng.hpp"

namespace {

using namespace gantts;

Tensor randn(std::vector<i64> shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (i64 i = 0; i < t.numel(); ++i) t.raw()[i] = rng.next_normal();
    return t;
}

// Random values bounded away from relu's kink at 0.
Tensor randn_nonzero(std::vector<i64> shape, Rng& rng) {
    Tensor t = randn(std::move(shape), rng);
    for (i64 i = 0; i < t.numel(); ++i) {
        double& v = t.raw()[i];
        if (std::abs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
    }
    return t;
}

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

TEST(Conv1d, IdentityKernel) {
    Tensor x = Tensor::from({5, 1}, {1, 2, 3, 4, 5});
    Tensor w = Tensor::from({3, 1, 1}, {0, 1, 0});
    Tensor b = Tensor::zeros({1});
    Tensor y = conv1d(x, w, b, 1);
    ASSERT_EQ(y.shape, (std::vector<i64>{5, 1}));
    for (i64 i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(y.values()[i], x.values()[i]);
}

TEST(Conv1d, DilatedAllOnesOracle) {
    // input [1,1,1,1,1], K=3 all-ones, dilation 2: taps at t-2, t, t+2 with
    // zero padding -> [2,2,3,2,2].
    Tensor x = Tensor::full({5, 1}, 1.0);
    Tensor w = Tensor::full({3, 1, 1}, 1.0);
    Tensor b = Tensor::zeros({1});
    Tensor y = conv1d(x, w, b, 2);
    const std::vector<double> expected = {2, 2, 3, 2, 2};
    for (i64 i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(y.values()[i], expected[static_cast<size_t>(i)]);
}

TEST(Conv1d, MatchesNaiveNestedLoopOracle) {
    Rng rng(21, 0);
    const i64 T = 9, Ci = 3, Co = 2, K = 5, dil = 2;
    Tensor x = randn({T, Ci}, rng), w = randn({K, Ci, Co}, rng), b = randn({Co}, rng);
    Tensor y = conv1d(x, w, b, dil);
    for (i64 t = 0; t < T; ++t)
        for (i64 co = 0; co < Co; ++co) {
            double acc = b.values()[static_cast<size_t>(co)];
            for (i64 k = 0; k < K; ++k)
                for (i64 ci = 0; ci < Ci; ++ci) {
                    const i64 src = t + (k - (K - 1) / 2) * dil;
                    if (src < 0 || src >= T) continue;
                    acc += w.values()[static_cast<size_t>((k * Ci + ci) * Co + co)] *
                           x.values()[static_cast<size_t>(src * Ci + ci)];
                }
            EXPECT_NEAR(y.values()[static_cast<size_t>(t * Co + co)], acc, 1e-12);
        }
}

TEST(Conv1d, BatchedMatchesPerItem) {
    Rng rng(22, 0);
    const i64 B = 3, T = 7, Ci = 2, Co = 4;
    Tensor x = randn({B, T, Ci}, rng), w = randn({3, Ci, Co}, rng), b = randn({Co}, rng);
    Tensor y = conv1d(x, w, b, 2);
    for (i64 bi = 0; bi < B; ++bi) {
        Tensor xi = Tensor::zeros({T, Ci});
        std::copy(x.raw() + bi * T * Ci, x.raw() + (bi + 1) * T * Ci, xi.raw());
        Tensor yi = conv1d(xi, w, b, 2);
        for (i64 i = 0; i < T * Co; ++i)
            EXPECT_DOUBLE_EQ(y.values()[static_cast<size_t>(bi * T * Co + i)],
                             yi.values()[static_cast<size_t>(i)]);
    }
}

TEST(Conv1d, GradCheck) {
    Rng rng(23, 0);
    std::vector<Tensor> inputs = {randn({7, 2}, rng), randn({3, 2, 3}, rng), randn({3}, rng)};
    auto f = [](Tape&, const std::vector<Tensor>& in) {
        return mean_all(conv1d(in[0], in[1], in[2], 4));
    };
    GradCheckReport rep = grad_check("conv1d_dil4", f, inputs, 1e-5, 1e-6);
    EXPECT_TRUE(rep.pass) << rep.max_rel_err;
}

TEST(Conv1d, RejectsBadShapes) {
    Tensor x = Tensor::zeros({5, 2});
    EXPECT_THROW(conv1d(x, Tensor::zeros({4, 2, 1}), Tensor::zeros({1}), 1), std::exception);
    EXPECT_THROW(conv1d(x, Tensor::zeros({3, 3, 1}), Tensor::zeros({1}), 1), std::exception);
}

TEST(Conv1d, PerLayerReceptiveField) {
    // Impulse response support of one conv = 1 + (K-1)*d.
    for (const auto& [K, d] : std::vector<std::pair<i64, i64>>{{3, 1}, {3, 4}, {5, 2}}) {
        const i64 T = 41;
        Tensor x = Tensor::zeros({T, 1});
        x.raw()[T / 2] = 1.0;
        Tensor w = Tensor::full({K, 1, 1}, 1.0);
        Tensor y = conv1d(x, w, Tensor::zeros({1}), d);
        i64 support = 0;
        for (i64 t = 0; t < T; ++t) support += y.values()[static_cast<size_t>(t)] != 0.0;
        EXPECT_EQ(support, 1 + (K - 1) * d) << "K=" << K << " d=" << d;
    }
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

TEST(Linear, Oracles) {
    Tensor w = Tensor::from({2, 2}, {1, 3, 2, 4});
    Tensor b = Tensor::zeros({2});
    Tensor y = linear(Tensor::from({2}, {1, 2}), w, b);
    EXPECT_DOUBLE_EQ(y.values()[0], 5.0);
    EXPECT_DOUBLE_EQ(y.values()[1], 11.0);

    Tensor bias = Tensor::from({2}, {0.5, -0.5});
    Tensor y0 = linear(Tensor::zeros({2}), w, bias);
    EXPECT_DOUBLE_EQ(y0.values()[0], 0.5);
    EXPECT_DOUBLE_EQ(y0.values()[1], -0.5);

    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor yi = linear(Tensor::from({2}, {3, 7}), eye, Tensor::zeros({2}));
    EXPECT_DOUBLE_EQ(yi.values()[0], 3.0);
    EXPECT_DOUBLE_EQ(yi.values()[1], 7.0);

    EXPECT_THROW(linear(Tensor::zeros({3}), w, b), std::exception);
}

TEST(Linear, GradCheck) {
    Rng rng(31, 0);
    std::vector<Tensor> inputs = {randn({4, 3}, rng), randn({3, 5}, rng), randn({5}, rng)};
    auto f = [](Tape&, const std::vector<Tensor>& in) {
        return mean_all(linear(in[0], in[1], in[2]));
    };
    EXPECT_TRUE(grad_check("linear", f, inputs, 1e-5, 1e-6).pass);
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

TEST(Activations, Values) {
    Tensor r = relu(Tensor::from({3}, {-1, 0, 2}));
    EXPECT_DOUBLE_EQ(r.values()[0], 0.0);
    EXPECT_DOUBLE_EQ(r.values()[1], 0.0);
    EXPECT_DOUBLE_EQ(r.values()[2], 2.0);
    EXPECT_DOUBLE_EQ(tanh_act(Tensor::zeros({1})).values()[0], 0.0);
    EXPECT_NEAR(tanh_act(Tensor::full({1}, 1.0)).values()[0], 0.761594155955765, 1e-12);
}

TEST(Activations, TanhDerivativeAtZeroIsOne) {
    Tape tape;
    Tensor x = tape.watch(Tensor::zeros({1}));
    Tensor y = tanh_act(x);
    tape.backward(y);
    ASSERT_NE(tape.grad_of(x), nullptr);
    EXPECT_DOUBLE_EQ((*tape.grad_of(x))[0], 1.0);
}

TEST(Activations, GradChecks) {
    Rng rng(32, 0);
    std::vector<Tensor> in1 = {randn_nonzero({4, 5}, rng)};
    auto frelu = [](Tape&, const std::vector<Tensor>& in) { return mean_all(relu(in[0])); };
    EXPECT_TRUE(grad_check("relu", frelu, in1, 1e-5, 1e-6).pass);
    std::vector<Tensor> in2 = {randn({4, 5}, rng)};
    auto ftanh = [](Tape&, const std::vector<Tensor>& in) { return mean_all(tanh_act(in[0])); };
    EXPECT_TRUE(grad_check("tanh", ftanh, in2, 1e-5, 1e-6).pass);
}

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

TEST(Elementwise, GradChecks) {
    Rng rng(33, 0);
    std::vector<Tensor> two = {randn({3, 4}, rng), randn({3, 4}, rng)};
    auto fadd = [](Tape&, const std::vector<Tensor>& in) { return mean_all(add(in[0], in[1])); };
    auto fsub = [](Tape&, const std::vector<Tensor>& in) { return mean_all(sub(in[0], in[1])); };
    auto fmul = [](Tape&, const std::vector<Tensor>& in) { return mean_all(mul(in[0], in[1])); };
    EXPECT_TRUE(grad_check("add", fadd, two, 1e-5, 1e-6).pass);
    EXPECT_TRUE(grad_check("sub", fsub, two, 1e-5, 1e-6).pass);
    EXPECT_TRUE(grad_check("mul", fmul, two, 1e-5, 1e-6).pass);

    std::vector<Tensor> one = {randn({3, 4}, rng)};
    auto fscale = [](Tape&, const std::vector<Tensor>& in) {
        return mean_all(scale(in[0], -2.5));
    };
    auto foffset = [](Tape&, const std::vector<Tensor>& in) {
        return mean_all(add_scalar(in[0], 1.5));
    };
    auto fsquare = [](Tape&, const std::vector<Tensor>& in) { return mean_all(square(in[0])); };
    EXPECT_TRUE(grad_check("scale", fscale, one, 1e-5, 1e-6).pass);
    EXPECT_TRUE(grad_check("add_scalar", foffset, one, 1e-5, 1e-6).pass);
    EXPECT_TRUE(grad_check("square", fsquare, one, 1e-5, 1e-6).pass);

    // rsqrt_add input kept positive and bounded away from the eps knee.
    Tensor pos = randn({3, 4}, rng);
    for (i64 i = 0; i < pos.numel(); ++i) pos.raw()[i] = 0.5 + std::abs(pos.raw()[i]);
    auto frs = [](Tape&, const std::vector<Tensor>& in) {
        return mean_all(rsqrt_add(in[0], 0.25));
    };
    EXPECT_TRUE(grad_check("rsqrt_add", frs, {pos}, 1e-5, 1e-6).pass);
}

// ---------------------------------------------------------------------------
// reductions and broadcasts
// ---------------------------------------------------------------------------

TEST(Reductions, MeanOracles) {
    EXPECT_DOUBLE_EQ(mean_all(Tensor::from({4}, {1, 2, 3, 4})).values()[0], 2.5);
    Tensor x = Tensor::from({2, 1}, {1, 3});
    Tensor p = mean_pool_time(x);
    ASSERT_EQ(p.shape, (std::vector<i64>{1}));
    EXPECT_DOUBLE_EQ(p.values()[0], 2.0);
    Tensor c = mean_pool_time(Tensor::full({5, 3}, 7.5));
    for (i64 i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(c.values()[i], 7.5);
}

TEST(Reductions, MeanPoolGradIsOneOverT) {
    Rng rng(34, 0);
    Tape tape;
    Tensor x = tape.watch(randn({5, 3}, rng));
    Tensor s = scale(mean_all(mean_pool_time(x)), 3.0);  // sum over pooled channels
    tape.backward(s);
    const std::vector<double>& g = *tape.grad_of(x);
    for (double v : g) EXPECT_NEAR(v, 1.0 / 5.0, 1e-12);
}

TEST(Reductions, GradChecks) {
    Rng rng(35, 0);
    std::vector<Tensor> x3 = {randn({2, 4, 3}, rng)};
    auto fma = [](Tape&, const std::vector<Tensor>& in) { return mean_all(in[0]); };
    auto fmbt = [](Tape&, const std::vector<Tensor>& in) { return mean_all(mean_bt(in[0])); };
    auto fmpt = [](Tape&, const std::vector<Tensor>& in) {
        return mean_all(mean_pool_time(in[0]));
    };
    EXPECT_TRUE(grad_check("mean_all", fma, x3, 1e-5, 1e-6).pass);
    EXPECT_TRUE(grad_check("mean_bt", fmbt, x3, 1e-5, 1e-6).pass);
    EXPECT_TRUE(grad_check("mean_pool_time", fmpt, x3, 1e-5, 1e-6).pass);
}

TEST(Broadcasts, GradChecks) {
    Rng rng(36, 0);
    std::vector<Tensor> xc = {randn({2, 4, 3}, rng), randn({3}, rng)};
    auto fsc = [](Tape&, const std::vector<Tensor>& in) {
        return mean_all(sub_channel(in[0], in[1]));
    };
    auto fmc = [](Tape&, const std::vector<Tensor>& in) {
        return mean_all(mul_channel(in[0], in[1]));
    };
    EXPECT_TRUE(grad_check("sub_channel", fsc, xc, 1e-5, 1e-6).pass);
    EXPECT_TRUE(grad_check("mul_channel", fmc, xc, 1e-5, 1e-6).pass);

    std::vector<Tensor> xbc = {randn({2, 4, 3}, rng), randn({2, 3}, rng)};
    auto fmbc = [](Tape&, const std::vector<Tensor>& in) {
        return mean_all(mul_bc(in[0], in[1]));
    };
    auto fabc = [](Tape&, const std::vector<Tensor>& in) {
        return mean_all(add_bc(in[0], in[1]));
    };
    EXPECT_TRUE(grad_check("mul_bc", fmbc, xbc, 1e-5, 1e-6).pass);
    EXPECT_TRUE(grad_check("add_bc", fabc, xbc, 1e-5, 1e-6).pass);

    std::vector<Tensor> xt = {randn({2, 4, 3}, rng), randn({2, 4}, rng)};
    auto fmt = [](Tape&, const std::vector<Tensor>& in) {
        return mean_all(mul_time(in[0], in[1]));
    };
    EXPECT_TRUE(grad_check("mul_time", fmt, xt, 1e-5, 1e-6).pass);
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

TEST(Upsample, Oracles) {
    Tensor x = Tensor::from({2, 1}, {1, 2});
    Tensor y1 = upsample_nearest(x, 1);
    for (i64 i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(y1.values()[i], x.values()[i]);

    Tensor y2 = upsample_nearest(Tensor::from({2, 1}, {3, 9}), 2);
    const std::vector<double> e2 = {3, 3, 9, 9};
    for (i64 i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y2.values()[i], e2[static_cast<size_t>(i)]);

    Tensor y3 = upsample_nearest(x, 3);
    const std::vector<double> e3 = {1, 1, 1, 2, 2, 2};
    ASSERT_EQ(y3.shape, (std::vector<i64>{6, 1}));
    for (i64 i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(y3.values()[i], e3[static_cast<size_t>(i)]);

    EXPECT_THROW(upsample_nearest(x, 0), std::exception);
}

TEST(Upsample, GradOfSumIsReplicationCount) {
    Tape tape;
    Tensor x = tape.watch(Tensor::from({2, 1}, {1, 2}));
    Tensor y = upsample_nearest(x, 3);
    Tensor s = scale(mean_all(y), static_cast<double>(y.numel()));  // sum
    tape.backward(s);
    const std::vector<double>& g = *tape.grad_of(x);
    EXPECT_NEAR(g[0], 3.0, 1e-12);
    EXPECT_NEAR(g[1], 3.0, 1e-12);
}

TEST(Upsample, GradCheck) {
    Rng rng(37, 0);
    std::vector<Tensor> in = {randn({2, 3, 2}, rng)};
    auto f = [](Tape&, const std::vector<Tensor>& i) {
        return mean_all(upsample_nearest(i[0], 3));
    };
    EXPECT_TRUE(grad_check("upsample_nearest", f, in, 1e-5, 1e-6).pass);
}

TEST(BlockReshape, Oracles) {
    Tensor big = Tensor::zeros({1920, 1});
    Tensor r = block_reshape(big, 8);
    EXPECT_EQ(r.shape, (std::vector<i64>{240, 8}));

    Tensor x = Tensor::from({4, 1}, {5, 6, 7, 8});
    Tensor same = block_reshape(x, 1);
    EXPECT_EQ(same.shape, x.shape);

    std::vector<double> vals(12);
    for (int i = 0; i < 12; ++i) vals[static_cast<size_t>(i)] = i;
    Tensor seq = Tensor::from({12, 1}, vals);
    Tensor rows = block_reshape(seq, 3);
    ASSERT_EQ(rows.shape, (std::vector<i64>{4, 3}));
    for (i64 t = 0; t < 4; ++t)
        for (i64 c = 0; c < 3; ++c)
            EXPECT_DOUBLE_EQ(rows.values()[static_cast<size_t>(t * 3 + c)],
                             static_cast<double>(t * 3 + c));

    EXPECT_THROW(block_reshape(Tensor::zeros({5, 1}), 3), std::exception);
}

TEST(BlockReshape, InverseIsBitExact) {
    Rng rng(38, 0);
    Tensor x = randn({12, 2}, rng);
    Tensor y = block_reshape(x, 3);
    // Folding is a pure reinterpretation; folding the flat payload back to the
    // original shape reproduces x bit-for-bit.
    Tensor back = Tensor::from(x.shape, *y.data);
    for (i64 i = 0; i < x.numel(); ++i) EXPECT_EQ(back.values()[i], x.values()[i]);
}

TEST(BlockReshape, GradCheck) {
    Rng rng(39, 0);
    std::vector<Tensor> in = {randn({2, 6, 2}, rng)};
    auto f = [](Tape&, const std::vector<Tensor>& i) {
        Tensor y = block_reshape(i[0], 3);
        return mean_all(mul(y, y));  // non-linear so the permutation matters
    };
    EXPECT_TRUE(grad_check("block_reshape", f, in, 1e-5, 1e-6).pass);
}

TEST(GatherWindows, OracleAndBounds) {
    Rng rng(40, 0);
    Tensor x = randn({2, 8, 3}, rng);
    Tensor w = gather_windows(x, {2, 5}, 3);
    ASSERT_EQ(w.shape, (std::vector<i64>{2, 3, 3}));
    for (i64 t = 0; t < 3; ++t)
        for (i64 c = 0; c < 3; ++c) {
            EXPECT_EQ(w.values()[static_cast<size_t>((0 * 3 + t) * 3 + c)],
                      x.values()[static_cast<size_t>((0 * 8 + 2 + t) * 3 + c)]);
            EXPECT_EQ(w.values()[static_cast<size_t>((1 * 3 + t) * 3 + c)],
                      x.values()[static_cast<size_t>((1 * 8 + 5 + t) * 3 + c)]);
        }
    EXPECT_THROW(gather_windows(x, {2, 6}, 3), std::exception);
    EXPECT_THROW(gather_windows(x, {2}, 3), std::exception);
}

TEST(GatherWindows, GradCheck) {
    Rng rng(41, 0);
    std::vector<Tensor> in = {randn({2, 8, 2}, rng)};
    auto f = [](Tape&, const std::vector<Tensor>& i) {
        Tensor w = gather_windows(i[0], {1, 4}, 4);
        return mean_all(mul(w, w));
    };
    EXPECT_TRUE(grad_check("gather_windows", f, in, 1e-5, 1e-6).pass);
}

// ---------------------------------------------------------------------------
// backward mechanics
// ---------------------------------------------------------------------------

TEST(Backward, RootParameterGetsUnitGradient) {
    Tape tape;
    Tensor p = tape.watch(Tensor::full({1}, 4.0));
    tape.backward(p);
    ASSERT_NE(tape.grad_of(p), nullptr);
    EXPECT_DOUBLE_EQ((*tape.grad_of(p))[0], 1.0);
}

TEST(Backward, SumThroughIdentityConvIsAllOnes) {
    Tape tape;
    Tensor x = tape.watch(Tensor::from({5, 1}, {1, 2, 3, 4, 5}));
    Tensor w = Tensor::from({3, 1, 1}, {0, 1, 0});
    Tensor y = conv1d(x, w, Tensor::zeros({1}), 1);
    Tensor s = scale(mean_all(y), 5.0);
    tape.backward(s);
    for (double g : *tape.grad_of(x)) EXPECT_NEAR(g, 1.0, 1e-12);
}

TEST(Backward, RejectsNonScalarRoot) {
    Tape tape;
    Tensor x = tape.watch(Tensor::zeros({3}));
    Tensor y = relu(x);
    EXPECT_THROW(tape.backward(y), std::exception);
}

TEST(Backward, UnreachedInputHasNullGradient) {
    Tape tape;
    Tensor used = tape.watch(Tensor::full({1}, 2.0));
    Tensor unused = tape.watch(Tensor::full({1}, 3.0));
    tape.backward(square(used));
    EXPECT_NE(tape.grad_of(used), nullptr);
    EXPECT_EQ(tape.grad_of(unused), nullptr);
}

TEST(GradCheckSelf, IdentityHasZeroError) {
    auto f = [](Tape&, const std::vector<Tensor>& in) { return in[0]; };
    GradCheckReport rep = grad_check("identity", f, {Tensor::full({1}, 0.3)}, 1e-5, 1e-6);
    EXPECT_TRUE(rep.pass);
    EXPECT_LT(rep.max_rel_err, 1e-9);
}

TEST(GradCheckSelf, TanhSumPasses) {
    Rng rng(42, 0);
    auto f = [](Tape&, const std::vector<Tensor>& in) { return mean_all(tanh_act(in[0])); };
    EXPECT_TRUE(grad_check("tanh_sum", f, {randn({6}, rng)}, 1e-5, 1e-6).pass);
}

TEST(Determinism, RepeatedForwardIsBitwiseEqual) {
    Rng rng(43, 0);
    Tensor x = randn({4, 6, 3}, rng), w = randn({3, 3, 5}, rng), b = randn({5}, rng);
    Tensor y1 = conv1d(x, w, b, 2);
    Tensor y2 = conv1d(x, w, b, 2);
    for (i64 i = 0; i < y1.numel(); ++i) EXPECT_EQ(y1.values()[i], y2.values()[i]);
}

}  // namespace
