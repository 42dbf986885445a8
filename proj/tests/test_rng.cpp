#include "gantts/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <unordered_set>
#include <vector>

namespace {

using gantts::Rng;
using gantts::u64;

// Regularized incomplete gamma functions (series + continued fraction), used
// to turn chi-square statistics into p-values without external dependencies.
double gamma_p_series(double s, double x) {
    double sum = 1.0 / s, term = sum;
    for (int n = 1; n < 500; ++n) {
        term *= x / (s + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

double gamma_q_contfrac(double s, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - s, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - s);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-15) break;
    }
    return h * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

// P(Chi2_df >= stat)
double chi2_pvalue(double df, double stat) {
    const double s = df / 2.0, x = stat / 2.0;
    if (x <= 0.0) return 1.0;
    if (x < s + 1.0) return 1.0 - gamma_p_series(s, x);
    return gamma_q_contfrac(s, x);
}

TEST(Rng, SameSeedSameSequence) {
    Rng a = Rng::for_purpose(7, "probe", 1, 2);
    Rng b = Rng::for_purpose(7, "probe", 1, 2);
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, NthDrawIsPureFunctionOfCounter) {
    Rng a(3, 9);
    std::vector<u64> seq;
    for (int i = 0; i < 10; ++i) seq.push_back(a.next_u64());
    Rng b(3, 9);
    b.next_u64();
    b.next_u64();
    b.next_u64();
    EXPECT_EQ(b.next_u64(), seq[3]);
}

TEST(Rng, SplitStreamsDisjointOverMillionDraws) {
    Rng parent(42, 0);
    Rng child = parent.split();
    std::unordered_set<u64> seen;
    seen.reserve(2'200'000);
    for (int i = 0; i < 1'000'000; ++i) ASSERT_TRUE(seen.insert(parent.next_u64()).second);
    for (int i = 0; i < 1'000'000; ++i) ASSERT_TRUE(seen.insert(child.next_u64()).second);
}

TEST(Rng, SplitAdvancesParentByOneCounterStep) {
    Rng a(5, 17);
    (void)a.split();
    Rng b(5, 17);
    (void)b.next_u64();  // same counter position as the split consumed
    EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SuccessiveSplitsDiffer) {
    Rng parent(1, 1);
    Rng c1 = parent.split();
    Rng c2 = parent.split();
    EXPECT_NE(c1.stream_id(), c2.stream_id());
    EXPECT_NE(c1.next_u64(), c2.next_u64());
}

TEST(Rng, PurposeKeysSeparateStreams) {
    EXPECT_NE(Rng::for_purpose(0, "data").next_u64(), Rng::for_purpose(0, "z-d").next_u64());
    EXPECT_NE(Rng::for_purpose(0, "data", 1).next_u64(), Rng::for_purpose(0, "data", 2).next_u64());
    EXPECT_NE(Rng::for_purpose(0, "data", 1, 0).next_u64(),
              Rng::for_purpose(0, "data", 1, 1).next_u64());
    EXPECT_NE(Rng::for_purpose(0, "data").next_u64(), Rng::for_purpose(1, "data").next_u64());
}

TEST(Rng, NextBelowBoundsAndCoverage) {
    Rng r(11, 0);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 1000; ++i) {
        const u64 v = r.next_below(7);
        ASSERT_LT(v, 7u);
        hits[static_cast<size_t>(v)]++;
    }
    for (int c : hits) EXPECT_GT(c, 0);
}

TEST(Rng, NextBelowChiSquareUniform) {
    const int bins = 64, draws = 100'000;
    Rng r(123, 0);
    std::vector<int> count(bins, 0);
    for (int i = 0; i < draws; ++i) count[static_cast<size_t>(r.next_below(bins))]++;
    const double expected = static_cast<double>(draws) / bins;
    double stat = 0.0;
    for (int c : count) stat += (c - expected) * (c - expected) / expected;
    const double p = chi2_pvalue(bins - 1, stat);
    EXPECT_GT(p, 0.001) << "chi2 stat " << stat;
}

TEST(Rng, DoublesInUnitIntervalWithCorrectMean) {
    Rng r(9, 0);
    const int n = 10'000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = r.next_double();
        ASSERT_GE(v, 0.0);
        ASSERT_LT(v, 1.0);
        sum += v;
    }
    const double mean = sum / n;
    EXPECT_NEAR(mean, 0.5, 4.0 / std::sqrt(12.0 * n));
}

TEST(Rng, NormalMoments) {
    Rng r(77, 0);
    const int n = 100'000;
    double s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = r.next_normal();
        s1 += v;
        s2 += v * v;
        s3 += v * v * v;
    }
    const double mean = s1 / n;
    const double var = s2 / n - mean * mean;
    const double skew = s3 / n - 3.0 * mean * var - mean * mean * mean;
    EXPECT_NEAR(mean, 0.0, 4.0 / std::sqrt(static_cast<double>(n)));
    EXPECT_NEAR(var, 1.0, 0.02);
    EXPECT_NEAR(skew, 0.0, 0.05);
}

TEST(Rng, NormalConsumesExactlyTwoDraws) {
    Rng r(2, 4);
    for (int k = 1; k <= 5; ++k) {
        (void)r.next_normal();
        EXPECT_EQ(r.counter(), static_cast<u64>(2 * k));
    }
}

}  // namespace
