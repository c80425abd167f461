#include <gtest/gtest.h>

#include <cmath>

#include "nemc/errors.hpp"
#include "nemc/rng.hpp"
#include "nemc/tensor.hpp"

using nemc::ConfigError;
using nemc::IntegrityError;
using nemc::Rng;
using nemc::TensorF32;
using nemc::TensorU8;

TEST(Tensor, ShapeValidation) {
    EXPECT_THROW(TensorF32(std::vector<std::int64_t>{}), ConfigError);
    EXPECT_THROW(TensorF32({1, 2, 3, 4, 5}), ConfigError);
    EXPECT_THROW(TensorF32({2, 0}), ConfigError);
    EXPECT_THROW(TensorF32({-1}), ConfigError);
    TensorF32 t({2, 3, 4, 5});
    EXPECT_EQ(t.size(), 120);
    EXPECT_EQ(t.rank(), 4);
}

TEST(Tensor, DataShapeMismatch) {
    EXPECT_THROW(TensorF32({2, 2}, std::vector<float>{1.0f, 2.0f, 3.0f}), ConfigError);
}

TEST(Tensor, RowMajorIndexing) {
    TensorF32 t({2, 3});
    t.at2(1, 2) = 7.0f;
    EXPECT_FLOAT_EQ(t[5], 7.0f);
    TensorF32 u({2, 2, 2, 2});
    u.at4(1, 0, 1, 0) = 3.0f;
    EXPECT_FLOAT_EQ(u[10], 3.0f);
}

TEST(Tensor, ReshapePreservesDataAndChecksCount) {
    TensorF32 t({2, 6});
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i);
    const TensorF32 r = t.reshaped({3, 4});
    for (std::int64_t i = 0; i < r.size(); ++i) EXPECT_FLOAT_EQ(r[i], static_cast<float>(i));
    EXPECT_THROW(t.reshaped({5, 2}), ConfigError);
}

TEST(Tensor, FiniteCheck) {
    TensorF32 t({3});
    t[1] = std::numeric_limits<float>::infinity();
    EXPECT_THROW(t.check_finite("test"), IntegrityError);
    t[1] = std::nanf("");
    EXPECT_THROW(t.check_finite("test"), IntegrityError);
    t[1] = 1.0f;
    EXPECT_NO_THROW(t.check_finite("test"));
}

TEST(TensorU8, EqualityAndFill) {
    TensorU8 a({2, 3}, 1);
    TensorU8 b({2, 3}, 1);
    EXPECT_EQ(a, b);
    b[0] = 0;
    EXPECT_FALSE(a == b);
}

TEST(Rng, DeterministicStreams) {
    Rng a = Rng::stream(42, 1, 2, 3);
    Rng b = Rng::stream(42, 1, 2, 3);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    Rng c = Rng::stream(42, 1, 2, 4);
    EXPECT_NE(Rng::stream(42, 1, 2, 3).next_u64(), c.next_u64());
}

TEST(Rng, UnitRangeAndMoments) {
    Rng r(7);
    double sum = 0.0, sum_sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.next_unit();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
        sum_sq += u * u;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    EXPECT_NEAR(mean, 0.5, 0.005);
    EXPECT_NEAR(var, 1.0 / 12.0, 0.002);
}

TEST(Rng, GaussianMoments) {
    Rng r(11);
    double sum = 0.0, sum_sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double g = r.next_gaussian();
        sum += g;
        sum_sq += g * g;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    EXPECT_NEAR(mean, 0.0, 0.01);
    EXPECT_NEAR(std::sqrt(var), 1.0, 0.01);
}

TEST(Rng, NextBelowCoversRange) {
    Rng r(3);
    bool seen[5] = {false, false, false, false, false};
    for (int i = 0; i < 200; ++i) seen[r.next_below(5)] = true;
    for (bool s : seen) EXPECT_TRUE(s);
}
