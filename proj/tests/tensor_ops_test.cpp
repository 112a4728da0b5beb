#include <cmath>
#include <numeric>

#include "gtest/gtest.h"
#include "imn/tensor/ops.hpp"
#include "support.hpp"

namespace imn {
namespace {

using testing::random_tensor;

// Direct quadruple loop over a zero-padded input, accumulated in long double.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>* bias, Padding2d pad) {
  const std::size_t n = x.extent(0), cin = x.extent(1), h = x.extent(2), w = x.extent(3);
  const std::size_t cout = k.extent(0), kh = k.extent(2), kw = k.extent(3);
  const std::size_t oh = h + 2 * pad.height - kh + 1, ow = w + 2 * pad.width - kw + 1;
  Tensor<double> y({n, cout, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          long double acc = bias ? (*bias)[o] : 0.0L;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t p = 0; p < kh; ++p)
              for (std::size_t q = 0; q < kw; ++q) {
                const long long yi = static_cast<long long>(i + p) - static_cast<long long>(pad.height);
                const long long xj = static_cast<long long>(j + q) - static_cast<long long>(pad.width);
                if (yi < 0 || xj < 0 || yi >= static_cast<long long>(h) || xj >= static_cast<long long>(w)) continue;
                acc += static_cast<long double>(x.at(b, c, yi, xj)) * k.at(o, c, p, q);
              }
          y.at(b, o, i, j) = static_cast<double>(acc);
        }
  return y;
}

template <typename T>
Tensor<T> run_conv(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>* bias, Padding2d pad) {
  Tape<T> tape;
  std::optional<Var<T>> b;
  if (bias) b = tape.constant(*bias);
  return conv2d(tape, tape.constant(x), tape.constant(k), b, pad).value();
}

TEST(Conv2d, ZeroInputGivesZeroOutput) {
  Rng rng(1);
  const auto k = random_tensor<float>({3, 2, 3, 5}, rng);
  const auto y = run_conv<float>(Tensor<float>({2, 2, 4, 6}), k, nullptr, Padding2d{1, 2});
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2d, UnitKernelScales) {
  const Tensor<float> x({1, 1, 2, 2}, {1, 3, 5, 7});
  const Tensor<float> k({1, 1, 1, 1}, {2});
  const auto y = run_conv<float>(x, k, nullptr, Padding2d{0, 0});
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y.storage(), (std::vector<float>{2, 6, 10, 14}));
}

TEST(Conv2d, MatchesNaiveOracleOnDocumentedCase) {
  Rng rng(2);
  const auto x = random_tensor<double>({1, 2, 5, 9}, rng);
  const auto k = random_tensor<double>({3, 2, 3, 5}, rng);
  const auto b = random_tensor<double>({3}, rng);
  const auto y = run_conv(x, k, &b, Padding2d{1, 2});
  const auto ref = naive_conv(x, k, &b, Padding2d{1, 2});
  ASSERT_EQ(y.shape(), ref.shape());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Conv2d, MatchesNaiveOracleOnRandomConfigurations) {
  Rng rng(3);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t n = 1 + rng.below(3), cin = 1 + rng.below(4), cout = 1 + rng.below(4);
    const std::size_t h = 1 + rng.below(6), w = 1 + rng.below(12);
    const std::size_t ph = rng.below(3), pw = rng.below(4);
    const std::size_t kh = 1 + rng.below(h + 2 * ph), kw = 1 + rng.below(std::min<std::size_t>(w + 2 * pw, 7));
    const auto x = random_tensor<double>({n, cin, h, w}, rng);
    const auto k = random_tensor<double>({cout, cin, kh, kw}, rng);
    const auto b = random_tensor<double>({cout}, rng);
    const bool with_bias = rng.below(2) == 1;
    const auto ref = naive_conv(x, k, with_bias ? &b : nullptr, Padding2d{ph, pw});
    const auto y = run_conv(x, k, with_bias ? &b : nullptr, Padding2d{ph, pw});
    ASSERT_EQ(y.shape(), ref.shape()) << "trial " << trial;
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y[i], ref[i], 1e-6) << "trial " << trial;

    // single precision against the same oracle, scaled by the dot-product length
    const auto yf = run_conv<float>(x.cast<float>(), k.cast<float>(), nullptr, Padding2d{ph, pw});
    const auto reff = naive_conv(x, k, nullptr, Padding2d{ph, pw});
    for (std::size_t i = 0; i < yf.size(); ++i) {
      ASSERT_NEAR(yf[i], reff[i], 1e-5 * static_cast<double>(cin * kh * kw)) << "trial " << trial;
    }
  }
}

TEST(Conv2d, RejectsMismatchedShapes) {
  Tape<float> tape;
  auto x = tape.constant(Tensor<float>({1, 2, 4, 4}));
  EXPECT_THROW(conv2d(tape, x, tape.constant(Tensor<float>({1, 3, 3, 3})), std::optional<Var<float>>{}, Padding2d{1, 1}),
               ShapeError);
  EXPECT_THROW(conv2d(tape, x, tape.constant(Tensor<float>({1, 2, 7, 3})), std::optional<Var<float>>{}, Padding2d{1, 1}),
               ShapeError);
  EXPECT_THROW(conv2d(tape, x, tape.constant(Tensor<float>({2, 2, 3, 3})), std::optional<Var<float>>{tape.constant(Tensor<float>({3}))},
                      Padding2d{1, 1}),
               ShapeError);
}

// Extended-precision batch statistics.
Tensor<double> naive_batchnorm(const Tensor<double>& x, const Tensor<double>& gamma, const Tensor<double>& beta,
                               double eps) {
  const std::size_t n = x.extent(0), ch = x.extent(1), plane = x.extent(2) * x.extent(3);
  Tensor<double> y(x.shape());
  for (std::size_t c = 0; c < ch; ++c) {
    long double mean = 0.0L, var = 0.0L;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < plane; ++i) mean += x[(b * ch + c) * plane + i];
    mean /= static_cast<long double>(n * plane);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < plane; ++i) {
        const long double d = x[(b * ch + c) * plane + i] - mean;
        var += d * d;
      }
    var /= static_cast<long double>(n * plane);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t idx = (b * ch + c) * plane + i;
        y[idx] = static_cast<double>(gamma[c] * (x[idx] - mean) / std::sqrt(var + eps) + beta[c]);
      }
  }
  return y;
}

TEST(BatchNorm2d, TrainModeStandardizesEachChannel) {
  Rng rng(4);
  const auto x = random_tensor<float>({4, 3, 2, 5}, rng, 3.0);
  BatchNormState<float> state(3);
  Tape<float> tape;
  const auto y = batchnorm2d(tape, tape.constant(x), tape.constant(Tensor<float>({3}, 1.0f)),
                             tape.constant(Tensor<float>({3}, 0.0f)), state, BnMode::train)
                     .value();
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 10; ++i) mean += y[(b * 3 + c) * 10 + i];
    mean /= 40.0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 10; ++i) sq += std::pow(y[(b * 3 + c) * 10 + i] - mean, 2);
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(sq / 40.0, 1.0, 1e-5 + 1e-5 * 1.0);  // eps inside the square root shifts the variance by ~eps/var
  }
}

TEST(BatchNorm2d, ZeroGammaCollapsesToBeta) {
  Rng rng(5);
  const auto x = random_tensor<float>({2, 2, 3, 4}, rng);
  BatchNormState<float> state(2);
  Tape<float> tape;
  const auto y = batchnorm2d(tape, tape.constant(x), tape.constant(Tensor<float>({2}, 0.0f)),
                             tape.constant(Tensor<float>({2}, 5.0f)), state, BnMode::train)
                     .value();
  for (float v : y.data()) EXPECT_EQ(v, 5.0f);
}

TEST(BatchNorm2d, MatchesExtendedPrecisionOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_tensor<double>({1 + rng.below(4), 1 + rng.below(5), 1 + rng.below(4), 2 + rng.below(9)}, rng, 2.0);
    const std::size_t ch = x.extent(1);
    const auto gamma = random_tensor<double>({ch}, rng), beta = random_tensor<double>({ch}, rng);
    BatchNormState<double> state(ch);
    Tape<double> tape;
    const auto y = batchnorm2d(tape, tape.constant(x), tape.constant(gamma), tape.constant(beta), state, BnMode::train).value();
    const auto ref = naive_batchnorm(x, gamma, beta, kBatchNormEpsilon);
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y[i], ref[i], 1e-5);

    const auto yf = [&] {
      BatchNormState<float> s(ch);
      Tape<float> t;
      return batchnorm2d(t, t.constant(x.cast<float>()), t.constant(gamma.cast<float>()),
                         t.constant(beta.cast<float>()), s, BnMode::train)
          .value();
    }();
    for (std::size_t i = 0; i < yf.size(); ++i) ASSERT_NEAR(yf[i], ref[i], 1e-5);
  }
}

TEST(BatchNorm2d, RunningStatisticsFollowMovingAverage) {
  const Tensor<double> x({2, 1, 1, 2}, {1, 2, 3, 6});
  BatchNormState<double> state(1);
  Tape<double> tape;
  batchnorm2d(tape, tape.constant(x), tape.constant(Tensor<double>({1}, 1.0)), tape.constant(Tensor<double>({1}, 0.0)),
              state, BnMode::train);
  // mean 3, unbiased variance (4+1+0+9)/3
  EXPECT_DOUBLE_EQ(state.running_mean[0], 0.1 * 3.0);
  EXPECT_DOUBLE_EQ(state.running_var[0], 0.9 + 0.1 * 14.0 / 3.0);
  EXPECT_EQ(state.batches_tracked, 1);
}

TEST(BatchNorm2d, EvalModeUsesRunningStatistics) {
  BatchNormState<double> state(1);
  state.running_mean[0] = 2.0;
  state.running_var[0] = 4.0;
  state.batches_tracked = 1;
  Tape<double> tape;
  const auto y = batchnorm2d(tape, tape.constant(Tensor<double>({1, 1, 1, 2}, {2.0, 6.0})),
                             tape.constant(Tensor<double>({1}, 3.0)), tape.constant(Tensor<double>({1}, 1.0)), state,
                             BnMode::eval)
                     .value();
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], 3.0 * 4.0 / std::sqrt(4.0 + kBatchNormEpsilon) + 1.0, 1e-12);
}

TEST(BatchNorm2d, EvalBeforeAnyStatisticsFails) {
  BatchNormState<float> state(1);
  Tape<float> tape;
  EXPECT_THROW(batchnorm2d(tape, tape.constant(Tensor<float>({1, 1, 1, 2})), tape.constant(Tensor<float>({1}, 1.0f)),
                           tape.constant(Tensor<float>({1}, 0.0f)), state, BnMode::eval),
               std::logic_error);
}

TEST(BatchNorm2d, TrainModeNeedsTwoValuesPerChannel) {
  BatchNormState<float> state(1);
  Tape<float> tape;
  EXPECT_THROW(batchnorm2d(tape, tape.constant(Tensor<float>({1, 1, 1, 1})), tape.constant(Tensor<float>({1}, 1.0f)),
                           tape.constant(Tensor<float>({1}, 0.0f)), state, BnMode::train),
               ShapeError);
}

double gelu_oracle(double x) {
  const long double lx = x;
  return static_cast<double>(0.5L * lx * (1.0L + std::erf(lx / std::sqrt(2.0L))));
}

TEST(Gelu, KnownValues) {
  Tape<double> tape;
  const auto y = gelu(tape, tape.constant(Tensor<double>({4}, {0.0, 1.0, -20.0, 20.0}))).value();
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 0.841345, 1e-5);
  EXPECT_NEAR(y[1], gelu_oracle(1.0), 1e-12);
  EXPECT_LT(std::abs(y[2]), 1e-8);
  EXPECT_NEAR(y[3], 20.0, 1e-6);

  Tape<float> tf;
  const auto yf = gelu(tf, tf.constant(Tensor<float>({3}, {1.0f, -20.0f, 20.0f}))).value();
  EXPECT_NEAR(yf[0], 0.841345, 1e-5);
  EXPECT_LT(std::abs(yf[1]), 1e-8);
  EXPECT_NEAR(yf[2], 20.0, 1e-6);
}

TEST(Gelu, MatchesErfOracle) {
  Rng rng(7);
  const auto x = random_tensor<double>({200}, rng, 3.0);
  Tape<double> tape;
  const auto y = gelu(tape, tape.constant(x)).value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], gelu_oracle(x[i]), 1e-12);
}

Tensor<double> naive_maxpool(const Tensor<double>& x, std::size_t pw) {
  Tensor<double> y({x.extent(0), x.extent(1), x.extent(2), x.extent(3) / pw});
  for (std::size_t i = 0; i < y.size(); ++i) {
    double best = x[i * pw];
    for (std::size_t j = 1; j < pw; ++j) best = std::max(best, x[i * pw + j]);
    y[i] = best;
  }
  return y;
}

TEST(MaxPool, PairwiseMaximum) {
  Tape<float> tape;
  const auto y = maxpool2d(tape, tape.constant(Tensor<float>({1, 1, 1, 4}, {1, 5, 3, 2})), 2).value();
  EXPECT_EQ(y.storage(), (std::vector<float>{5, 3}));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 2}));
}

TEST(MaxPool, MonotoneRowKeepsEverySecondElement) {
  std::vector<float> row(10);
  std::iota(row.begin(), row.end(), 0.0f);
  Tape<float> tape;
  const auto y = maxpool2d(tape, tape.constant(Tensor<float>({1, 1, 1, 10}, row)), 2).value();
  EXPECT_EQ(y.storage(), (std::vector<float>{1, 3, 5, 7, 9}));
}

TEST(MaxPool, MatchesWindowScanOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t pw = 1 + rng.below(4);
    const auto x = random_tensor<double>({1 + rng.below(3), 1 + rng.below(4), 1 + rng.below(4), pw * (1 + rng.below(6))}, rng);
    Tape<double> tape;
    const auto y = maxpool2d(tape, tape.constant(x), pw).value();
    ASSERT_EQ(y, naive_maxpool(x, pw)) << "trial " << trial;
  }
}

TEST(MaxPool, GradientGoesToFirstMaximumOnTies) {
  Tensor<double> x({1, 1, 1, 4}, {2.0, 2.0, -1.0, 3.0});
  x.set_requires_grad(true);
  Tape<double> tape;
  tape.backward(sum(tape, maxpool2d(tape, tape.parameter(x), 2)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{1, 0, 0, 1}));
}

TEST(MaxPool, IndivisibleWidthFails) {
  Tape<float> tape;
  EXPECT_THROW(maxpool2d(tape, tape.constant(Tensor<float>({1, 1, 1, 5})), 2), ShapeError);
}

TEST(Upsample, Replicates) {
  Tape<float> tape;
  EXPECT_EQ(upsample_nearest(tape, tape.constant(Tensor<float>({1, 1, 1, 2}, {1, 2})), 2).value().storage(),
            (std::vector<float>{1, 1, 2, 2}));
  const Tensor<float> x({1, 2, 1, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(upsample_nearest(tape, tape.constant(x), 1).value(), x);
}

TEST(Upsample, MatchesDirectReplicationOracle) {
  Rng rng(9);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t f = 1 + rng.below(4);
    const auto x = random_tensor<double>({1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(4), 1 + rng.below(8)}, rng);
    Tape<double> tape;
    const auto y = upsample_nearest(tape, tape.constant(x), f).value();
    ASSERT_EQ(y.shape(), (Shape{x.extent(0), x.extent(1), x.extent(2), x.extent(3) * f}));
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_EQ(y[i], x[i / f]) << "trial " << trial;
  }
}

TEST(Linear, IdentityAndBiasOnly) {
  Rng rng(10);
  const auto x = random_tensor<float>({3, 4}, rng);
  Tensor<float> eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0f;
  Tape<float> tape;
  EXPECT_EQ(linear(tape, tape.constant(x), tape.constant(eye), tape.constant(Tensor<float>({4}))).value(), x);
  const Tensor<float> b({2}, {0.5f, -1.5f});
  const auto y = linear(tape, tape.constant(x), tape.constant(Tensor<float>({4, 2})), tape.constant(b)).value();
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(y.at(r, 0), 0.5f);
    EXPECT_EQ(y.at(r, 1), -1.5f);
  }
}

TEST(Linear, MatchesNaiveMatmul) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(5), d = 1 + rng.below(6), k = 1 + rng.below(4);
    const auto x = random_tensor<double>({n, d}, rng), w = random_tensor<double>({d, k}, rng), b = random_tensor<double>({k}, rng);
    Tape<double> tape;
    const auto y = linear(tape, tape.constant(x), tape.constant(w), tape.constant(b)).value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double acc = 0.0;
        for (std::size_t m = 0; m < d; ++m) acc += x.at(i, m) * w.at(m, j);
        ASSERT_DOUBLE_EQ(y.at(i, j), acc + b[j]);
      }
  }
  const auto x = random_tensor<float>({3, 4}, rng), w = random_tensor<float>({4, 2}, rng);
  Tape<float> tape;
  const auto y = linear(tape, tape.constant(x), tape.constant(w), tape.constant(Tensor<float>({2}))).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (std::size_t m = 0; m < 4; ++m) acc += static_cast<double>(x.at(i, m)) * w.at(m, j);
      EXPECT_EQ(y.at(i, j), static_cast<float>(acc));
    }
}

TEST(Linear, RejectsMismatchedInnerDimension) {
  Tape<float> tape;
  EXPECT_THROW(linear(tape, tape.constant(Tensor<float>({2, 3})), tape.constant(Tensor<float>({4, 2})),
                      tape.constant(Tensor<float>({2}))),
               ShapeError);
}

TEST(GlobalAvgPool, ConstantAndArithmeticMean) {
  Tape<float> tape;
  const auto y = global_avg_pool(tape, tape.constant(Tensor<float>({2, 3, 2, 5}, 1.75f))).value();
  EXPECT_EQ(y.shape(), (Shape{2, 3}));
  for (float v : y.data()) EXPECT_EQ(v, 1.75f);
  EXPECT_EQ(global_avg_pool(tape, tape.constant(Tensor<float>({1, 1, 2, 2}, {1, 2, 3, 4}))).value()[0], 2.5f);
}

TEST(GlobalAvgPool, MatchesCompensatedSum) {
  Rng rng(12);
  const auto x = random_tensor<double>({3, 4, 12, 64}, rng, 5.0);
  Tape<double> tape;
  const auto y = global_avg_pool(tape, tape.constant(x)).value();
  const std::size_t plane = 12 * 64;
  for (std::size_t i = 0; i < 12; ++i) {
    double s = 0.0, comp = 0.0;
    for (std::size_t j = 0; j < plane; ++j) {
      const double v = x[i * plane + j] - comp;
      const double t = s + v;
      comp = (t - s) - v;
      s = t;
    }
    EXPECT_NEAR(y[i], s / static_cast<double>(plane), 1e-7);
  }
}

TEST(Softmax, UniformAndLargeLogits) {
  Tape<double> tape;
  const auto u = softmax(tape, tape.constant(Tensor<double>({1, 2}, {3.0, 3.0}))).value();
  EXPECT_DOUBLE_EQ(u[0], 0.5);
  EXPECT_DOUBLE_EQ(u[1], 0.5);
  Tape<float> tf;
  const auto big = softmax(tf, tf.constant(Tensor<float>({1, 2}, {1000.0f, 0.0f}))).value();
  EXPECT_TRUE(big.all_finite());
  EXPECT_NEAR(big[0], 1.0f, 1e-7);
  EXPECT_NEAR(big[1], 0.0f, 1e-7);
}

TEST(Softmax, MatchesExtendedPrecisionOracleAndRowsSumToOne) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(4), k = 1 + rng.below(6);
    Tensor<double> z({n, k});
    for (auto& v : z.data()) v = rng.uniform(-1000.0, 1000.0) * (trial % 2 ? 1.0 : 0.003);
    Tape<double> tape;
    const auto p = softmax(tape, tape.constant(z)).value();
    for (std::size_t i = 0; i < n; ++i) {
      long double top = z.at(i, 0), total = 0.0L;
      for (std::size_t j = 0; j < k; ++j) top = std::max<long double>(top, z.at(i, j));
      for (std::size_t j = 0; j < k; ++j) total += std::exp(static_cast<long double>(z.at(i, j)) - top);
      double row = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        ASSERT_NEAR(p.at(i, j), static_cast<double>(std::exp(static_cast<long double>(z.at(i, j)) - top) / total), 1e-7);
        row += p.at(i, j);
      }
      ASSERT_NEAR(row, 1.0, 1e-6);
    }
    Tape<float> tf;
    const auto pf = softmax(tf, tf.constant(z.cast<float>())).value();
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < k; ++j) row += pf.at(i, j);
      ASSERT_NEAR(row, 1.0, 1e-6);
    }
  }
}

TEST(Sigmoid, SymmetryAndOverflowGuard) {
  EXPECT_EQ(stable_sigmoid(0.0), 0.5);
  Rng rng(14);
  for (int i = 0; i < 100; ++i) {
    const double z = rng.uniform(-50.0, 50.0);
    EXPECT_NEAR(stable_sigmoid(-z), 1.0 - stable_sigmoid(z), 1e-15);
  }
  EXPECT_TRUE(std::isfinite(stable_sigmoid(710.0)));
  EXPECT_TRUE(std::isfinite(stable_sigmoid(-710.0)));
  EXPECT_NEAR(stable_sigmoid(710.0), 1.0, 1e-15);
  EXPECT_NEAR(stable_sigmoid(-710.0), 0.0, 1e-15);
  Tape<float> tape;
  const auto y = sigmoid(tape, tape.constant(Tensor<float>({3}, {0.0f, 710.0f, -710.0f}))).value();
  EXPECT_EQ(y[0], 0.5f);
  EXPECT_TRUE(y.all_finite());
}

TEST(Readout, SumsWeightedSignalPlusBias) {
  Rng rng(15);
  const auto w = random_tensor<double>({2, 3, 4, 5}, rng), x = random_tensor<double>({2, 4, 5}, rng);
  const auto b = random_tensor<double>({2, 3}, rng);
  Tape<double> tape;
  const auto z = readout(tape, tape.constant(w), tape.constant(x), tape.constant(b)).value();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t k = 0; k < 3; ++k) {
      double acc = b.at(n, k);
      for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t t = 0; t < 5; ++t) acc += w.at(n, k, c, t) * x.at(n, c, t);
      EXPECT_NEAR(z.at(n, k), acc, 1e-12);
    }
}

TEST(Tensor, ShapeInvariants) {
  EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_THROW(Tensor<float>({2, 0}), ShapeError);
  Tensor<float> t({2, 3});
  EXPECT_THROW(t.grad(), std::logic_error);
  t.set_requires_grad(true);
  EXPECT_EQ(t.grad().size(), t.size());
  EXPECT_THROW(t.at(2, 0), std::out_of_range);
}

}  // namespace
}  // namespace imn
