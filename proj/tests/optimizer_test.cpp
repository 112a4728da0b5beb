#include <cmath>
#include <limits>
#include <sstream>

#include "gtest/gtest.h"
#include "imn/tensor/optimizer.hpp"
#include "imn/tensor/serialize.hpp"
#include "support.hpp"

namespace imn {
namespace {

std::vector<ParamRef<double>> refs(Tensor<double>& t) { return {ParamRef<double>{"p", &t}}; }

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor<double> p({3}, {1.0, -2.0, 0.5});
  p.set_requires_grad(true);
  const Tensor<double> before = p;
  Adam<double> adam;
  for (int i = 0; i < 5; ++i) adam.step(refs(p));
  EXPECT_EQ(std::vector<double>(p.data().begin(), p.data().end()), before.storage());
  EXPECT_EQ(adam.step_count(), 5);
}

TEST(Adam, PositiveGradientDescends) {
  Tensor<float> p({1}, {3.0f});
  p.set_requires_grad(true);
  p.grad()[0] = 0.7f;
  Adam<float> adam;
  std::vector<ParamRef<float>> r{{"w", &p}};
  adam.step(r);
  EXPECT_LT(p[0], 3.0f);
  // first bias-corrected step moves by lr * g / (|g| + eps)
  EXPECT_NEAR(p[0], 3.0f - 1e-3f, 1e-7f);
}

TEST(Adam, ThreeStepQuadraticMatchesRecurrence) {
  // f(w) = 0.5 * a * (w - c)^2, gradient a * (w - c)
  const double a = 2.5, c = 0.75;
  const AdamOptions opt{0.01, 0.9, 0.999, 1e-8};

  double w = -1.0, m = 0.0, v = 0.0;
  std::vector<double> expected;
  for (int t = 1; t <= 3; ++t) {
    const double g = a * (w - c);
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
    const double m_hat = m / (1.0 - std::pow(opt.beta1, t));
    const double v_hat = v / (1.0 - std::pow(opt.beta2, t));
    w = w - opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    expected.push_back(w);
  }

  Tensor<double> p({1}, {-1.0});
  p.set_requires_grad(true);
  Adam<double> adam(opt);
  for (int t = 0; t < 3; ++t) {
    p.zero_grad();
    Tape<double> tape;
    auto d = add(tape, tape.parameter(p), tape.constant(Tensor<double>({1}, -c)));
    tape.backward(scale(tape, sum(tape, mul(tape, d, d)), 0.5 * a));
    adam.step(refs(p));
    EXPECT_EQ(p[0], expected[t]) << "step " << t + 1;
  }
  EXPECT_EQ(adam.step_count(), 3);
}

TEST(Adam, NonFiniteGradientAbortsWithParameterName) {
  Tensor<double> p({2}, 1.0);
  p.set_requires_grad(true);
  p.grad()[1] = std::numeric_limits<double>::quiet_NaN();
  Adam<double> adam;
  std::vector<ParamRef<double>> r{{"decoder.kernel", &p}};
  try {
    adam.step(r);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.kernel"), std::string::npos);
  }
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(adam.step_count(), 0);
}

TEST(Adam, IdenticalInputsGiveIdenticalUpdates) {
  auto run = [] {
    Rng rng(3);
    auto p = testing::random_tensor<float>({50}, rng);
    p.set_requires_grad(true);
    Adam<float> adam;
    std::vector<ParamRef<float>> r{{"p", &p}};
    for (int s = 0; s < 4; ++s) {
      for (auto& g : p.grad()) g = static_cast<float>(rng.normal());
      adam.step(r);
    }
    return p.storage();
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, RejectsChangedParameterList) {
  Tensor<double> p({2}, 1.0), q({3}, 1.0);
  p.set_requires_grad(true);
  q.set_requires_grad(true);
  Adam<double> adam;
  adam.step(refs(p));
  EXPECT_THROW(adam.step(refs(q)), ShapeError);
  std::vector<ParamRef<double>> two{{"p", &p}, {"q", &q}};
  EXPECT_THROW(adam.step(two), std::invalid_argument);
}

TEST(Serialize, TensorRoundTripIsBitwise) {
  Rng rng(4);
  const auto t = testing::random_tensor<float>({2, 3, 5}, rng);
  std::stringstream buf;
  write_tensor(buf, t);
  EXPECT_EQ(buf.str().size(), serialized_size(t.shape()));
  EXPECT_EQ(serialized_size(t.shape()), 4u + 3u * 4u + 30u * 4u);
  EXPECT_EQ(read_tensor(buf), t);
}

TEST(Serialize, LittleEndianLayout) {
  std::stringstream buf;
  write_tensor(buf, Tensor<float>({2}, {1.0f, -2.0f}));
  const std::string bytes = buf.str();
  const std::string expected("\x01\x00\x00\x00\x02\x00\x00\x00\x00\x00\x80\x3f\x00\x00\x00\xc0", 16);
  EXPECT_EQ(bytes, expected);
}

TEST(Serialize, TruncatedDataNamesByteCounts) {
  std::stringstream buf;
  write_tensor(buf, Tensor<float>({4}, 1.0f));
  std::string bytes = buf.str();
  bytes.resize(bytes.size() - 3);
  std::stringstream cut(bytes);
  try {
    read_tensor(cut);
    FAIL() << "expected SerializationError";
  } catch (const SerializationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("16"), std::string::npos) << msg;
    EXPECT_NE(msg.find("13"), std::string::npos) << msg;
  }
}

TEST(Serialize, RejectsZeroExtent) {
  std::stringstream buf;
  write_u32_le(buf, 1);
  write_u32_le(buf, 0);
  EXPECT_THROW(read_tensor(buf), SerializationError);
}

}  // namespace
}  // namespace imn
