#include <gtest/gtest.h>

#include "mat/adam.hpp"
#include "mat/conv.hpp"
#include "mat/gradcheck.hpp"
#include "mat/tensor.hpp"

using namespace mat;

namespace {

TensorD randd(const Shape& s, uint64_t seed) {
  Rng rng(seed);
  return TensorD::randn(s, rng);
}

}  // namespace

TEST(Matmul, SmallKnownProduct) {
  TensorD a = TensorD::from({2, 2}, {1, 2, 3, 4});
  TensorD b = TensorD::from({2, 2}, {5, 6, 7, 8});
  TensorD c = matmul(a, b);
  std::vector<double> expect = {19, 22, 43, 50};
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(c.data()[i], expect[i]);
}

TEST(Matmul, IdentityIsNoop) {
  TensorD a = randd({3, 3}, 1);
  TensorD eye = TensorD::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  TensorD c = matmul(a, eye);
  for (int i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(c.data()[i], a.data()[i]);
}

TEST(Matmul, Gradcheck) {
  auto rep = gradcheck(
      [](const std::vector<TensorD>& in) { return matmul(in[0], in[1]); },
      {randd({4, 5}, 2), randd({5, 3}, 3)});
  EXPECT_TRUE(rep.pass) << "max rel err " << rep.max_rel_err;
}

TEST(Matmul, BatchedBroadcastGradcheck) {
  auto rep = gradcheck(
      [](const std::vector<TensorD>& in) { return matmul(in[0], in[1]); },
      {randd({2, 3, 4, 5}, 4), randd({1, 5, 2}, 5)});
  EXPECT_TRUE(rep.pass) << "max rel err " << rep.max_rel_err;
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  TensorD a = TensorD::zeros({2, 3});
  TensorD b = TensorD::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,2]"), std::string::npos) << msg;
  }
}

TEST(Conv2d, OnesKernelCountsOverlaps) {
  TensorD x = TensorD::ones({1, 1, 3, 3});
  TensorD w = TensorD::ones({1, 1, 3, 3});
  TensorD y = conv2d(x, w, 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  // corners see 4 inputs, edge midpoints 6, center 9
  std::vector<double> expect = {4, 6, 4, 6, 9, 6, 4, 6, 4};
  for (int i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(y.data()[i], expect[i]);
}

TEST(Conv2d, Stride2ShapeHalves) {
  TensorD x = TensorD::zeros({1, 2, 64, 64});
  TensorD w = TensorD::zeros({3, 2, 3, 3});
  TensorD y = conv2d(x, w, 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 32, 32}));
}

TEST(Conv2d, GradcheckWithBias) {
  auto rep = gradcheck(
      [](const std::vector<TensorD>& in) { return conv2d(in[0], in[1], in[2], 1, 1); },
      {randd({2, 3, 5, 5}, 6), randd({4, 3, 3, 3}, 7), randd({4}, 8)});
  EXPECT_TRUE(rep.pass) << "max rel err " << rep.max_rel_err;
}

TEST(Conv2d, GradcheckStride2) {
  auto rep = gradcheck(
      [](const std::vector<TensorD>& in) { return conv2d(in[0], in[1], 2, 1); },
      {randd({1, 2, 6, 6}, 9), randd({3, 2, 3, 3}, 10)});
  EXPECT_TRUE(rep.pass) << "max rel err " << rep.max_rel_err;
}

TEST(Conv2d, ChannelMismatchThrows) {
  TensorD x = TensorD::zeros({1, 3, 8, 8});
  TensorD w = TensorD::zeros({4, 2, 3, 3});
  EXPECT_THROW(conv2d(x, w, 1, 1), ContractError);
}

TEST(Conv2d, TransposedInvertsShapeMap) {
  // forward: 64 -> 32 under k3 s2 p1; transposed restores 64
  TensorD x = TensorD::zeros({1, 2, 32, 32});
  TensorD w = TensorD::zeros({2, 5, 3, 3});
  TensorD y = conv2d_transposed(x, w, 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 5, 64, 64}));
  TensorD x1 = TensorD::zeros({1, 2, 16, 16});
  TensorD y1 = conv2d_transposed(x1, w, 1, 1, 0);
  EXPECT_EQ(y1.shape(), (Shape{1, 5, 16, 16}));
}

TEST(Conv2d, TransposedGradcheck) {
  auto rep = gradcheck(
      [](const std::vector<TensorD>& in) { return conv2d_transposed(in[0], in[1], 2, 1); },
      {randd({1, 3, 4, 4}, 11), randd({3, 2, 3, 3}, 12)});
  EXPECT_TRUE(rep.pass) << "max rel err " << rep.max_rel_err;
}

TEST(Softmax, UniformOnConstantRow) {
  TensorD x = TensorD::zeros({4});
  TensorD y = softmax(x, 0);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y.data()[i], 0.25, 1e-12);
  double s = 0;
  for (int i = 0; i < 4; ++i) s += y.data()[i];
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Softmax, ShiftInvariance) {
  TensorD x = randd({8}, 13);
  TensorD xc = x.detach();
  for (auto& v : xc.data()) v += 123.456;
  TensorD a = softmax(x, 0);
  TensorD b = softmax(xc, 0);
  for (int i = 0; i < 8; ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-7);
}

TEST(Softmax, JacobianGradcheck) {
  auto rep = gradcheck(
      [](const std::vector<TensorD>& in) { return softmax(in[0], -1); }, {randd({8}, 14)});
  EXPECT_TRUE(rep.pass) << "max rel err " << rep.max_rel_err;
}

TEST(Softmax, InnerAxisGradcheck) {
  auto rep = gradcheck(
      [](const std::vector<TensorD>& in) { return softmax(in[0], 1); }, {randd({3, 4, 2}, 15)});
  EXPECT_TRUE(rep.pass) << "max rel err " << rep.max_rel_err;
}

TEST(Backward, SumOfSquares) {
  TensorD x = randd({5}, 16);
  x.set_requires_grad(true);
  TensorD loss = sum(mul(x, x));
  loss.backward();
  ASSERT_TRUE(x.grad().defined());
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(x.grad().data()[i], 2.0 * x.data()[i], 1e-12);
}

TEST(Backward, DisconnectedLeafHasZeroGrad) {
  TensorD x = randd({3}, 17);
  TensorD y = randd({3}, 18);
  x.set_requires_grad(true);
  y.set_requires_grad(true);
  TensorD loss = sum(mul(x, x));
  loss.backward();
  EXPECT_FALSE(y.grad().defined());  // absent == identically zero
  auto gs = autograd::grad(loss, {y});
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(gs[0].data()[i], 0.0);
}

TEST(Backward, NonScalarLossRejected) {
  TensorD x = randd({3}, 19);
  x.set_requires_grad(true);
  TensorD y = mul(x, x);
  EXPECT_THROW(y.backward(), ContractError);
}

TEST(Backward, ReusedTensorDoublesGradientExactly) {
  TensorD x = randd({4}, 20);
  x.set_requires_grad(true);
  TensorD once = sum(x);
  once.backward();
  std::vector<double> g1(x.grad().data().begin(), x.grad().data().end());
  x.zero_grad();
  TensorD twice = sum(add(x, x));
  twice.backward();
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x.grad().data()[i], 2.0 * g1[i]);
}

TEST(Backward, CompositeConvGeluFcSoftmaxCrossEntropy) {
  // 3-layer composite; target one-hot is a constant
  TensorD target = TensorD::from({2, 4}, {1, 0, 0, 0, 0, 0, 1, 0});
  auto fn = [target](const std::vector<TensorD>& in) {
    TensorD h = gelu(conv2d(in[0], in[1], in[2], 2, 1));            // [2,3,2,2]
    TensorD flat = reshape(h, {2, 12});
    TensorD logits = add(matmul(flat, in[3]), reshape(in[4], {1, 4}));  // [2,4]
    TensorD p = softmax(logits, -1);
    return neg(sum(mul(target, log(p))));
  };
  auto rep = gradcheck(fn, {randd({2, 2, 4, 4}, 21), randd({3, 2, 3, 3}, 22), randd({3}, 23),
                            randd({12, 4}, 24), randd({4}, 25)},
                       1e-4);
  EXPECT_TRUE(rep.pass) << "max rel err " << rep.max_rel_err;
}

TEST(Backward, SecondOrderIsExact) {
  // d/dx sum(x^3) = 3x^2, d2/dx2 = 6x via grad-of-grad
  TensorD x = randd({5}, 26);
  x.set_requires_grad(true);
  TensorD loss = sum(mul(mul(x, x), x));
  auto g = autograd::grad(loss, {x}, /*create_graph=*/true);
  TensorD gsum = sum(g[0]);
  auto gg = autograd::grad(gsum, {x});
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(gg[0].data()[i], 6.0 * x.data()[i], 1e-10);
}

TEST(Ops, ElementwiseGradchecks) {
  struct Case {
    const char* name;
    std::function<TensorD(const std::vector<TensorD>&)> fn;
  };
  std::vector<Case> cases = {
      {"add", [](const std::vector<TensorD>& in) { return add(in[0], in[1]); }},
      {"sub", [](const std::vector<TensorD>& in) { return sub(in[0], in[1]); }},
      {"mul", [](const std::vector<TensorD>& in) { return mul(in[0], in[1]); }},
      {"div", [](const std::vector<TensorD>& in) {
         TensorD b = add_scalar(mul(in[1], in[1]), 0.5);  // keep denominator away from 0
         return divide(in[0], b);
       }},
  };
  for (auto& c : cases) {
    auto rep = gradcheck(c.fn, {randd({3, 4}, 27), randd({3, 4}, 28)});
    EXPECT_TRUE(rep.pass) << c.name << " max rel err " << rep.max_rel_err;
  }
}

TEST(Ops, UnaryGradchecks) {
  struct Case {
    const char* name;
    std::function<TensorD(const std::vector<TensorD>&)> fn;
    uint64_t seed;
  };
  std::vector<Case> cases = {
      {"exp", [](const std::vector<TensorD>& in) { return exp(in[0]); }, 30},
      {"tanh", [](const std::vector<TensorD>& in) { return tanh(in[0]); }, 31},
      {"erf", [](const std::vector<TensorD>& in) { return erf(in[0]); }, 32},
      {"sigmoid", [](const std::vector<TensorD>& in) { return sigmoid(in[0]); }, 33},
      {"softplus", [](const std::vector<TensorD>& in) { return softplus(in[0]); }, 34},
      {"gelu", [](const std::vector<TensorD>& in) { return gelu(in[0]); }, 35},
      {"sqrt(|x|+1)",
       [](const std::vector<TensorD>& in) { return sqrt(add_scalar(abs(in[0]), 1.0)); }, 36},
      {"log(|x|+1)",
       [](const std::vector<TensorD>& in) { return log(add_scalar(abs(in[0]), 1.0)); }, 37},
  };
  for (auto& c : cases) {
    auto rep = gradcheck(c.fn, {randd({4, 5}, c.seed)});
    EXPECT_TRUE(rep.pass) << c.name << " max rel err " << rep.max_rel_err;
  }
}

TEST(Ops, LeakyReluGradcheck) {
  // keep values away from the kink so finite differences are clean
  TensorD x = randd({6, 6}, 38);
  for (auto& v : x.data())
    if (std::abs(v) < 0.05) v += 0.2;
  auto rep = gradcheck(
      [](const std::vector<TensorD>& in) { return leaky_relu(in[0], 0.2); }, {x});
  EXPECT_TRUE(rep.pass) << "max rel err " << rep.max_rel_err;
  TensorD neg_in = TensorD::from({2}, {-3.0, 4.0});
  TensorD y = leaky_relu(neg_in, 0.2);
  EXPECT_DOUBLE_EQ(y.data()[0], -0.6);
  EXPECT_DOUBLE_EQ(y.data()[1], 4.0);
}

TEST(Ops, ShapeOpGradchecks) {
  struct Case {
    const char* name;
    std::function<TensorD(const std::vector<TensorD>&)> fn;
  };
  std::vector<Case> cases = {
      {"reshape", [](const std::vector<TensorD>& in) { return reshape(in[0], {4, 6}); }},
      {"permute", [](const std::vector<TensorD>& in) { return permute(in[0], {2, 0, 1}); }},
      {"slice", [](const std::vector<TensorD>& in) { return slice(in[0], 1, 1, 2); }},
      {"concat",
       [](const std::vector<TensorD>& in) { return concat<double>({in[0], in[0]}, 1); }},
      {"expand",
       [](const std::vector<TensorD>& in) { return expand(slice(in[0], 0, 0, 1), {2, 3, 4}); }},
      {"sum", [](const std::vector<TensorD>& in) { return sum(in[0], {1}, false); }},
      {"mean", [](const std::vector<TensorD>& in) { return mean(in[0], {0, 2}, true); }},
      {"index_select",
       [](const std::vector<TensorD>& in) {
         return index_select(in[0], 1, std::vector<int64_t>{2, 0, 0, 1});
       }},
  };
  for (auto& c : cases) {
    auto rep = gradcheck(c.fn, {randd({2, 3, 4}, 40)});
    EXPECT_TRUE(rep.pass) << c.name << " max rel err " << rep.max_rel_err;
  }
}

TEST(Ops, UpsampleGradchecks) {
  auto rep1 = gradcheck(
      [](const std::vector<TensorD>& in) { return upsample_nearest2x(in[0]); },
      {randd({1, 2, 3, 3}, 41)});
  EXPECT_TRUE(rep1.pass) << "nearest max rel err " << rep1.max_rel_err;
  auto rep2 = gradcheck(
      [](const std::vector<TensorD>& in) { return upsample_bilinear(in[0], 6, 6); },
      {randd({1, 2, 3, 3}, 42)});
  EXPECT_TRUE(rep2.pass) << "bilinear max rel err " << rep2.max_rel_err;
  TensorD x = TensorD::from({1, 1, 2, 2}, {1, 2, 3, 4});
  TensorD up = upsample_nearest2x(x);
  EXPECT_EQ(up.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_DOUBLE_EQ(up.data()[0], 1.0);
  EXPECT_DOUBLE_EQ(up.data()[3], 2.0);
  EXPECT_DOUBLE_EQ(up.data()[15], 4.0);
}

TEST(Ops, BroadcastBinaryGradcheck) {
  auto rep = gradcheck(
      [](const std::vector<TensorD>& in) { return mul(in[0], in[1]); },
      {randd({2, 3, 4}, 43), randd({3, 1}, 44)});
  EXPECT_TRUE(rep.pass) << "max rel err " << rep.max_rel_err;
}

TEST(Graph, NoRecordingUnderNoGrad) {
  TensorD x = randd({3}, 45);
  x.set_requires_grad(true);
  NoGradGuard ng;
  TensorD y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.is_leaf());
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Graph, DeterministicForward) {
  Rng r1(99), r2(99);
  TensorF a1 = TensorF::randn({64, 64}, r1);
  TensorF a2 = TensorF::randn({64, 64}, r2);
  TensorF y1 = matmul(a1, a1);
  TensorF y2 = matmul(a2, a2);
  for (int64_t i = 0; i < y1.numel(); ++i)
    ASSERT_EQ(y1.data()[static_cast<size_t>(i)], y2.data()[static_cast<size_t>(i)]);
}

TEST(Adam, FirstStepIsSignLikeWhenBeta1Zero) {
  Rng rng(1);
  NamedParams<float> ps;
  TensorF p = TensorF::from({3}, {1.0f, 2.0f, 3.0f});
  p.set_requires_grad(true);
  ps.add("p", p);
  Adam<float> opt(ps, /*lr=*/0.1f, /*beta1=*/0.0f, /*beta2=*/0.99f);
  TensorF loss = sum(mul(p, TensorF::from({3}, {5.0f, -4.0f, 3.0f})));
  loss.backward();
  opt.step();
  // bias-corrected update with |g| >> eps is -lr * sign(g)
  EXPECT_NEAR(p.data()[0], 1.0f - 0.1f, 1e-5);
  EXPECT_NEAR(p.data()[1], 2.0f + 0.1f, 1e-5);
  EXPECT_NEAR(p.data()[2], 3.0f - 0.1f, 1e-5);
}

TEST(Adam, ZeroGradLeavesParamsUntouched) {
  NamedParams<float> ps;
  TensorF p = TensorF::from({2}, {1.5f, -2.5f});
  p.set_requires_grad(true);
  ps.add("p", p);
  Adam<float> opt(ps, 0.1f, 0.0f, 0.99f);
  opt.step();  // no grad populated
  EXPECT_FLOAT_EQ(p.data()[0], 1.5f);
  EXPECT_FLOAT_EQ(p.data()[1], -2.5f);
}

TEST(Adam, QuadraticConvergesLikeScalarOracle) {
  // oracle: the same recurrence run on plain doubles
  double om = 0, ov = 0, otheta = 1.0;
  const double lr = 0.1, b1 = 0.0, b2 = 0.99, eps = 1e-8;
  for (int t = 1; t <= 100; ++t) {
    double g = 2.0 * otheta;
    om = b1 * om + (1 - b1) * g;
    ov = b2 * ov + (1 - b2) * g * g;
    double mhat = om / (1 - std::pow(b1, t));
    double vhat = ov / (1 - std::pow(b2, t));
    otheta -= lr * mhat / (std::sqrt(vhat) + eps);
  }
  ASSERT_LT(std::abs(otheta), 0.05);  // oracle itself satisfies the contract

  NamedParams<double> ps;
  TensorD theta = TensorD::from({1}, {1.0});
  theta.set_requires_grad(true);
  ps.add("theta", theta);
  Adam<double> opt(ps, lr, b1, b2, eps);
  for (int t = 0; t < 100; ++t) {
    opt.zero_grad();
    TensorD loss = sum(mul(theta, theta));
    loss.backward();
    opt.step();
  }
  EXPECT_NEAR(theta.data()[0], otheta, 1e-9);
  EXPECT_LT(std::abs(theta.data()[0]), 0.05);
}

TEST(Adam, StateShapeMismatchThrows) {
  NamedParams<double> ps;
  TensorD p = TensorD::from({2}, {1.0, 2.0});
  p.set_requires_grad(true);
  ps.add("p", p);
  Adam<double> opt(ps, 0.1, 0.0, 0.99);
  // hand the optimizer a grad of the wrong shape
  p.node()->grad = TensorD::zeros({3});
  EXPECT_THROW(opt.step(), ContractError);
}
