#include "snx/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <cstring>
#include <random>

#include "snx/errors.hpp"

namespace snx::ad {
namespace {

Tensor col(std::vector<double> v) { return Tensor::column(std::move(v)); }

TEST(AutodiffTest, DotProductForwardAndBackward) {
  Tape tape;
  Var x = tape.leaf("x", 2);
  Var y = tape.leaf("y", 2);
  tape.dot(x, y);
  EXPECT_DOUBLE_EQ(tape.forward({{"x", col({1, 2})}, {"y", col({3, 4})}}), 11.0);
  Gradients g = tape.backward();
  EXPECT_DOUBLE_EQ(g["x"][0], 3.0);
  EXPECT_DOUBLE_EQ(g["x"][1], 4.0);
  EXPECT_DOUBLE_EQ(g["y"][0], 1.0);
  EXPECT_DOUBLE_EQ(g["y"][1], 2.0);
  EXPECT_LT(finite_diff_check(tape, "x", 1e-5), 1e-6);
}

TEST(AutodiffTest, SigmoidAtZero) {
  Tape tape;
  tape.sum(tape.sigmoid(tape.leaf("z", 1)));
  EXPECT_DOUBLE_EQ(tape.forward({{"z", col({0.0})}}), 0.5);
  EXPECT_DOUBLE_EQ(tape.backward()["z"][0], 0.25);
  EXPECT_LT(finite_diff_check(tape, "z", 1e-5), 1e-6);
}

TEST(AutodiffTest, BinaryCrossEntropyAtHalf) {
  Tape tape;
  Var p = tape.sum(tape.leaf("p", 1));
  binary_cross_entropy(tape, 0.5, p);
  EXPECT_NEAR(tape.forward({{"p", col({0.5})}}), std::log(2.0), 1e-15);
}

TEST(AutodiffTest, BinaryCrossEntropyWithCertainTargetIsFinite) {
  Tape tape;
  Var p = tape.sum(tape.leaf("p", 1));
  binary_cross_entropy(tape, 1.0, p);
  EXPECT_LE(tape.forward({{"p", col({1.0})}}), 1e-11);
  const double at_zero = tape.forward({{"p", col({0.0})}});
  EXPECT_TRUE(std::isfinite(at_zero));
  EXPECT_NEAR(at_zero, -std::log(1e-12), 1e-9);
}

TEST(AutodiffTest, CosineGradientOrthogonalUnitVectors) {
  // d/du (u.v / |u||v|) = v/(|u||v|) - cos * u/|u|^2 = [0,1] at u=[1,0], v=[0,1].
  Tape tape;
  tape.cosine(tape.leaf("u", 2), tape.leaf("v", 2));
  EXPECT_DOUBLE_EQ(tape.forward({{"u", col({1, 0})}, {"v", col({0, 1})}}), 0.0);
  Gradients g = tape.backward();
  EXPECT_DOUBLE_EQ(g["u"][0], 0.0);
  EXPECT_DOUBLE_EQ(g["u"][1], 1.0);
  EXPECT_LT(finite_diff_check(tape, "u", 1e-6), 1e-8);
}

TEST(AutodiffTest, Errors) {
  Tape tape;
  Var x = tape.leaf("x", 2);
  tape.dot(x, tape.leaf("y", 2));
  EXPECT_THROW(tape.backward(), StateError);
  EXPECT_THROW(tape.forward({{"x", col({1, 2})}}), MissingInputError);
  EXPECT_THROW(tape.forward({{"x", col({1, 2})}, {"y", col({1, 2, 3})}}), ShapeError);

  Tape vector_terminal;
  vector_terminal.tanh(vector_terminal.leaf("x", 3));
  EXPECT_THROW(vector_terminal.forward({{"x", col({1, 2, 3})}}), ShapeError);
}

TEST(AutodiffTest, ConstantHasZeroGradient) {
  Tape tape;
  Var x = tape.leaf("x", 3);
  Var c = tape.sum(tape.constant(col({1, 2, 3})));
  tape.add(c, tape.affine(tape.sum(x), 0.0, 0.0));
  tape.forward({{"x", col({0.3, -1, 2})}});
  const Gradients grads = tape.backward();
  for (double v : grads.at("x").data) EXPECT_EQ(v, 0.0);
}

TEST(AutodiffTest, BackwardLeavesForwardValuesUntouched) {
  Tape tape;
  Var x = tape.leaf("x", 3);
  Var h = tape.tanh(tape.mul(x, x));
  tape.sum(tape.square(h));
  Bindings b{{"x", col({0.2, -0.7, 1.3})}};
  const double first = tape.forward(b);
  const Tensor before = tape.value(h);
  tape.backward();
  EXPECT_EQ(tape.value(h).data, before.data);
  const double second = tape.forward(b);
  EXPECT_EQ(std::memcmp(&first, &second, sizeof(double)), 0);
}

// Each primitive, composed into a scalar, checked against central differences
// at 100 random points.
struct PrimitiveCase {
  const char* name;
  std::size_t dim;
  std::function<void(Tape&, Var)> build;
  double lo = -2.0;
  double hi = 2.0;
};

class PrimitiveGradientTest : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradientTest, MatchesFiniteDifferences) {
  const PrimitiveCase& pc = GetParam();
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> dist(pc.lo, pc.hi);
  Tape tape;
  Var x = tape.leaf("x", pc.dim);
  pc.build(tape, x);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(pc.dim);
    for (double& e : v) e = dist(rng);
    tape.forward({{"x", col(v)}});
    EXPECT_LT(finite_diff_check(tape, "x", 1e-6), 1e-4) << pc.name << " trial " << trial;
  }
}

const Tensor kWeights(3, 4, {0.5, -1.0, 0.3, 0.8, 1.2, 0.1, -0.4, 0.6, -0.9, 0.7, 0.2, -0.3});

INSTANTIATE_TEST_SUITE_P(
    AllPrimitives, PrimitiveGradientTest,
    ::testing::Values(
        PrimitiveCase{"matvec", 4,
                      [](Tape& t, Var x) { t.sum(t.tanh(t.matmul(t.constant(kWeights), x))); }},
        PrimitiveCase{"matmul_rhs", 4,
                      [](Tape& t, Var x) {
                        Var left = t.constant(Tensor(2, 3, {1, 2, 0.5, -1, 0.3, 2}));
                        Var right = t.matmul(t.constant(kWeights), x);
                        t.sum(t.square(t.matmul(left, right)));
                      }},
        PrimitiveCase{"mul_add_sub_neg", 3,
                      [](Tape& t, Var x) {
                        Var c = t.constant(Tensor::column({0.4, -1.0, 2.0}));
                        t.sum(t.neg(t.sub(t.mul(x, x), t.add(x, c))));
                      }},
        PrimitiveCase{"sigmoid", 5, [](Tape& t, Var x) { t.sum(t.square(t.sigmoid(x))); }},
        PrimitiveCase{"tanh", 5, [](Tape& t, Var x) { t.sum(t.tanh(t.affine(x, 1.5, 0.2))); }},
        PrimitiveCase{"relu", 5, [](Tape& t, Var x) { t.sum(t.square(t.relu(x))); }},
        PrimitiveCase{"log_exp", 4, [](Tape& t, Var x) { t.sum(t.log(t.affine(t.exp(x), 1.0, 1.0))); }},
        PrimitiveCase{"dot_self", 4, [](Tape& t, Var x) { t.dot(x, t.tanh(x)); }},
        PrimitiveCase{"l2norm", 4, [](Tape& t, Var x) { t.l2norm(x); }},
        PrimitiveCase{"cosine", 4,
                      [](Tape& t, Var x) { t.cosine(x, t.constant(Tensor::column({1, -2, 0.5, 3}))); }},
        PrimitiveCase{"mean_rows", 4,
                      [](Tape& t, Var x) {
                        Var adj = t.edges_to_adjacency(
                            t.sigmoid(x), 4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
                        Var feats = t.constant(Tensor(4, 2, {1, 0, 0, 1, 1, 1, 0.5, -1}));
                        t.sum(t.square(t.mean_rows(t.tanh(t.matmul(adj, feats)))));
                      }},
        PrimitiveCase{"normalize_adjacency", 3,
                      [](Tape& t, Var x) {
                        Var adj = t.edges_to_adjacency(t.sigmoid(x), 3, {{0, 1}, {0, 2}, {1, 2}});
                        Var norm = t.normalize_adjacency(adj);
                        Var feats = t.constant(Tensor(3, 2, {1, 2, -1, 0.5, 0.3, 1}));
                        t.sum(t.tanh(t.matmul(norm, feats)));
                      }},
        PrimitiveCase{"noisy_or_blocks", 5,
                      [](Tape& t, Var x) { t.sum(t.square(t.noisy_or_blocks(t.sigmoid(x), {3, 2}))); }},
        PrimitiveCase{"kl_bernoulli", 3,
                      [](Tape& t, Var x) {
                        t.kl_bernoulli(t.sigmoid(x), Tensor::column({0.2, 0.5, 0.9}));
                      }},
        PrimitiveCase{"gather_abs", 4,
                      [](Tape& t, Var x) {
                        Var d = t.sub(t.gather(x, {0, 1, 2}), t.gather(x, {1, 2, 3}));
                        t.sum(t.square(t.abs(d)));
                      }},
        PrimitiveCase{"clamp_inside", 3,
                      [](Tape& t, Var x) { t.sum(t.square(t.clamp(t.sigmoid(x), 1e-9, 1 - 1e-9))); }},
        PrimitiveCase{"bce", 3,
                      [](Tape& t, Var x) {
                        binary_cross_entropy(t, 0.8, t.sum(t.affine(t.sigmoid(x), 1.0 / 3.0, 0.0)));
                      }}),
    [](const ::testing::TestParamInfo<PrimitiveCase>& info) { return std::string(info.param.name); });

}  // namespace
}  // namespace snx::ad
