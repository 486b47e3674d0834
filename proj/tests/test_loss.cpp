#include <gtest/gtest.h>

#include <cmath>

#include "tar/grad_check.hpp"
#include "tar/loss.hpp"
#include "test_support.hpp"

namespace {

using tar::Label;
using tar::LossWeights;
using tar::Rng;
using tar::Tape;
using tar::Tensor;
using tar::Var;

double activation_loss_value(const Tensor<double>& acts, const std::vector<Label>& labels) {
  Tape<double> tape;
  Var a = tape.leaf(acts, false);
  return tape.value(tar::activation_loss(tape, a, labels))[0];
}

TEST(ActivationLoss, HandValues) {
  // A perfectly separated real sample: own half at 1, other at 0.
  EXPECT_DOUBLE_EQ(activation_loss_value(Tensor<double>({1, 2}, {1.0, 0.0}), {Label::real}), 0.0);
  // Dead latent: both halves silent costs exactly the missing own-class unit.
  EXPECT_DOUBLE_EQ(activation_loss_value(Tensor<double>({1, 2}, {0.0, 0.0}), {Label::real}), 1.0);
  // A fake sample torn both ways.
  EXPECT_DOUBLE_EQ(activation_loss_value(Tensor<double>({1, 2}, {0.5, 0.5}), {Label::fake}), 1.0);
  // Perfect fake.
  EXPECT_DOUBLE_EQ(activation_loss_value(Tensor<double>({1, 2}, {0.0, 1.0}), {Label::fake}), 0.0);
}

TEST(ActivationLoss, SumsOverBatch) {
  Tensor<double> acts({2, 2}, {1.0, 0.0, 0.5, 0.5});
  const double v = activation_loss_value(acts, {Label::real, Label::fake});
  EXPECT_DOUBLE_EQ(v, 0.0 + 1.0);
}

TEST(ActivationLoss, RejectsMismatches) {
  Tape<double> tape;
  Var bad = tape.leaf(Tensor<double>({2, 3}), false);
  EXPECT_THROW(tar::activation_loss(tape, bad, {Label::real, Label::real}), tar::ContractError);
  Var ok = tape.leaf(Tensor<double>({2, 2}), false);
  EXPECT_THROW(tar::activation_loss(tape, ok, {Label::real}), tar::ContractError);
}

TEST(ActivationLoss, GradCheckAwayFromKinks) {
  // Residuals |A2 - l + 1| and |A1 + l - 2| kink where an activation sits
  // exactly at its target; these values keep a margin on both sides.
  Tensor<double> acts({2, 2}, {0.3, 0.4, 0.6, 0.2});
  const std::vector<Label> labels{Label::real, Label::fake};
  const double err = tar::grad_check(
      [&](Tape<double>& t, Var v) { return tar::activation_loss(t, v, labels); }, acts, 1e-5);
  EXPECT_LT(err, 1e-10);
}

TEST(ReconstructionLoss, MatchesElementwiseOracle) {
  Rng rng(41);
  auto x = tar::random_uniform<double>({2, 3, 4, 4}, rng, -1.0, 1.0);
  auto r = tar::random_uniform<double>({2, 3, 4, 4}, rng, -1.0, 1.0);

  double expected = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) expected += std::abs(x[i] - r[i]);
  expected /= static_cast<double>(x.numel());

  Tape<double> tape;
  Var xv = tape.leaf(x, false);
  Var rv = tape.leaf(r, false);
  EXPECT_DOUBLE_EQ(tape.value(tar::reconstruction_loss(tape, xv, rv))[0], expected);
}

TEST(ReconstructionLoss, InvariantToBatchDuplication) {
  // Dividing by the element count keeps the value comparable when the
  // same content appears twice in a batch.
  Tensor<double> x1({1, 1, 2, 2}, {0.1, 0.2, 0.3, 0.4});
  Tensor<double> r1({1, 1, 2, 2}, {0.0, 0.5, 0.3, 0.1});
  Tensor<double> x2({2, 1, 2, 2}, {0.1, 0.2, 0.3, 0.4, 0.1, 0.2, 0.3, 0.4});
  Tensor<double> r2({2, 1, 2, 2}, {0.0, 0.5, 0.3, 0.1, 0.0, 0.5, 0.3, 0.1});

  Tape<double> tape;
  const double v1 =
      tape.value(tar::reconstruction_loss(tape, tape.leaf(x1), tape.leaf(r1)))[0];
  const double v2 =
      tape.value(tar::reconstruction_loss(tape, tape.leaf(x2), tape.leaf(r2)))[0];
  EXPECT_DOUBLE_EQ(v1, v2);
}

TEST(ReconstructionLoss, ShapeMismatchRejected) {
  Tape<double> tape;
  Var a = tape.leaf(Tensor<double>({1, 3, 4, 4}), false);
  Var b = tape.leaf(Tensor<double>({1, 3, 4, 5}), false);
  EXPECT_THROW(tar::reconstruction_loss(tape, a, b), tar::ContractError);
}

TEST(ReconstructionLoss, GradCheckBothArguments) {
  Rng rng(42);
  auto x = tar::random_uniform<double>({1, 2, 3, 3}, rng, -1.0, 1.0);
  auto r = tar::random_uniform<double>({1, 2, 3, 3}, rng, 2.0, 3.0);  // no zero residuals

  const double er = tar::grad_check(
      [&](Tape<double>& t, Var v) { return tar::reconstruction_loss(t, t.leaf(x), v); }, r, 1e-5);
  EXPECT_LT(er, 1e-9);

  const double ex = tar::grad_check(
      [&](Tape<double>& t, Var v) { return tar::reconstruction_loss(t, v, t.leaf(r)); }, x, 1e-5);
  EXPECT_LT(ex, 1e-9);
}

TEST(TotalLoss, WeightsReconstructionByLambda) {
  Tape<double> tape;
  Var r = tape.leaf(Tensor<double>::scalar(2.0), true);
  Var a = tape.leaf(Tensor<double>::scalar(3.0), true);
  LossWeights<double> w;
  Var total = tar::total_loss(tape, r, a, w);
  EXPECT_DOUBLE_EQ(tape.value(total)[0], 0.1 * 2.0 + 3.0);

  tape.backward(total);
  EXPECT_DOUBLE_EQ(tape.grad(r)[0], 0.1);
  EXPECT_DOUBLE_EQ(tape.grad(a)[0], 1.0);
}

TEST(TotalLoss, ZeroLambdaDropsReconstruction) {
  Tape<double> tape;
  Var r = tape.leaf(Tensor<double>::scalar(7.0), false);
  Var a = tape.leaf(Tensor<double>::scalar(0.25), false);
  LossWeights<double> w;
  w.lambda = 0.0;
  EXPECT_DOUBLE_EQ(tape.value(tar::total_loss(tape, r, a, w))[0], 0.25);

  w.lambda = -0.5;
  EXPECT_THROW(tar::total_loss(tape, r, a, w), tar::ConfigError);
}

TEST(TotalLoss, RejectsNonScalars) {
  Tape<double> tape;
  Var r = tape.leaf(Tensor<double>({2}), false);
  Var a = tape.leaf(Tensor<double>::scalar(1.0), false);
  EXPECT_THROW(tar::total_loss(tape, r, a, {}), tar::ContractError);
}

TEST(FullObjective, AnalyticGradientsMatchFiniteDifferences) {
  // Quick slice of the exhaustive acceptance sweep: a couple of seeds,
  // every seventh coordinate.
  for (std::uint64_t seed : {101u, 202u}) {
    const auto report = support::fd_full_loss_check(seed, 7);
    EXPECT_GT(report.coords_checked, 100);
    EXPECT_EQ(report.failures, 0) << "seed " << seed << ": " << report.first_failure;
    EXPECT_LT(report.max_rel_err, 1e-5)
        << "seed " << seed << ", worst at " << report.worst_param;
  }
}

}  // namespace
