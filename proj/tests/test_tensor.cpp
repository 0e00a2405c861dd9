#include <gtest/gtest.h>

#include <cmath>

#include "ram/recurrent.hpp"
#include "ram/selfcheck.hpp"
#include "ram/tensor.hpp"

namespace ram {
namespace {

Matrix M(std::size_t r, std::size_t c, std::vector<double> v) { return Matrix(r, c, std::move(v)); }

void expect_near(const Matrix& a, const Matrix& b, double tol) {
  ASSERT_EQ(a.rows(), b.rows());
  ASSERT_EQ(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

TEST(Matmul, IdentityTimesIdentity) {
  auto out = matmul(constant(Matrix::identity(2)), constant(Matrix::identity(2)));
  EXPECT_TRUE(bitwise_equal(out.value(), Matrix::identity(2)));
}

TEST(Matmul, HandArithmetic) {
  auto out = matmul(constant(M(2, 2, {1, 2, 3, 4})), constant(M(2, 1, {1, 1})));
  expect_near(out.value(), M(2, 1, {3, 7}), 0.0);
}

TEST(Matmul, GradientOfSumIsColumnSumsOfB) {
  Rng rng(3);
  Tensor a = parameter(selfcheck::random_matrix(rng, 3, 4));
  Tensor b = constant(selfcheck::random_matrix(rng, 4, 2));
  backward(sum(matmul(a, b)));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t p = 0; p < 4; ++p)
      EXPECT_NEAR(a.grad()(i, p), b.value()(p, 0) + b.value()(p, 1), 1e-12);
  EXPECT_LT(finite_difference_check([&] { return sum(matmul(a, b)); }, a), 1e-9);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(constant(Matrix(2, 3)), constant(Matrix(2, 3))), DimensionError);
}

TEST(RowSoftmax, Examples) {
  expect_near(row_softmax(constant(M(1, 2, {0, 0}))).value(), M(1, 2, {0.5, 0.5}), 1e-15);
  expect_near(row_softmax(constant(M(1, 2, {std::log(1.0), std::log(3.0)}))).value(), M(1, 2, {0.25, 0.75}),
              1e-15);
}

TEST(RowSoftmax, SumOfRowsHasZeroGradient) {
  Rng rng(5);
  Tensor x = parameter(selfcheck::random_matrix(rng, 3, 4, -3, 3));
  backward(sum(row_softmax(x)));
  for (double g : x.grad().data()) EXPECT_LT(std::abs(g), 1e-7);
  GradCheckResult r = finite_difference_check([&] { return sum(row_softmax(x)); }, std::vector<Tensor>{x});
  EXPECT_LT(r.max_abs_error, 1e-7);
}

TEST(RowSoftmax, RowsSumToOneAndStayFiniteForLargeLogits) {
  auto out = row_softmax(constant(M(2, 3, {1000, 1001, 999, -1e308, 0, 1e308})));
  EXPECT_TRUE(all_finite(out.value()));
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) s += out.value()(r, c);
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(MaskedSoftmax, PaddedColumnsAndRowsAreZero) {
  auto out = masked_row_softmax(constant(M(2, 3, {1, 2, 50, 3, 4, 5})), {true, true, false}, {true, false});
  EXPECT_EQ(out.value()(0, 2), 0.0);
  EXPECT_NEAR(out.value()(0, 0) + out.value()(0, 1), 1.0, 1e-15);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.value()(1, c), 0.0);
}

TEST(Elementwise, Examples) {
  Rng rng(1);
  Matrix x = selfcheck::random_matrix(rng, 2, 3);
  EXPECT_TRUE(bitwise_equal(elementwise(constant(x), constant(Matrix(2, 3, 1.0)), ElementwiseKind::kMul).value(), x));
  expect_near(elementwise(constant(M(1, 2, {1, 2})), constant(M(1, 2, {3, 4})), ElementwiseKind::kMul).value(),
              M(1, 2, {3, 8}), 0.0);
  expect_near(elementwise(constant(M(1, 1, {1})), constant(M(1, 1, {2})), ElementwiseKind::kConcatLastAxis).value(),
              M(1, 2, {1, 2}), 0.0);
  EXPECT_THROW(elementwise(constant(Matrix(1, 2)), constant(Matrix(2, 1)), ElementwiseKind::kAdd), DimensionError);
}

TEST(Nonlinear, Examples) {
  EXPECT_EQ(sigmoid(constant(M(1, 1, {0}))).item(), 0.5);
  expect_near(relu(constant(M(1, 2, {-3, 3}))).value(), M(1, 2, {0, 3}), 0.0);
  Tensor x = parameter(M(1, 1, {0.0}));
  backward(sum(tanh(x)));
  EXPECT_NEAR(x.grad()[0], 1.0, 1e-12);
  GradCheckResult r = finite_difference_check([&] { return sum(tanh(x)); }, std::vector<Tensor>{x}, 1e-4);
  EXPECT_LT(r.max_abs_error, 1e-6);
}

TEST(Nonlinear, SigmoidIsStableAtExtremes) {
  auto out = sigmoid(constant(M(1, 2, {-1000, 1000})));
  EXPECT_EQ(out.value()[0], 0.0);
  EXPECT_EQ(out.value()[1], 1.0);
}

TEST(Recurrent, ZeroParametersGiveZeroState) {
  ParamStore store;
  Rng rng(1);
  auto lstm = LstmParams::create(store, "l", ParamTag::kBase, 3, 2, rng);
  auto gru = GruParams::create(store, "g", ParamTag::kBase, 3, 2, rng);
  for (auto& e : store.entries()) e.tensor.mutable_value().fill(0.0);
  Tensor x = constant(M(1, 3, {0.3, -2, 5}));
  auto s = lstm_step(lstm, x, LstmState::zeros(2));
  for (double v : s.h.value().data()) EXPECT_EQ(v, 0.0);
  for (double v : s.c.value().data()) EXPECT_EQ(v, 0.0);
  auto h = gru_step(gru, x, constant(Matrix(1, 2)));
  for (double v : h.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Recurrent, GruHandArithmetic) {
  ParamStore store;
  Rng rng(1);
  auto gru = GruParams::create(store, "g", ParamTag::kBase, 1, 1, rng);
  for (auto& e : store.entries()) e.tensor.mutable_value().fill(e.name.find(".b_") != std::string::npos ? 0.0 : 0.5);
  auto h = gru_step(gru, constant(M(1, 1, {1.0})), constant(M(1, 1, {0.0})));
  const double z = 1.0 / (1.0 + std::exp(-0.5));
  EXPECT_NEAR(h.item(), (1.0 - z) * std::tanh(0.5), 1e-15);
}

TEST(Recurrent, GruThreeStepGradient) {
  ParamStore store;
  Rng rng(11);
  auto gru = GruParams::create(store, "g", ParamTag::kBase, 2, 3, rng);
  Tensor xs = parameter(selfcheck::random_matrix(rng, 3, 2));
  auto f = [&] {
    Tensor h = constant(Matrix(1, 3));
    for (std::size_t t = 0; t < 3; ++t) h = gru_step(gru, row(xs, t), h);
    return sum(h);
  };
  auto inputs = store.tensors({ParamTag::kBase});
  inputs.push_back(xs);
  EXPECT_LT(finite_difference_check(f, inputs).max_rel_error, 1e-4);
}

TEST(Recurrent, DimensionMismatchThrows) {
  ParamStore store;
  Rng rng(1);
  auto gru = GruParams::create(store, "g", ParamTag::kBase, 2, 3, rng);
  EXPECT_THROW(gru_step(gru, constant(Matrix(1, 4)), constant(Matrix(1, 3))), DimensionError);
  auto lstm = LstmParams::create(store, "l", ParamTag::kBase, 2, 3, rng);
  EXPECT_THROW(lstm_step(lstm, constant(Matrix(1, 2)), LstmState::zeros(2)), DimensionError);
}

TEST(Losses, Examples) {
  const std::size_t V = 7;
  Tensor logits = constant(Matrix(3, V, 0.25));
  EXPECT_NEAR(nll_softmax(logits, {0, 3, 6}).item(), 3.0 * std::log(7.0), 1e-12);
  Rng rng(2);
  Tensor x = constant(selfcheck::random_matrix(rng, 2, 2));
  EXPECT_EQ(mse(x, x).item(), 0.0);
  EXPECT_DOUBLE_EQ(mse(constant(M(1, 2, {1, 2})), constant(M(1, 2, {3, 2}))).item(), 2.0);
  EXPECT_THROW(nll_softmax(logits, {0, 7, 1}), IndexError);
  EXPECT_THROW(nll_softmax(logits, {0, -1, 1}), IndexError);
}

TEST(FiniteDifference, OracleExamples) {
  Rng rng(4);
  Tensor x = parameter(selfcheck::random_matrix(rng, 3, 3));
  EXPECT_LT(finite_difference_check([&] { return sum(x); }, x), 1e-9);
  backward(sum(x));
  for (double g : x.grad().data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SharedSubexpressionsAccumulate) {
  // f(x) = sum(x x^T): df/dx_ij = 2 * sum_k x_kj
  Rng rng(8);
  Tensor x = parameter(selfcheck::random_matrix(rng, 3, 2));
  backward(sum(matmul_nt(x, x)));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double col = 0;
      for (std::size_t k = 0; k < 3; ++k) col += x.value()(k, j);
      EXPECT_NEAR(x.grad()(i, j), 2.0 * col, 1e-12);
    }
  x.zero_grad();
  EXPECT_LT(finite_difference_check([&] { return sum(matmul_nt(x, x)); }, x), 1e-7);
}

TEST(Backward, FrozenInputsBuildNoClosures) {
  Tensor a = constant(Matrix(2, 2, 1.0));
  Tensor b = parameter(Matrix(2, 2, 1.0));
  b.set_requires_grad(false);
  Tensor out = matmul(a, b);
  EXPECT_FALSE(out.requires_grad());
  EXPECT_TRUE(depends_on(out, b));
}

TEST(Dropout, IdentityInEvaluationAndInvertedInTraining) {
  Rng rng(9);
  Matrix x(50, 40, 1.0);
  EXPECT_TRUE(bitwise_equal(dropout(constant(x), 0.4, false, rng).value(), x));
  auto out = dropout(constant(x), 0.4, true, rng).value();
  double mean = 0;
  for (double v : out.data()) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.6) < 1e-12);
    mean += v;
  }
  EXPECT_NEAR(mean / static_cast<double>(out.size()), 1.0, 0.05);
}

TEST(GatherRows, PadRowIsZeroAndReceivesNoGradient) {
  Tensor table = parameter(Matrix(4, 2, 1.5));
  Tensor out = gather_rows(table, {2, 0, 2}, 0);
  EXPECT_EQ(out.value()(1, 0), 0.0);
  backward(sum(out));
  EXPECT_EQ(table.grad()(0, 0), 0.0);
  EXPECT_EQ(table.grad()(2, 1), 2.0);
}

// Every op over 20 random shapes/inputs.
TEST(OpGradients, AllOpsPassFiniteDifferences) {
  for (const auto& c : selfcheck::gradient_op_checks(20)) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
}

}  // namespace
}  // namespace ram
