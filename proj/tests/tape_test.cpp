#include <gtest/gtest.h>

#include <functional>

#include "corgi/params.hpp"
#include "corgi/tape.hpp"

using namespace corgi;

namespace {

using Builder = std::function<Var(Tape&, const ParamStore&)>;

// Loss = sum(op output * fixed random weights), so every output entry
// contributes a distinct coefficient.
double check_op(const ParamStore& params, const Builder& build, std::uint64_t seed = 4) {
  auto loss_of = [&](Tape& t, const ParamStore& p) {
    Var y = build(t, p);
    Rng rng(seed);
    const Matrix& yv = t.value(y);
    auto w = std::make_shared<const Matrix>(standard_normal(yv.rows(), yv.cols(), rng));
    return ops::sum_all(ops::mul_const(y, w));
  };
  Tape tape;
  Var loss = loss_of(tape, params);
  const Gradients analytic = tape.backward(loss, params);
  auto f = [&](const ParamStore& p) {
    Tape t(false);
    Var l = loss_of(t, p);
    return t.value(l)(0, 0);
  };
  const Gradients numeric = finite_difference_grad(f, params, 1e-6);
  return compare_gradients(analytic, numeric).worst();
}

ParamStore random_params(std::initializer_list<std::tuple<const char*, int, int>> shapes, std::uint64_t seed = 1) {
  Rng rng(seed);
  ParamStore p;
  for (const auto& [name, r, c] : shapes) {
    p.add(name, standard_normal(r, c, rng));
  }
  return p;
}

}  // namespace

TEST(TapeOps, Linear) {
  auto p = random_params({{"x", 4, 3}, {"w", 5, 3}});
  EXPECT_LT(check_op(p, [](Tape& t, const ParamStore& s) { return ops::linear(t.param(s, "x"), t.param(s, "w")); }),
            1e-7);
}

TEST(TapeOps, AddRowReluLeaky) {
  auto p = random_params({{"x", 4, 3}, {"b", 1, 3}});
  EXPECT_LT(check_op(p,
                     [](Tape& t, const ParamStore& s) {
                       return ops::leaky_relu(ops::relu(ops::add_row(t.param(s, "x"), t.param(s, "b"))), 0.2);
                     }),
            1e-7);
  EXPECT_LT(check_op(p,
                     [](Tape& t, const ParamStore& s) {
                       return ops::leaky_relu(ops::add_row(t.param(s, "x"), t.param(s, "b")), 0.2);
                     }),
            1e-7);
}

TEST(TapeOps, ConcatSliceAdd) {
  auto p = random_params({{"a", 3, 2}, {"b", 3, 4}, {"c", 2, 6}});
  EXPECT_LT(check_op(p,
                     [](Tape& t, const ParamStore& s) {
                       Var ab = ops::concat_cols(t.param(s, "a"), t.param(s, "b"));
                       Var all = ops::concat_rows(ab, t.param(s, "c"));
                       return ops::add(ops::slice_cols(all, 1, 3), ops::slice_cols(all, 3, 3));
                     }),
            1e-7);
}

TEST(TapeOps, GatherVariants) {
  auto p = random_params({{"x", 4, 3}, {"y", 6, 3}});
  auto idx = share({2, 0, 2, 3, 1, 1});
  auto sparse = share({-1, 1, 3, -1, 1, 0});
  EXPECT_LT(check_op(p,
                     [&](Tape& t, const ParamStore& s) {
                       Var g = ops::gather_rows(t.param(s, "x"), idx);
                       Var z = ops::gather_rows_or_zero(t.param(s, "x"), sparse);
                       return ops::add_gathered(ops::add(g, z), t.param(s, "x"), sparse);
                     }),
            1e-7);
  EXPECT_LT(check_op(p,
                     [&](Tape& t, const ParamStore& s) {
                       return ops::gather2_add_relu(t.param(s, "x"), idx, t.param(s, "y"), nullptr);
                     }),
            1e-7);
}

TEST(TapeOps, GatherRowsAndZeroValues) {
  Tape t(false);
  Matrix x(2, 2);
  x << 1, 2, 3, 4;
  Var v = t.constant(x);
  const Matrix& z = t.value(ops::gather_rows_or_zero(v, share({1, -1})));
  EXPECT_EQ(z(0, 0), 3);
  EXPECT_EQ(z(1, 1), 0);
  const Matrix& a = t.value(ops::add_gathered(v, v, share({-1, 0})));
  EXPECT_EQ(a(0, 0), 1);
  EXPECT_EQ(a(1, 0), 4);
}

TEST(TapeOps, SegmentMean) {
  auto p = random_params({{"x", 7, 3}});
  auto seg = share({0, 2, 2, 0, 2, 3, 0});
  EXPECT_LT(check_op(p, [&](Tape& t, const ParamStore& s) { return ops::segment_mean(t.param(s, "x"), seg, 5); }),
            1e-7);
  Tape t(false);
  Matrix x(3, 1);
  x << 1, 2, 6;
  const Matrix& m = t.value(ops::segment_mean(t.constant(x), share({1, 1, 1}), 3));
  EXPECT_EQ(m(0, 0), 0.0);
  EXPECT_EQ(m(1, 0), 3.0);
}

TEST(TapeOps, AttendBothScoreKinds) {
  auto p = random_params({{"q", 3, 4}, {"k", 6, 4}, {"v", 6, 2}, {"qa", 3, 1}, {"kb", 6, 1}});
  ops::AttentionGroups groups{share({0, 2, 1, 2}), share({0, 2, 3, 3}), share({2, 3, 6, 6})};
  for (double slope : {0.2, 1.0}) {
    EXPECT_LT(check_op(p,
                       [&](Tape& t, const ParamStore& s) {
                         return ops::attend(t.param(s, "q"), t.param(s, "k"), t.param(s, "v"), groups,
                                            ops::ScoreKind::Dot, slope, nullptr);
                       }),
              1e-7);
    EXPECT_LT(check_op(p,
                       [&](Tape& t, const ParamStore& s) {
                         return ops::attend(t.param(s, "qa"), t.param(s, "kb"), t.param(s, "v"), groups,
                                            ops::ScoreKind::Sum, slope, nullptr);
                       }),
              1e-7);
  }
}

TEST(TapeOps, AttendRecordsNormalisedWeights) {
  Rng rng(2);
  Tape t(false);
  Var q = t.constant(standard_normal(2, 3, rng));
  Var k = t.constant(standard_normal(5, 3, rng));
  ops::AttentionGroups groups{share({0, 1}), share({0, 1}), share({3, 5})};
  std::vector<double> alphas;
  Var y = ops::attend(q, k, k, groups, ops::ScoreKind::Dot, 0.2, &alphas);
  ASSERT_EQ(alphas.size(), 7u);
  EXPECT_NEAR(alphas[0] + alphas[1] + alphas[2], 1.0, 1e-12);
  EXPECT_NEAR(alphas[3] + alphas[4] + alphas[5] + alphas[6], 1.0, 1e-12);
  // Second group: weighted sum of key rows 1..4.
  Eigen::RowVectorXd expect = Eigen::RowVectorXd::Zero(3);
  for (int j = 0; j < 4; ++j) {
    expect += alphas[3 + j] * t.value(k).row(1 + j);
  }
  EXPECT_LT((t.value(y).row(1) - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(TapeOps, Losses) {
  auto p = random_params({{"z", 5, 1}});
  auto targets = std::make_shared<const std::vector<double>>(std::vector<double>{1, 0, 0, 1, 1});
  EXPECT_LT(check_op(p, [&](Tape& t, const ParamStore& s) { return ops::bce_with_logits_mean(t.param(s, "z"), targets); }),
            1e-7);
  EXPECT_LT(check_op(p, [&](Tape& t, const ParamStore& s) { return ops::mse_mean(t.param(s, "z"), targets); }), 1e-7);

  Tape t(false);
  Matrix z(2, 1);
  z << 0.0, 800.0;
  auto y = std::make_shared<const std::vector<double>>(std::vector<double>{1, 0});
  // log(2)/2 + 800/2, without overflow.
  EXPECT_NEAR(t.value(ops::bce_with_logits_mean(t.constant(z), y))(0, 0), 0.5 * std::log(2.0) + 400.0, 1e-12);
}

TEST(TapeBackward, RejectsNonScalarLoss) {
  auto p = random_params({{"x", 2, 2}});
  Tape t;
  Var x = t.param(p, "x");
  try {
    t.backward(x, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(TapeBackward, RejectsLossWithoutParameters) {
  ParamStore p;
  p.add("x", Matrix::Ones(1, 1));
  Tape t;
  Var c = t.constant(Matrix::Ones(1, 1));
  try {
    t.backward(ops::sum_all(c), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DisconnectedGraph);
  }
}

TEST(TapeBackward, SharedParameterAccumulates) {
  auto p = random_params({{"x", 1, 1}});
  Tape t;
  Var a = t.param(p, "x");
  Var b = t.param(p, "x");
  const Gradients g = t.backward(ops::sum_all(ops::add(a, b)), p);
  EXPECT_EQ(g.at(0)(0, 0), 2.0);
}

TEST(TapeOps, ShapeChecks) {
  Tape t(false);
  Var a = t.constant(Matrix::Zero(2, 3));
  Var b = t.constant(Matrix::Zero(3, 3));
  EXPECT_THROW(ops::add(a, b), Error);
  EXPECT_THROW(ops::linear(a, t.constant(Matrix::Zero(2, 2))), Error);
  EXPECT_THROW(ops::gather_rows(a, share({5})), Error);
}
