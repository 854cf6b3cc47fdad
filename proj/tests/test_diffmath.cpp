#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "topoloc/grad_check.hpp"
#include "topoloc/optim.hpp"
#include "topoloc/params.hpp"
#include "topoloc/tape.hpp"
#include "topoloc/tensor.hpp"

using namespace topoloc;
using ad::Tape;
using ad::Var;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (double& v : t.data()) v = u(rng);
  return t;
}

using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Reduces the op output to a scalar with fixed random weights so every output
// entry contributes a distinct amount to the loss.
double eval_scalar(const Fn& f, const std::vector<Tensor>& inputs, const Tensor& weights) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return ad::sum_all(ad::hadamard(f(tape, vars), tape.constant(weights))).value().item();
}

// Central differences written out here rather than borrowed from grad_check.
double fd_max_rel_error(const Fn& f, std::vector<Tensor> inputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor weights;
  {
    Tape probe;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(probe.constant(t));
    Var out = f(probe, vars);
    weights = random_tensor(out.rows(), out.cols(), rng);
  }
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  tape.backward(ad::sum_all(ad::hadamard(f(tape, vars), tape.constant(weights))));

  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = tape.grad(vars[k].id).empty() ? Tensor(inputs[k].rows(), inputs[k].cols())
                                                          : tape.grad(vars[k].id);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double keep = inputs[k][i];
      inputs[k][i] = keep + h;
      const double up = eval_scalar(f, inputs, weights);
      inputs[k][i] = keep - h;
      const double down = eval_scalar(f, inputs, weights);
      inputs[k][i] = keep;
      const double num = (up - down) / (2 * h);
      const double den = std::max({std::abs(num), std::abs(analytic[i]), 1e-4});
      worst = std::max(worst, std::abs(num - analytic[i]) / den);
    }
  }
  return worst;
}

}  // namespace

TEST(Tensor, ShapeAndAccess) {
  Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t(1, 2), 6.0);
  EXPECT_EQ(t.shape_str(), "[2x3]");
  EXPECT_THROW(Tensor(2, 2, std::vector<double>{1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(t.item(), std::invalid_argument);
  t(0, 0) = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Primitives, ForwardValues) {
  Tape tape;
  Var z = tape.constant(Tensor::row({0.0}));
  EXPECT_DOUBLE_EQ(ad::sigmoid(z).value().item(), 0.5);
  EXPECT_DOUBLE_EQ(ad::tanh(z).value().item(), 0.0);
  Var big = tape.constant(Tensor::row({-800.0, 800.0}));
  const Tensor s = ad::sigmoid(big).value();
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 1.0);
  Var m = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  Var n = tape.constant(Tensor::from_rows({{5, 6}, {7, 8}}));
  EXPECT_EQ(ad::matmul(m, n).value(), Tensor::from_rows({{19, 22}, {43, 50}}));
  EXPECT_EQ(ad::transpose(m).value(), Tensor::from_rows({{1, 3}, {2, 4}}));
  EXPECT_EQ(ad::sum_rows(m).value(), Tensor::row({4, 6}));
  EXPECT_EQ(ad::concat_cols(m, n).value(), Tensor::from_rows({{1, 2, 5, 6}, {3, 4, 7, 8}}));
  EXPECT_EQ(ad::slice_cols(ad::concat_cols(m, n), 1, 2).value(), Tensor::from_rows({{2, 5}, {4, 7}}));
  EXPECT_EQ(ad::relu(tape.constant(Tensor::row({-1, 0, 2}))).value(), Tensor::row({0, 0, 2}));
}

TEST(Primitives, ShapeErrors) {
  Tape tape;
  Var a = tape.constant(Tensor(2, 3));
  Var b = tape.constant(Tensor(2, 2));
  EXPECT_THROW(ad::matmul(a, b), std::invalid_argument);
  EXPECT_THROW(ad::add(a, b), std::invalid_argument);
  EXPECT_THROW(ad::hadamard(a, b), std::invalid_argument);
  EXPECT_THROW(ad::slice_cols(a, 2, 2), std::invalid_argument);
  EXPECT_THROW(ad::cross_entropy(tape.constant(Tensor(1, 4)), 4), std::invalid_argument);
  EXPECT_THROW(tape.backward(a), std::invalid_argument);
}

TEST(Primitives, CrossEntropyUniformIsLogN) {
  for (std::size_t n : {1u, 2u, 8u, 40u}) {
    Tape tape;
    Var logits = tape.constant(Tensor(1, n, 0.37));
    EXPECT_NEAR(ad::cross_entropy(logits, n / 2).value().item(), std::log(static_cast<double>(n)), 1e-12);
  }
  Tape tape;
  EXPECT_NEAR(ad::cross_entropy(tape.constant(Tensor(1, 8)), 3).value().item(), 2.0794, 5e-5);
  // Stable for huge logits.
  Var sharp = tape.constant(Tensor::row({1000.0, -1000.0}));
  EXPECT_NEAR(ad::cross_entropy(sharp, 0).value().item(), 0.0, 1e-12);
  EXPECT_NEAR(ad::cross_entropy(sharp, 1).value().item(), 2000.0, 1e-9);
}

TEST(Primitives, SoftmaxRowsNormalized) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    const Tensor x = random_tensor(1 + trial % 5, 1 + trial % 13, rng, -30.0, 30.0);
    const Tensor p = ad::softmax_rows(tape.constant(x)).value();
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double s = 0.0;
      for (double v : p.row_span(r)) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Backward, QuadraticGradient) {
  Tape tape;
  Var x = tape.constant(Tensor::scalar(3.0));
  Var loss = ad::hadamard(x, x);
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(tape.grad(x.id).item(), 6.0);
}

TEST(Backward, ParametersOffPathGetZero) {
  ParamSet ps;
  ps.add("used", Tensor::row({2.0}));
  ps.add("unused", Tensor::row({5.0, 1.0}));
  Tape tape;
  Var u = tape.param(ps, "used");
  tape.backward(ad::hadamard(u, u));
  const auto g = tape.param_grads(ps);
  EXPECT_DOUBLE_EQ(g[0].item(), 4.0);
  EXPECT_EQ(g[1], Tensor(1, 2));
}

TEST(Backward, FanOutAccumulates) {
  Tape tape;
  Var x = tape.constant(Tensor::scalar(2.0));
  Var y = ad::add(ad::scale(x, 3.0), ad::hadamard(x, x));  // 3x + x^2
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x.id).item(), 7.0);
}

struct PrimitiveCase {
  const char* name;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  Fn fn;
};

class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, MatchCentralDifferences) {
  auto adj = std::make_shared<const ad::Adjacency>(ad::Adjacency{{1, 3}, {0, 2}, {1}, {0}, {}});
  const std::vector<PrimitiveCase> cases{
      {"matmul", {{3, 4}, {4, 2}}, [](Tape&, const std::vector<Var>& v) { return ad::matmul(v[0], v[1]); }},
      {"add", {{3, 4}, {3, 4}}, [](Tape&, const std::vector<Var>& v) { return ad::add(v[0], v[1]); }},
      {"sub", {{3, 4}, {3, 4}}, [](Tape&, const std::vector<Var>& v) { return ad::sub(v[0], v[1]); }},
      {"add_row", {{3, 4}, {1, 4}}, [](Tape&, const std::vector<Var>& v) { return ad::add_row(v[0], v[1]); }},
      {"mul_row", {{3, 4}, {1, 4}}, [](Tape&, const std::vector<Var>& v) { return ad::mul_row(v[0], v[1]); }},
      {"scale", {{3, 4}}, [](Tape&, const std::vector<Var>& v) { return ad::scale(v[0], -1.7); }},
      {"mul_scalar", {{3, 4}, {1, 1}}, [](Tape&, const std::vector<Var>& v) { return ad::mul_scalar(v[0], v[1]); }},
      {"hadamard", {{3, 4}, {3, 4}}, [](Tape&, const std::vector<Var>& v) { return ad::hadamard(v[0], v[1]); }},
      {"concat", {{3, 2}, {3, 3}}, [](Tape&, const std::vector<Var>& v) { return ad::concat_cols(v[0], v[1]); }},
      {"slice_cols", {{3, 5}}, [](Tape&, const std::vector<Var>& v) { return ad::slice_cols(v[0], 1, 3); }},
      {"slice_rows", {{4, 3}}, [](Tape&, const std::vector<Var>& v) { return ad::slice_rows(v[0], 1, 2); }},
      {"transpose", {{3, 4}}, [](Tape&, const std::vector<Var>& v) { return ad::transpose(v[0]); }},
      {"sum_rows", {{3, 4}}, [](Tape&, const std::vector<Var>& v) { return ad::sum_rows(v[0]); }},
      {"sum_all", {{3, 4}}, [](Tape&, const std::vector<Var>& v) { return ad::sum_all(v[0]); }},
      {"sigmoid", {{3, 4}}, [](Tape&, const std::vector<Var>& v) { return ad::sigmoid(ad::scale(v[0], 3.0)); }},
      {"tanh", {{3, 4}}, [](Tape&, const std::vector<Var>& v) { return ad::tanh(ad::scale(v[0], 2.0)); }},
      {"relu", {{3, 4}}, [](Tape&, const std::vector<Var>& v) { return ad::relu(v[0]); }},
      {"softmax_rows", {{3, 5}}, [](Tape&, const std::vector<Var>& v) { return ad::softmax_rows(v[0]); }},
      {"cross_entropy", {{1, 6}}, [](Tape&, const std::vector<Var>& v) { return ad::cross_entropy(v[0], 4); }},
      {"neighbor_sum", {{5, 3}},
       [adj](Tape&, const std::vector<Var>& v) { return ad::neighbor_sum(v[0], adj); }},
  };
  const auto& c = cases[static_cast<std::size_t>(GetParam())];
  std::mt19937_64 rng(100 + GetParam());
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<Tensor> inputs;
    for (auto [r, cc] : c.shapes) {
      Tensor t = random_tensor(r, cc, rng);
      // Keep relu inputs away from the kink.
      for (double& v : t.data())
        if (std::abs(v) < 1e-3) v = 0.5;
      inputs.push_back(t);
    }
    EXPECT_LT(fd_max_rel_error(c.fn, inputs, 7 + rep), 1e-6) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(All, PrimitiveGradients, ::testing::Range(0, 20));

TEST(BatchNorm, TrainingOutputIsStandardized) {
  std::mt19937_64 rng(3);
  ParamSet ps;
  const std::size_t d = 5;
  ad::BatchNormRef ref{&ps, ps.add("g", Tensor(1, d, 1.0)), ps.add("b", Tensor(1, d, 0.0)),
                       ps.add("rm", Tensor(1, d, 0.0), ParamGroup::buffer),
                       ps.add("rv", Tensor(1, d, 1.0), ParamGroup::buffer)};
  Tape tape;
  Tensor x = random_tensor(12, d, rng, -4.0, 9.0);
  const Tensor y = ad::batch_norm(tape.constant(x), ref, true, 0.0).value();
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < y.rows(); ++i) mean += y(i, j);
    mean /= static_cast<double>(y.rows());
    for (std::size_t i = 0; i < y.rows(); ++i) var += (y(i, j) - mean) * (y(i, j) - mean);
    var /= static_cast<double>(y.rows());
    EXPECT_NEAR(mean, 0.0, 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
  ASSERT_EQ(tape.batch_stats().size(), 1u);

  // Eval mode uses the stored statistics: identity with mean 0, var 1 (up to eps).
  Tape eval;
  const Tensor z = ad::batch_norm(eval.constant(x), ref, false, 0.0).value();
  EXPECT_LT(max_abs_diff(z, x), 1e-12);
}

TEST(BatchNorm, GradientsMatchGradCheck) {
  std::mt19937_64 rng(4);
  ParamSet ps;
  const std::size_t d = 3;
  ps.add("x", random_tensor(6, d, rng));
  ps.add("g", random_tensor(1, d, rng, 0.5, 1.5));
  ps.add("b", random_tensor(1, d, rng));
  ps.add("rm", Tensor(1, d), ParamGroup::buffer);
  ps.add("rv", Tensor(1, d, 1.0), ParamGroup::buffer);
  const Tensor w = random_tensor(6, d, rng);
  auto loss = [w](Tape& t, const ParamSet& p) {
    ad::BatchNormRef ref{&p, 1, 2, 3, 4};
    return ad::sum_all(ad::hadamard(ad::batch_norm(t.param(p, 0), ref, true), t.constant(w)));
  };
  EXPECT_TRUE(grad_check(loss, ps).passed(1e-4));
}

TEST(GradCheck, LinearMapIsExact) {
  std::mt19937_64 rng(8);
  ParamSet ps;
  ps.add("w", random_tensor(3, 2, rng));
  const Tensor x = random_tensor(4, 3, rng);
  auto loss = [x](Tape& t, const ParamSet& p) { return ad::sum_all(ad::matmul(t.constant(x), t.param(p, 0))); };
  EXPECT_LT(grad_check(loss, ps).worst(), 1e-8);
}

TEST(GradCheck, CorruptedAdjointIsCaught) {
  ParamSet ps;
  ps.add("w", Tensor::row({0.7, -1.3, 2.0}));
  // Square with an adjoint that is off by 50%.
  auto bad_square = [](Var x) {
    Tape& tape = *x.tape;
    Tensor v = x.value();
    for (double& e : v.data()) e = e * e;
    const std::size_t in = x.id;
    return tape.push(std::move(v), [in](Tape& t, std::size_t self) {
      const Tensor& g = t.out_grad(self);
      const Tensor xv = t.value(in);
      Tensor& gi = t.grad_mut(in);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += 3.0 * xv[i] * g[i];
    });
  };
  auto loss = [&](Tape& t, const ParamSet& p) { return ad::sum_all(bad_square(t.param(p, 0))); };
  EXPECT_GT(grad_check(loss, ps).worst(), 1e-2);
}

TEST(Optimizer, ZeroGradientLeavesParams) {
  ParamSet ps;
  ps.add("a", Tensor::row({1.0, -2.0}));
  const ParamSet before = ps;
  Optimizer opt({});
  opt.step(ps, {Tensor(1, 2)});
  EXPECT_EQ(ps, before);
}

TEST(Optimizer, PlainSgdStep) {
  ParamSet ps;
  ps.add("a", Tensor::scalar(1.0));
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::sgd;
  cfg.lr_main = 0.1;
  Optimizer opt(cfg);
  opt.step(ps, {Tensor::scalar(1.0)});
  EXPECT_DOUBLE_EQ(ps[0].value.item(), 0.9);
}

TEST(Optimizer, GroupsAndBuffers) {
  ParamSet ps;
  ps.add("main", Tensor::scalar(0.0));
  ps.add("enc", Tensor::scalar(0.0), ParamGroup::encoder);
  ps.add("buf", Tensor::scalar(0.0), ParamGroup::buffer);
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::sgd;
  cfg.lr_main = 1e-3;
  cfg.lr_encoder = 1e-5;
  Optimizer opt(cfg);
  opt.step(ps, {Tensor::scalar(1.0), Tensor::scalar(1.0), Tensor::scalar(1.0)});
  EXPECT_DOUBLE_EQ(ps[0].value.item(), -1e-3);
  EXPECT_DOUBLE_EQ(ps[1].value.item(), -1e-5);
  EXPECT_DOUBLE_EQ(ps[2].value.item(), 0.0);
  EXPECT_THROW(opt.step(ps, {Tensor::scalar(1.0)}), std::invalid_argument);
  EXPECT_THROW(opt.step(ps, {Tensor(1, 2), Tensor::scalar(1.0), Tensor::scalar(1.0)}), std::invalid_argument);
}

TEST(Optimizer, AdamFirstStepIsLrTimesSign) {
  // With bias correction the first Adam step is lr * g / (|g| + eps').
  ParamSet ps;
  ps.add("a", Tensor::row({1.0, 1.0}));
  OptimizerConfig cfg;
  cfg.lr_main = 0.01;
  Optimizer opt(cfg);
  opt.step(ps, {Tensor::row({0.3, -5.0})});
  EXPECT_NEAR(ps[0].value[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(ps[0].value[1], 1.0 + 0.01, 1e-9);
}

TEST(Optimizer, AdamConvergesOnConvexQuadratic) {
  // f(a, b) = (a - 3)^2 + 10 (b + 1)^2 + (a - 3)(b + 1); optimum (3, -1).
  ParamSet ps;
  ps.add("a", Tensor::scalar(0.0));
  ps.add("b", Tensor::scalar(0.0));
  OptimizerConfig cfg;
  cfg.lr_main = 0.05;
  Optimizer opt(cfg);
  int steps = 0;
  for (; steps < 5000; ++steps) {
    const double a = ps[0].value.item() - 3.0, b = ps[1].value.item() + 1.0;
    if (std::hypot(a, b) < 1e-6) break;
    opt.step(ps, {Tensor::scalar(2 * a + b), Tensor::scalar(20 * b + a)});
  }
  EXPECT_NEAR(ps[0].value.item(), 3.0, 1e-6);
  EXPECT_NEAR(ps[1].value.item(), -1.0, 1e-6);
  EXPECT_LE(steps, 5000);
}

TEST(Checkpoint, BitExactRoundTrip) {
  std::mt19937_64 rng(21);
  ParamSet ps;
  ps.add("encoder.l0.w", random_tensor(4, 3, rng), ParamGroup::encoder);
  ps.add("head.b", Tensor::row({1e-300, -0.0, 1.0 / 3.0}));
  ps.add("bn.running_var", Tensor::row({std::nextafter(1.0, 2.0)}), ParamGroup::buffer);
  std::stringstream ss;
  write_checkpoint(ss, ps);
  const ParamSet back = read_checkpoint(ss);
  ASSERT_EQ(back.size(), ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    EXPECT_EQ(back[i].name, ps[i].name);
    EXPECT_EQ(back[i].group, ps[i].group);
    ASSERT_TRUE(back[i].value.same_shape(ps[i].value));
    for (std::size_t j = 0; j < ps[i].value.size(); ++j)
      EXPECT_EQ(std::signbit(back[i].value[j]), std::signbit(ps[i].value[j]));
    EXPECT_EQ(back[i].value, ps[i].value);
  }
}

TEST(Checkpoint, RejectsGarbage) {
  std::stringstream bad("not-a-checkpoint\n");
  EXPECT_THROW(read_checkpoint(bad), std::runtime_error);
  std::stringstream truncated("topoloc-checkpoint 1\nparam w main 2 2\n0x1p+0 0x1p+0\n");
  EXPECT_THROW(read_checkpoint(truncated), std::runtime_error);
}

TEST(ParamSet, DuplicateNamesRejected) {
  ParamSet ps;
  ps.add("a", Tensor::scalar(1.0));
  EXPECT_THROW(ps.add("a", Tensor::scalar(2.0)), std::invalid_argument);
  EXPECT_THROW(ps.index_of("missing"), std::out_of_range);
}
