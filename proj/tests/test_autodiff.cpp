#include "sag/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "sag/gradcheck.hpp"
#include "sag/rng.hpp"

using namespace sag;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, SplitStream& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = scale * rng.next_normal();
  return t;
}

// reference cross-correlation, plain triple loop with explicit zero padding
Tensor conv1d_reference(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t batch = x.dim(0), ci = x.dim(1), len = x.dim(2);
  const std::size_t co = w.dim(0), k = w.dim(2);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  Tensor out = Tensor::zeros({batch, co, len});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t t = 0; t < len; ++t) {
        double acc = b.at(o);
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - pad;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
            acc += x.at(n, c, static_cast<std::size_t>(src)) * w.at(o, c, j);
          }
        out.at(n, o, t) = acc;
      }
  return out;
}

}  // namespace

TEST(Conv1d, IdentityKernel) {
  Tape tape;
  const int x = tape.leaf(Tensor::from({1, 1, 4}, {1, 2, 3, 4}));
  const int w = tape.leaf(Tensor::from({1, 1, 1}, {1.0}));
  const int b = tape.leaf(Tensor::zeros({1}));
  const int y = tape.conv1d_same(x, w, b);
  EXPECT_EQ(tape.value(y).data, tape.value(x).data);
}

TEST(Conv1d, HandArithmeticWithZeroPadding) {
  Tape tape;
  const int x = tape.leaf(Tensor::from({1, 1, 3}, {1, 2, 3}));
  const int w = tape.leaf(Tensor::from({1, 1, 3}, {1, 1, 1}));
  const int b = tape.leaf(Tensor::zeros({1}));
  const int y = tape.conv1d_same(x, w, b);
  EXPECT_EQ(tape.value(y).data, (std::vector<double>{3, 6, 5}));
}

TEST(Conv1d, MatchesNaiveReference) {
  SplitStream rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t batch = 1 + rng.next_below(3);
    const std::size_t ci = 1 + rng.next_below(3);
    const std::size_t co = 1 + rng.next_below(4);
    const std::size_t len = 2 + rng.next_below(8);
    const std::size_t k = 1 + 2 * rng.next_below(3);  // 1, 3, 5
    const Tensor x = random_tensor({batch, ci, len}, rng);
    const Tensor w = random_tensor({co, ci, k}, rng);
    const Tensor b = random_tensor({co}, rng);
    Tape tape;
    const int y = tape.conv1d_same(tape.leaf(x), tape.leaf(w), tape.leaf(b));
    const Tensor ref = conv1d_reference(x, w, b);
    ASSERT_EQ(tape.value(y).shape, ref.shape);
    for (std::size_t i = 0; i < ref.size(); ++i)
      EXPECT_NEAR(tape.value(y).data[i], ref.data[i], 1e-12) << "trial " << trial << " index " << i;
  }
}

TEST(Conv1d, RejectsBadShapes) {
  Tape tape;
  const int x = tape.leaf(Tensor::zeros({1, 2, 4}));
  const int w_bad_ci = tape.leaf(Tensor::zeros({1, 3, 3}));
  const int w_even_k = tape.leaf(Tensor::zeros({1, 2, 2}));
  const int b = tape.leaf(Tensor::zeros({1}));
  EXPECT_THROW(tape.conv1d_same(x, w_bad_ci, b), dimension_error);
  EXPECT_THROW(tape.conv1d_same(x, w_even_k, b), dimension_error);
}

TEST(Elementwise, ReluAddPool) {
  Tape tape;
  const int x = tape.leaf(Tensor::from({3}, {-1, 0, 2}));
  EXPECT_EQ(tape.value(tape.relu(x)).data, (std::vector<double>{0, 0, 2}));

  const int y = tape.leaf(Tensor::from({3}, {5, 6, 7}));
  const int zeros = tape.leaf(Tensor::zeros({3}));
  EXPECT_EQ(tape.value(tape.add(y, zeros)).data, (std::vector<double>{5, 6, 7}));

  const int p = tape.leaf(Tensor::from({1, 1, 4}, {1, 2, 3, 4}));
  EXPECT_EQ(tape.value(tape.global_avg_pool(p)).data, (std::vector<double>{2.5}));

  const int mismatched = tape.leaf(Tensor::zeros({4}));
  EXPECT_THROW(tape.add(y, mismatched), dimension_error);
}

TEST(CrossEntropy, UniformLogitsGiveLog2) {
  Tape tape;
  const int logits = tape.leaf(Tensor::from({1, 2}, {0, 0}));
  const int loss = tape.softmax_cross_entropy(logits, {0});
  EXPECT_NEAR(tape.value(loss).data[0], std::log(2.0), 1e-12);
}

TEST(CrossEntropy, HugeLogitGapStaysFinite) {
  Tape tape;
  const int logits = tape.leaf(Tensor::from({1, 2}, {1000, 0}));
  const int loss = tape.softmax_cross_entropy(logits, {0});
  EXPECT_GE(tape.value(loss).data[0], 0.0);
  EXPECT_LT(tape.value(loss).data[0], 1e-10);
}

TEST(CrossEntropy, LabelOutOfRangeThrows) {
  Tape tape;
  const int logits = tape.leaf(Tensor::zeros({1, 2}));
  EXPECT_THROW(tape.softmax_cross_entropy(logits, {2}), class_error);
  EXPECT_THROW(tape.softmax_cross_entropy(logits, {-1}), class_error);
}

TEST(CrossEntropy, MatchesHighPrecisionReference) {
  SplitStream rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t batch = 1 + rng.next_below(5);
    const std::size_t classes = 2 + rng.next_below(3);
    Tensor logits = Tensor::zeros({batch, classes});
    for (double& v : logits.data) v = 6.0 * rng.next_normal();
    std::vector<int> labels(batch);
    for (int& y : labels) y = static_cast<int>(rng.next_below(classes));

    long double ref = 0.0L;
    for (std::size_t n = 0; n < batch; ++n) {
      long double denom = 0.0L;
      for (std::size_t c = 0; c < classes; ++c) denom += std::exp(static_cast<long double>(logits.at(n, c)));
      ref += -(static_cast<long double>(logits.at(n, static_cast<std::size_t>(labels[n]))) - std::log(denom));
    }
    ref /= static_cast<long double>(batch);

    Tape tape;
    const int loss = tape.softmax_cross_entropy(tape.leaf(logits), labels);
    EXPECT_NEAR(tape.value(loss).data[0], static_cast<double>(ref), 1e-10);
  }
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  const int x = tape.leaf(Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}));
  tape.backward(tape.sum(x));
  EXPECT_EQ(tape.grad(x).data, (std::vector<double>{1, 1, 1, 1, 1, 1}));
}

TEST(Backward, LinearDenseGradientIsWeights) {
  Tape tape;
  const Tensor w = Tensor::from({1, 4}, {0.5, -1.0, 2.0, 0.25});
  const int x = tape.leaf(Tensor::from({1, 4}, {1, 2, 3, 4}));
  const int y = tape.dense(x, tape.leaf(w), tape.leaf(Tensor::zeros({1})));
  tape.backward(tape.sum(y));
  EXPECT_EQ(tape.grad(x).data, w.data);
}

TEST(Backward, NonScalarLossRejected) {
  Tape tape;
  const int x = tape.leaf(Tensor::zeros({2, 2}));
  EXPECT_THROW(tape.backward(x), contract_error);
}

TEST(Backward, RepeatedBackwardIsIdentical) {
  SplitStream rng(41);
  Tape tape;
  const int x = tape.leaf(random_tensor({2, 1, 8}, rng));
  const int w = tape.leaf(random_tensor({3, 1, 3}, rng, 0.5));
  const int b = tape.leaf(random_tensor({3}, rng, 0.1));
  const int h = tape.relu(tape.conv1d_same(x, w, b));
  const int loss = tape.sum(h);
  tape.backward(loss);
  const std::vector<double> first = tape.grad(x).data;
  const std::vector<double> firstw = tape.grad(w).data;
  tape.backward(loss);
  EXPECT_EQ(tape.grad(x).data, first);
  EXPECT_EQ(tape.grad(w).data, firstw);
}

TEST(Backward, GradBeforeBackwardThrows) {
  Tape tape;
  const int x = tape.leaf(Tensor::zeros({2}));
  EXPECT_THROW(tape.grad(x), contract_error);
}

TEST(Tape, NonFiniteValueRejected) {
  Tape tape;
  Tensor bad = Tensor::from({2}, {1.0, std::numeric_limits<double>::infinity()});
  EXPECT_THROW(tape.leaf(bad), numeric_error);
}

TEST(FiniteDifference, QuadraticNormGradient) {
  SplitStream rng(7);
  const Tensor x = random_tensor({6}, rng);
  const auto make_loss = [](Tape& tape, int xid) {
    return tape.scale(tape.sum(tape.mul(xid, xid)), 0.5);  // 0.5 * ||x||^2
  };
  Tape tape;
  const int xid = tape.leaf(x);
  tape.backward(make_loss(tape, xid));
  const Tensor analytic = tape.grad(xid);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(analytic.data[i], x.data[i], 1e-12);

  const auto probe = [&](const Tensor& xp) {
    Tape t;
    const int id = t.leaf(xp);
    const int loss = t.scale(t.sum(t.mul(id, id)), 0.5);
    return ProbeOutcome{t.value(loss).data[0], t.relu_input_values()};
  };
  const FdReport r = finite_difference_check(probe, x, analytic, 1e-4);
  EXPECT_EQ(r.excluded.size(), 0u);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(FiniteDifference, DenseCrossEntropyGradient) {
  SplitStream rng(13);
  const Tensor x = random_tensor({1, 8}, rng);
  const Tensor w = random_tensor({2, 8}, rng, 0.5);
  const Tensor b = random_tensor({2}, rng, 0.1);
  const std::vector<int> labels = {1};

  const auto forward = [&](Tape& tape, const Tensor& xin) {
    const int xid = tape.leaf(xin);
    const int logits = tape.dense(xid, tape.leaf(w), tape.leaf(b));
    const int loss = tape.softmax_cross_entropy(logits, labels);
    return std::pair<int, int>{xid, loss};
  };
  Tape tape;
  const auto [xid, loss] = forward(tape, x);
  tape.backward(loss);
  const auto probe = [&](const Tensor& xp) {
    Tape t;
    const auto [id, l] = forward(t, xp);
    (void)id;
    return ProbeOutcome{t.value(l).data[0], t.relu_input_values()};
  };
  const FdReport r = finite_difference_check(probe, x, tape.grad(xid), 1e-4);
  EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(FiniteDifference, ReluKinkCoordinatesExcludedNotFailed) {
  // x has one coordinate exactly at the kink; its +/- probes land on
  // different sides and must be excluded
  const Tensor x = Tensor::from({4}, {1.0, 0.0, -1.0, 2.0});
  const auto probe = [](const Tensor& xp) {
    Tape t;
    const int loss = t.sum(t.relu(t.leaf(xp)));
    return ProbeOutcome{t.value(loss).data[0], t.relu_input_values()};
  };
  Tape tape;
  const int xid = tape.leaf(x);
  tape.backward(tape.sum(tape.relu(xid)));
  const FdReport r = finite_difference_check(probe, x, tape.grad(xid), 1e-4);
  ASSERT_EQ(r.excluded.size(), 1u);
  EXPECT_EQ(r.excluded[0], 1u);
  EXPECT_EQ(r.checked, 3u);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(FiniteDifference, ShapeMismatchThrows) {
  const auto probe = [](const Tensor&) { return ProbeOutcome{0.0, {}}; };
  EXPECT_THROW(finite_difference_check(probe, Tensor::zeros({3}), Tensor::zeros({4}), 1e-4), dimension_error);
}
