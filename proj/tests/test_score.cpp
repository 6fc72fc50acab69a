#include "sag/score.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sag/dataset.hpp"
#include "sag/model.hpp"
#include "sag/rng.hpp"

using namespace sag;

namespace {

// independent oracle: one (t, c) cell at a time, plain loops
Tensor delta_brute_force(const Tensor& g, const std::vector<int>& labels, int classes) {
  const std::size_t m = g.dim(1);
  Tensor delta = Tensor::zeros({static_cast<std::size_t>(classes), m});
  for (int c = 0; c < classes; ++c) {
    for (std::size_t t = 0; t < m; ++t) {
      double acc = 0.0;
      std::size_t n_c = 0;
      for (std::size_t i = 0; i < g.dim(0); ++i) {
        if (labels[i] == c) {
          acc += g.at(i, t);
          ++n_c;
        }
      }
      delta.at(static_cast<std::size_t>(c), t) = std::abs(acc / static_cast<double>(n_c));
    }
  }
  return delta;
}

ClassGradientProfile uniform_profile(std::size_t classes, std::size_t m, double k) {
  ClassGradientProfile p;
  p.delta = Tensor::full({classes, m}, k);
  p.class_counts.assign(classes, 1);
  return p;
}

}  // namespace

TEST(PointShortcutScore, SingleSampleClasses) {
  const Tensor g = Tensor::from({2, 2}, {1, -1, 2, 2});
  const ClassGradientProfile p = point_shortcut_score(g, {0, 1}, 2);
  EXPECT_EQ(p.delta.data, (std::vector<double>{1, 1, 2, 2}));
  EXPECT_EQ(p.class_counts, (std::vector<std::size_t>{1, 1}));
}

TEST(PointShortcutScore, EmptyClassRejected) {
  const Tensor g = Tensor::from({1, 2}, {1, -1});
  EXPECT_THROW(point_shortcut_score(g, {0}, 2), class_error);
}

TEST(PointShortcutScore, SignCancellation) {
  const Tensor g = Tensor::from({3, 2}, {1, 3, -1, 3, 0.5, 0.5});
  const ClassGradientProfile p = point_shortcut_score(g, {0, 0, 1}, 2);
  EXPECT_EQ(p.delta.at(0, 0), 0.0);  // +1 and -1 cancel before the abs
  EXPECT_EQ(p.delta.at(0, 1), 3.0);
  EXPECT_EQ(p.delta.at(1, 0), 0.5);
}

TEST(PointShortcutScore, MeanOfAbsVariantDoesNotCancel) {
  const Tensor g = Tensor::from({3, 2}, {1, 2, -1, 2, 0.3, 0.3});
  const auto abs_mean = point_shortcut_score(g, {0, 0, 1}, 2, DeltaVariant::abs_of_mean);
  const auto mean_abs = point_shortcut_score(g, {0, 0, 1}, 2, DeltaVariant::mean_of_abs);
  EXPECT_EQ(abs_mean.delta.at(0, 0), 0.0);
  EXPECT_EQ(mean_abs.delta.at(0, 0), 1.0);
  EXPECT_EQ(abs_mean.delta.at(0, 1), 2.0);
  EXPECT_EQ(mean_abs.delta.at(0, 1), 2.0);
}

TEST(PointShortcutScore, VariantsAgreeOnUniformSigns) {
  SplitStream rng(3);
  Tensor g = Tensor::zeros({4, 5});
  for (double& v : g.data) v = std::abs(rng.next_normal());
  const auto a = point_shortcut_score(g, {0, 1, 0, 1}, 2, DeltaVariant::abs_of_mean);
  const auto b = point_shortcut_score(g, {0, 1, 0, 1}, 2, DeltaVariant::mean_of_abs);
  for (std::size_t i = 0; i < a.delta.size(); ++i) EXPECT_NEAR(a.delta.data[i], b.delta.data[i], 1e-15);
}

TEST(PointShortcutScore, MatchesBruteForceOracle) {
  SplitStream rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int classes = 2 + static_cast<int>(rng.next_below(2));  // 2..3
    const std::size_t m = 2 + rng.next_below(7);                  // 2..8
    const std::size_t n = static_cast<std::size_t>(classes) + rng.next_below(16 - static_cast<std::size_t>(classes) + 1);
    std::vector<int> labels;
    for (int c = 0; c < classes; ++c) labels.push_back(c);  // every class present
    while (labels.size() < n) labels.push_back(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(classes))));
    Tensor g = Tensor::zeros({n, m});
    for (double& v : g.data) v = 3.0 * rng.next_normal();

    const ClassGradientProfile fast = point_shortcut_score(g, labels, classes);
    const Tensor slow = delta_brute_force(g, labels, classes);
    ASSERT_EQ(fast.delta.shape, slow.shape);
    for (std::size_t i = 0; i < slow.size(); ++i)
      EXPECT_NEAR(fast.delta.data[i], slow.data[i], 1e-12) << "trial " << trial;
  }
}

TEST(PointShortcutScore, NonFiniteGradientRejected) {
  Tensor g = Tensor::from({2, 2}, {1, 2, 3, 4});
  g.data[2] = std::nan("");
  EXPECT_THROW(point_shortcut_score(g, {0, 1}, 2), input_error);
}

TEST(SagScore, UniformProfileIsOneOverM) {
  for (std::size_t m : {2u, 7u, 64u}) {
    const auto scores = sag_scores(uniform_profile(2, m, 1.0));
    EXPECT_EQ(scores[0], 1.0 / static_cast<double>(m));
    EXPECT_EQ(scores[1], 1.0 / static_cast<double>(m));
  }
  // arbitrary positive level, up to rounding in the sum
  const auto scores = sag_scores(uniform_profile(2, 13, 0.37));
  EXPECT_NEAR(scores[0], 1.0 / 13.0, 1e-14);
}

TEST(SagScore, OneHotProfileIsOne) {
  ClassGradientProfile p;
  p.delta = Tensor::zeros({1 + 1, 9});
  p.delta.at(0, 4) = 0.123;
  p.delta.at(1, 0) = 7.0;
  p.class_counts = {1, 1};
  const auto scores = sag_scores(p);
  EXPECT_EQ(scores[0], 1.0);
  EXPECT_EQ(scores[1], 1.0);
}

TEST(SagScore, HandValue) {
  ClassGradientProfile p;
  p.delta = Tensor::from({2, 3}, {3, 1, 1, 2, 2, 2});
  p.class_counts = {1, 1};
  const auto scores = sag_scores(p);
  EXPECT_EQ(scores[0], 0.6);  // 3 / (3+1+1)
}

TEST(SagScore, AllZeroRowIsAnError) {
  ClassGradientProfile p;
  p.delta = Tensor::from({2, 3}, {0, 0, 0, 1, 2, 3});
  p.class_counts = {1, 1};
  try {
    sag_scores(p);
    FAIL() << "expected degenerate_score_error";
  } catch (const degenerate_score_error& e) {
    EXPECT_NE(std::string(e.what()).find("class 0"), std::string::npos);
  }
}

TEST(SagScore, NegativeEntryRejected) {
  ClassGradientProfile p;
  p.delta = Tensor::from({2, 2}, {1, -0.5, 1, 1});
  p.class_counts = {1, 1};
  EXPECT_THROW(sag_scores(p), input_error);
}

TEST(SagScore, RangeScaleAndPermutationProperties) {
  SplitStream rng(555);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 2 + rng.next_below(63);
    std::vector<double> row(m);
    for (double& v : row) v = std::abs(rng.next_normal()) + 1e-9;
    ClassGradientProfile p;
    p.delta = Tensor::zeros({2, m});
    for (std::size_t t = 0; t < m; ++t) {
      p.delta.at(0, t) = row[t];
      p.delta.at(1, t) = 1.0;
    }
    p.class_counts = {1, 1};
    const auto scores = sag_scores(p);

    EXPECT_GE(scores[0], 1.0 / static_cast<double>(m) - 1e-12);
    EXPECT_LE(scores[0], 1.0);
    EXPECT_EQ(scores[1], 1.0 / static_cast<double>(m));  // exact for a uniform row of ones

    // positive scaling cancels in the ratio
    const double lambda = std::exp(6.0 * (rng.next_unit() - 0.5));
    ClassGradientProfile scaled = p;
    for (std::size_t t = 0; t < m; ++t) scaled.delta.at(0, t) *= lambda;
    EXPECT_NEAR(sag_scores(scaled)[0], scores[0], 1e-12);

    // permuting time indices leaves the score unchanged
    ClassGradientProfile shuffled = p;
    std::vector<double> perm_row = row;
    for (std::size_t i = m; i > 1; --i) std::swap(perm_row[i - 1], perm_row[rng.next_below(i)]);
    for (std::size_t t = 0; t < m; ++t) shuffled.delta.at(0, t) = perm_row[t];
    EXPECT_NEAR(sag_scores(shuffled)[0], scores[0], 1e-12);
  }
}

TEST(Detect, BenchmarkScoresShortcutRegime) {
  const SagReport r = detect({0.0469, 0.2176}, 0.15);
  EXPECT_TRUE(r.detected);
  ASSERT_TRUE(r.detected_class.has_value());
  EXPECT_EQ(*r.detected_class, 1);
}

TEST(Detect, BenchmarkScoresRegularRegime) {
  const SagReport r = detect({0.0350, 0.0356}, 0.15);
  EXPECT_FALSE(r.detected);
  EXPECT_FALSE(r.detected_class.has_value());
}

TEST(Detect, StrictInequalityAtTheBoundary) {
  const SagReport r = detect({0.15, 0.15}, 0.15);
  EXPECT_FALSE(r.detected);
}

TEST(Detect, TiesPickLowestClass) {
  const SagReport r = detect({0.4, 0.4}, 0.15);
  EXPECT_TRUE(r.detected);
  EXPECT_EQ(*r.detected_class, 0);
}

TEST(Detect, MonotoneInEpsilon) {
  SplitStream rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> scores(2 + rng.next_below(3));
    for (double& s : scores) s = rng.next_unit();
    const double lo = 0.05 + 0.4 * rng.next_unit();
    const double hi = lo + (0.99 - lo) * rng.next_unit();
    const SagReport at_lo = detect(scores, lo);
    const SagReport at_hi = detect(scores, hi);
    if (!at_lo.detected) EXPECT_FALSE(at_hi.detected);  // raising epsilon never creates a detection
  }
}

TEST(Detect, RejectsBadArguments) {
  EXPECT_THROW(detect({}, 0.15), input_error);
  EXPECT_THROW(detect({0.2}, 0.0), contract_error);
  EXPECT_THROW(detect({0.2}, 1.0), contract_error);
}

TEST(ScorePipeline, MatchesComposition) {
  SyntheticSpec spec;
  spec.n_per_class = 4;
  spec.length = 16;
  spec.seed = 13;
  const LabeledSeriesSet train_set = make_synthetic(spec).train;
  const ResidualCNN1D model = init_model({8, 8, 16, 16}, 2, 13);

  const SagReport piped = score_pipeline(model, train_set, 0.15);
  const Tensor g = input_gradients(model, train_set);
  const auto profile = point_shortcut_score(g, train_set.labels, train_set.class_count);
  const SagReport manual = detect(sag_scores(profile), 0.15);
  EXPECT_EQ(piped.sag, manual.sag);
  EXPECT_EQ(piped.detected, manual.detected);
  EXPECT_EQ(piped.detected_class, manual.detected_class);
}

TEST(ScorePipeline, ZeroHeadPropagatesDegenerateProfile) {
  SyntheticSpec spec;
  spec.n_per_class = 4;
  spec.length = 16;
  spec.seed = 14;
  const LabeledSeriesSet train_set = make_synthetic(spec).train;
  ResidualCNN1D model = init_model({8, 8, 16, 16}, 2, 14);
  for (auto& p : model.params) {
    if (p.name.rfind("head.", 0) == 0) {
      for (double& v : p.value.data) v = 0.0;
    }
  }
  EXPECT_THROW(score_pipeline(model, train_set, 0.15), degenerate_score_error);
}
