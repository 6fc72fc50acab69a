#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sag/gradcheck.hpp"
#include "sag/model.hpp"
#include "sag/rng.hpp"

namespace sag {

struct GradcheckSuiteReport {
  double max_rel_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t coordinates_excluded = 0;
  std::vector<double> per_seed_error;
  bool pass = false;  // max_rel_error < 1e-4
};

inline constexpr double kGradcheckTolerance = 1e-4;
inline constexpr double kGradcheckStep = 1e-4;
inline constexpr double kKinkTolerance = 1e-6;

/// Central-difference audit of the full model's tape gradients: for each
/// derived seed, draw a random model and batch, check every input coordinate
/// and a sample of coordinates of every parameter tensor. `sabotage`
/// corrupts the analytic input gradient so the suite must fail; it exists so
/// tests can prove the check has teeth.
inline GradcheckSuiteReport run_gradcheck_suite(std::uint64_t base_seed, int seeds = 5,
                                                bool sabotage = false) {
  GradcheckSuiteReport suite;
  constexpr std::size_t kBatch = 2;
  constexpr std::size_t kLen = 32;
  constexpr int kClasses = 2;
  constexpr std::size_t kCoordsPerParam = 12;

  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(s);
    SplitStream stream = SplitStream(seed).child(0x67636b00ull);
    const ResidualCNN1D model = init_model({16, 16, 32, 32}, kClasses, seed);

    Tensor x = Tensor::zeros({kBatch, 1, kLen});
    for (double& v : x.data) v = stream.next_normal();
    std::vector<int> labels(kBatch);
    for (int& y : labels) y = static_cast<int>(stream.next_below(kClasses));

    double seed_err = 0.0;

    // analytic gradients for the unperturbed point
    Tape tape;
    const auto bound = model.bind(tape, x);
    const int loss = tape.softmax_cross_entropy(bound.logits, labels);
    tape.backward(loss);

    // input coordinates, all of them
    {
      const auto probe = [&](const Tensor& xp) {
        Tape t;
        const auto b = model.bind(t, xp);
        const int l = t.softmax_cross_entropy(b.logits, labels);
        return ProbeOutcome{t.value(l).data[0], t.relu_input_values()};
      };
      Tensor analytic = tape.grad(bound.input);
      if (sabotage) {
        for (double& v : analytic.data) v += 0.5;
      }
      const FdReport r = finite_difference_check(probe, x, analytic, kGradcheckStep, kKinkTolerance);
      seed_err = std::max(seed_err, r.max_rel_error);
      suite.coordinates_checked += r.checked;
      suite.coordinates_excluded += r.excluded.size();
    }

    // a sample of coordinates of every parameter tensor
    for (std::size_t p = 0; p < model.params.size(); ++p) {
      const Tensor& theta = model.params[p].value;
      SplitStream coord_stream = stream.child(0x70617261ull + p);
      std::vector<std::size_t> coords;
      if (theta.size() <= kCoordsPerParam) {
        for (std::size_t i = 0; i < theta.size(); ++i) coords.push_back(i);
      } else {
        for (std::size_t i = 0; i < kCoordsPerParam; ++i)
          coords.push_back(coord_stream.next_below(theta.size()));
      }
      const auto probe = [&](const Tensor& wp) {
        ResidualCNN1D m = model;
        m.params[p].value = wp;
        Tape t;
        const auto b = m.bind(t, x);
        const int l = t.softmax_cross_entropy(b.logits, labels);
        return ProbeOutcome{t.value(l).data[0], t.relu_input_values()};
      };
      const FdReport r = finite_difference_check(probe, theta, tape.grad(bound.params[p]), kGradcheckStep, coords, kKinkTolerance);
      seed_err = std::max(seed_err, r.max_rel_error);
      suite.coordinates_checked += r.checked;
      suite.coordinates_excluded += r.excluded.size();
    }

    suite.per_seed_error.push_back(seed_err);
    suite.max_rel_error = std::max(suite.max_rel_error, seed_err);
  }
  suite.pass = suite.max_rel_error < kGradcheckTolerance;
  return suite;
}

}  // namespace sag
