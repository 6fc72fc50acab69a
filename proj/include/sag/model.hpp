#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "sag/autodiff.hpp"
#include "sag/dataset.hpp"
#include "sag/errors.hpp"
#include "sag/rng.hpp"
#include "sag/tensor.hpp"

namespace sag {

/// Desk-scale residual 1D CNN: stem conv(k=3) + ReLU, a chain of residual
/// blocks (two conv(k=3), the first followed by ReLU, identity skip with a
/// 1x1 projection when channel counts change, ReLU after the join), global
/// average pool, dense head. Same-padding plus the pool means forward
/// accepts any series length >= 2. No batch normalization anywhere, so
/// gradients are deterministic and there is no train/eval mode split.
struct ResidualCNN1D {
  struct Param {
    std::string name;
    Tensor value;
  };

  std::vector<int> channels;  // channels[0] = stem, rest = per-block outputs
  int class_count = 0;
  std::vector<Param> params;

  /// Node ids of one forward graph instance on a tape.
  struct Binding {
    int input = -1;
    std::vector<int> params;
    int logits = -1;
  };

  /// Record the forward graph for a batch [B, 1, m] on the given tape.
  Binding bind(Tape& tape, Tensor input) const {
    if (input.rank() != 3 || input.dim(1) != 1)
      throw dimension_error("model: input must be [batch, 1, length], got " +
                            Tensor::shape_string(input.shape));
    Binding b;
    b.input = tape.leaf(std::move(input));
    b.params.reserve(params.size());
    for (const Param& p : params) b.params.push_back(tape.leaf(p.value));

    std::size_t next = 0;
    // arguments are not evaluated in a defined order, so draw ids explicitly
    const auto conv = [&](int in) {
      const int w = b.params[next++];
      const int bias = b.params[next++];
      return tape.conv1d_same(in, w, bias);
    };

    int x = tape.relu(conv(b.input));
    int in_ch = channels.at(0);
    for (std::size_t blk = 1; blk < channels.size(); ++blk) {
      const int out_ch = channels[blk];
      int h = tape.relu(conv(x));
      h = conv(h);
      int skip = x;
      if (out_ch != in_ch) skip = conv(x);
      x = tape.relu(tape.add(h, skip));
      in_ch = out_ch;
    }
    const int pooled = tape.global_avg_pool(x);
    const int head_w = b.params[next++];
    const int head_b = b.params[next++];
    b.logits = tape.dense(pooled, head_w, head_b);
    return b;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Param& p : params) n += p.value.size();
    return n;
  }
};

/// He fan-in initialisation, zero biases, deterministic in the seed.
inline ResidualCNN1D init_model(std::vector<int> channels, int class_count, std::uint64_t seed) {
  if (channels.empty()) throw input_error("init_model: channel list must be non-empty");
  if (class_count < 2) throw class_error("init_model: class_count must be >= 2");
  ResidualCNN1D model;
  model.channels = std::move(channels);
  model.class_count = class_count;

  SplitStream root = SplitStream(seed).child(0x6d6f64656cull);  // model init lane
  std::uint64_t lane = 0;
  const auto weight = [&](const std::string& name, std::vector<std::size_t> shape, std::size_t fan_in) {
    SplitStream s = root.child(lane++);
    Tensor t = Tensor::zeros(std::move(shape));
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : t.data) v = scale * s.next_normal();
    model.params.push_back({name, std::move(t)});
  };
  const auto bias = [&](const std::string& name, std::size_t n) {
    ++lane;  // keep weight draws independent of bias bookkeeping
    model.params.push_back({name, Tensor::zeros({n})});
  };

  const std::size_t stem = static_cast<std::size_t>(model.channels[0]);
  weight("stem.w", {stem, 1, 3}, 1 * 3);
  bias("stem.b", stem);
  std::size_t in_ch = stem;
  for (std::size_t blk = 1; blk < model.channels.size(); ++blk) {
    const std::size_t out_ch = static_cast<std::size_t>(model.channels[blk]);
    const std::string prefix = "block" + std::to_string(blk);
    weight(prefix + ".conv1.w", {out_ch, in_ch, 3}, in_ch * 3);
    bias(prefix + ".conv1.b", out_ch);
    weight(prefix + ".conv2.w", {out_ch, out_ch, 3}, out_ch * 3);
    bias(prefix + ".conv2.b", out_ch);
    if (out_ch != in_ch) {
      weight(prefix + ".proj.w", {out_ch, in_ch, 1}, in_ch);
      bias(prefix + ".proj.b", out_ch);
    }
    in_ch = out_ch;
  }
  weight("head.w", {static_cast<std::size_t>(class_count), in_ch}, in_ch);
  bias("head.b", static_cast<std::size_t>(class_count));
  return model;
}

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 100;
  int batch_size = 0;  // 0 resolves to min(16, n)
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(learning_rate > 0.0)) throw input_error("train: learning rate must be > 0");
    if (epochs < 1) throw input_error("train: epochs must be >= 1");
    if (batch_size < 0) throw input_error("train: batch size must be >= 1 (or 0 for the default)");
  }
};

/// Loss and accuracy measured on both splits after every epoch's updates.
struct TrainRecord {
  std::vector<double> train_loss;
  std::vector<double> test_loss;
  std::vector<double> train_acc;
  std::vector<double> test_acc;
};

namespace detail {

inline Tensor batch_input(const LabeledSeriesSet& set, const std::vector<std::size_t>& idx) {
  Tensor x = Tensor::zeros({idx.size(), 1, set.length});
  for (std::size_t b = 0; b < idx.size(); ++b)
    for (std::size_t t = 0; t < set.length; ++t) x.at(b, 0, t) = set.at(idx[b], t);
  return x;
}

inline std::vector<int> batch_labels(const LabeledSeriesSet& set, const std::vector<std::size_t>& idx) {
  std::vector<int> y(idx.size());
  for (std::size_t b = 0; b < idx.size(); ++b) y[b] = set.labels[idx[b]];
  return y;
}

/// Mean loss and exact-match accuracy over a whole set, batched forward-only.
inline std::pair<double, double> evaluate(const ResidualCNN1D& model, const LabeledSeriesSet& set,
                                          std::size_t batch) {
  double loss_sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t start = 0; start < set.size(); start += batch) {
    const std::size_t stop = std::min(set.size(), start + batch);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    Tape tape;
    const auto bound = model.bind(tape, batch_input(set, idx));
    const std::vector<int> y = batch_labels(set, idx);
    const int loss = tape.softmax_cross_entropy(bound.logits, y);
    loss_sum += tape.value(loss).data[0] * static_cast<double>(idx.size());
    const Tensor& logits = tape.value(bound.logits);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.dim(1); ++c) {
        if (logits.at(b, c) > logits.at(b, best)) best = c;  // ties keep the lower class id
      }
      if (static_cast<int>(best) == y[b]) ++hits;
    }
  }
  return {loss_sum / static_cast<double>(set.size()),
          static_cast<double>(hits) / static_cast<double>(set.size())};
}

}  // namespace detail

/// Full-batch-shuffled minibatch training with bias-corrected Adam. Pure
/// function of (model, data, config): replays are bit-identical. Returns the
/// final-epoch model (no early stopping or checkpoint selection) and the
/// per-epoch loss/accuracy curves.
inline std::pair<ResidualCNN1D, TrainRecord> train(ResidualCNN1D model, const DatasetSplit& split,
                                                   const TrainConfig& cfg) {
  cfg.validate();
  split.validate();
  if (model.class_count != split.train.class_count)
    throw class_error("train: model has " + std::to_string(model.class_count) + " classes, data has " +
                      std::to_string(split.train.class_count));

  const std::size_t n = split.train.size();
  const std::size_t batch =
      cfg.batch_size > 0 ? static_cast<std::size_t>(cfg.batch_size) : std::min<std::size_t>(16, n);

  std::vector<Tensor> adam_m, adam_v;
  adam_m.reserve(model.params.size());
  adam_v.reserve(model.params.size());
  for (const auto& p : model.params) {
    adam_m.push_back(Tensor::zeros(p.value.shape));
    adam_v.push_back(Tensor::zeros(p.value.shape));
  }
  std::uint64_t step = 0;

  SplitStream shuffle_root = SplitStream(cfg.seed).child(0x73687566ull);  // shuffle lane
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainRecord record;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    try {
      SplitStream shuffle = shuffle_root.child(static_cast<std::uint64_t>(epoch));
      for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = shuffle.next_below(i);
        std::swap(order[i - 1], order[j]);
      }

      for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t stop = std::min(n, start + batch);
        const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(stop));
        Tape tape;
        const auto bound = model.bind(tape, detail::batch_input(split.train, idx));
        const int loss = tape.softmax_cross_entropy(bound.logits, detail::batch_labels(split.train, idx));
        tape.backward(loss);

        ++step;
        const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
        for (std::size_t p = 0; p < model.params.size(); ++p) {
          const Tensor& g = tape.grad(bound.params[p]);
          Tensor& theta = model.params[p].value;
          for (std::size_t i = 0; i < theta.data.size(); ++i) {
            const double gi = g.data[i];
            adam_m[p].data[i] = cfg.adam_beta1 * adam_m[p].data[i] + (1.0 - cfg.adam_beta1) * gi;
            adam_v[p].data[i] = cfg.adam_beta2 * adam_v[p].data[i] + (1.0 - cfg.adam_beta2) * gi * gi;
            const double mhat = adam_m[p].data[i] / bc1;
            const double vhat = adam_v[p].data[i] / bc2;
            theta.data[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
          }
        }
      }

      const auto [train_loss, train_acc] = detail::evaluate(model, split.train, 64);
      const auto [test_loss, test_acc] = detail::evaluate(model, split.test, 64);
      if (!std::isfinite(train_loss) || !std::isfinite(test_loss))
        throw numeric_error("non-finite loss");
      record.train_loss.push_back(train_loss);
      record.test_loss.push_back(test_loss);
      record.train_acc.push_back(train_acc);
      record.test_acc.push_back(test_acc);
    } catch (const numeric_error& e) {
      throw divergence_error("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
  }
  return {std::move(model), std::move(record)};
}

/// Argmax of the logits per sample; exact ties go to the lower class id.
inline std::vector<int> predict(const ResidualCNN1D& model, const LabeledSeriesSet& set) {
  std::vector<int> out(set.size());
  for (std::size_t start = 0; start < set.size(); start += 64) {
    const std::size_t stop = std::min(set.size(), start + 64);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    Tape tape;
    const auto bound = model.bind(tape, detail::batch_input(set, idx));
    const Tensor& logits = tape.value(bound.logits);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.dim(1); ++c) {
        if (logits.at(b, c) > logits.at(b, best)) best = c;
      }
      out[idx[b]] = static_cast<int>(best);
    }
  }
  return out;
}

inline double evaluate_accuracy(const ResidualCNN1D& model, const LabeledSeriesSet& set) {
  const std::vector<int> pred = predict(model, set);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (pred[i] == set.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(set.size());
}

/// Per-sample loss gradients with respect to the input series: row i is
/// d CE(f(x_i), y_i) / d x_i. Each sample is scored against its true label
/// on its own tape; the model parameters are never touched.
inline Tensor input_gradients(const ResidualCNN1D& model, const LabeledSeriesSet& set) {
  Tensor g = Tensor::zeros({set.size(), set.length});
  for (std::size_t i = 0; i < set.size(); ++i) {
    Tape tape;
    const auto bound = model.bind(tape, detail::batch_input(set, {i}));
    const int loss = tape.softmax_cross_entropy(bound.logits, {set.labels[i]});
    tape.backward(loss);
    const Tensor& gi = tape.grad(bound.input);
    for (std::size_t t = 0; t < set.length; ++t) g.at(i, t) = gi.at(0, 0, t);
  }
  return g;
}

// --- checkpoint io ---------------------------------------------------------
//
// Flat named-tensor container, little-endian:
//   magic "SAGMODEL" | u32 version=1 | u32 n_channels | i32 channels[...]
//   | i32 class_count | u32 tensor_count
//   | per tensor: u32 name_len, name bytes, u32 rank, u64 dims[rank],
//                 f64 data[prod(dims)]

namespace detail {

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw format_error("checkpoint: truncated file");
  return v;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'S', 'A', 'G', 'M', 'O', 'D', 'E', 'L'};

inline void save_checkpoint(const ResidualCNN1D& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(out, 1);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.channels.size()));
  for (int c : model.channels) detail::put<std::int32_t>(out, c);
  detail::put<std::int32_t>(out, model.class_count);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.params.size()));
  for (const auto& p : model.params) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape) detail::put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(p.value.data.data()),
              static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
  }
  if (!out) throw io_error("write failed for " + path.string());
}

inline ResidualCNN1D load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw format_error(path.string() + ": not a model checkpoint");
  const auto version = detail::get<std::uint32_t>(in);
  if (version != 1) throw format_error(path.string() + ": unsupported version " + std::to_string(version));
  ResidualCNN1D model;
  const auto n_channels = detail::get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_channels; ++i) model.channels.push_back(detail::get<std::int32_t>(in));
  model.class_count = detail::get<std::int32_t>(in);
  const auto count = detail::get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::get<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = detail::get<std::uint32_t>(in);
    std::vector<std::size_t> shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(detail::get<std::uint64_t>(in));
    Tensor t = Tensor::zeros(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw format_error(path.string() + ": truncated tensor data");
    model.params.push_back({std::move(name), std::move(t)});
  }
  return model;
}

/// FNV-1a over the raw parameter bytes; used to assert that scoring leaves
/// the model untouched.
inline std::uint64_t parameter_fingerprint(const ResidualCNN1D& model) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto feed = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& p : model.params) {
    feed(p.name.data(), p.name.size());
    feed(p.value.data.data(), p.value.data.size() * sizeof(double));
  }
  return h;
}

}  // namespace sag
