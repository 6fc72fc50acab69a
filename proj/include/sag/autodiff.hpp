#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sag/errors.hpp"
#include "sag/tensor.hpp"

namespace sag {

/// Reverse-mode tape over dense double tensors.
///
/// Nodes are appended in construction order, which is already a topological
/// order (every op reads only existing nodes), so backward() is a single
/// reverse sweep. Gradients are zeroed at the start of every backward call;
/// running it twice gives identical results. All reductions accumulate in a
/// fixed left-to-right order and every op output is checked for finiteness.
class Tape {
 public:
  /// Register an input or parameter tensor. Its gradient is available after
  /// backward() like for any other node.
  int leaf(Tensor v) { return push(std::move(v), {}); }

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }

  const Tensor& grad(int id) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (n.grad.data.empty()) throw contract_error("tape: gradient not computed; run backward() first");
    return n.grad;
  }

  std::size_t node_count() const { return nodes_.size(); }

  int relu(int x) {
    const Tensor& in = value(x);
    Tensor out = in;
    for (double& v : out.data) v = std::max(0.0, v);
    relu_args_.push_back(x);
    return push(std::move(out), [x](Tape& t, const Tensor& g, int) {
      const Tensor& in = t.value(x);
      Tensor& gx = t.grad_ref(x);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        if (in.data[i] > 0.0) gx.data[i] += g.data[i];  // gradient 0 at exactly 0
      }
    });
  }

  int add(int a, int b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) {
      throw dimension_error("add: shape " + Tensor::shape_string(ta.shape) + " vs " +
                            Tensor::shape_string(tb.shape));
    }
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    return push(std::move(out), [a, b](Tape& t, const Tensor& g, int) {
      Tensor& ga = t.grad_ref(a);
      Tensor& gb = t.grad_ref(b);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        ga.data[i] += g.data[i];
        gb.data[i] += g.data[i];
      }
    });
  }

  int mul(int a, int b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) {
      throw dimension_error("mul: shape " + Tensor::shape_string(ta.shape) + " vs " +
                            Tensor::shape_string(tb.shape));
    }
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
    return push(std::move(out), [a, b](Tape& t, const Tensor& g, int) {
      const Tensor& ta = t.value(a);
      const Tensor& tb = t.value(b);
      Tensor& ga = t.grad_ref(a);
      Tensor& gb = t.grad_ref(b);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        ga.data[i] += g.data[i] * tb.data[i];
        gb.data[i] += g.data[i] * ta.data[i];
      }
    });
  }

  int scale(int a, double s) {
    Tensor out = value(a);
    for (double& v : out.data) v *= s;
    return push(std::move(out), [a, s](Tape& t, const Tensor& g, int) {
      Tensor& ga = t.grad_ref(a);
      for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += s * g.data[i];
    });
  }

  /// Sum of all entries; returns a rank-0 scalar node.
  int sum(int a) {
    const Tensor& ta = value(a);
    double acc = 0.0;
    for (double v : ta.data) acc += v;
    return push(Tensor::scalar(acc), [a](Tape& t, const Tensor& g, int) {
      Tensor& ga = t.grad_ref(a);
      for (double& v : ga.data) v += g.data[0];
    });
  }

  /// 1D cross-correlation with symmetric zero padding, stride 1.
  /// x: [batch, ch_in, len], w: [ch_out, ch_in, k] (k odd), b: [ch_out].
  int conv1d_same(int x, int w, int b) {
    const Tensor& tx = value(x);
    const Tensor& tw = value(w);
    const Tensor& tb = value(b);
    if (tx.rank() != 3 || tw.rank() != 3 || tb.rank() != 1)
      throw dimension_error("conv1d: expected ranks 3/3/1");
    const std::size_t batch = tx.dim(0), ci = tx.dim(1), len = tx.dim(2);
    const std::size_t co = tw.dim(0), k = tw.dim(2);
    if (tw.dim(1) != ci)
      throw dimension_error("conv1d: kernel ch_in " + std::to_string(tw.dim(1)) +
                            " != input ch_in " + std::to_string(ci));
    if (tb.dim(0) != co) throw dimension_error("conv1d: bias length != ch_out");
    if (k % 2 == 0) throw dimension_error("conv1d: kernel width must be odd, got " + std::to_string(k));
    const std::size_t pad = (k - 1) / 2;

    // Per (channel pair, kernel offset) the source window is a contiguous
    // slice, so the hot loop over t is branch-free and vectorizable.
    Tensor out = Tensor::zeros({batch, co, len});
    const std::ptrdiff_t slen = static_cast<std::ptrdiff_t>(len);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t o = 0; o < co; ++o) {
        double* out_row = out.data.data() + (n * co + o) * len;
        const double bias_o = tb.at(o);
        for (std::size_t t = 0; t < len; ++t) out_row[t] = bias_o;
        for (std::size_t c = 0; c < ci; ++c) {
          const double* x_row = tx.data.data() + (n * ci + c) * len;
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(pad);
            const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
            const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(slen, slen - shift);
            const double wj = tw.at(o, c, j);
            for (std::ptrdiff_t t = t0; t < t1; ++t) out_row[t] += wj * x_row[t + shift];
          }
        }
      }

    return push(std::move(out), [x, w, b, batch, ci, len, co, k, pad](Tape& t, const Tensor& g, int) {
      const Tensor& tx = t.value(x);
      const Tensor& tw = t.value(w);
      Tensor& gx = t.grad_ref(x);
      Tensor& gw = t.grad_ref(w);
      Tensor& gb = t.grad_ref(b);
      const std::ptrdiff_t slen = static_cast<std::ptrdiff_t>(len);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o = 0; o < co; ++o) {
          const double* g_row = g.data.data() + (n * co + o) * len;
          double acc_b = 0.0;
          for (std::size_t tt = 0; tt < len; ++tt) acc_b += g_row[tt];
          gb.at(o) += acc_b;
          for (std::size_t c = 0; c < ci; ++c) {
            const double* x_row = tx.data.data() + (n * ci + c) * len;
            double* gx_row = gx.data.data() + (n * ci + c) * len;
            for (std::size_t j = 0; j < k; ++j) {
              const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(pad);
              const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
              const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(slen, slen - shift);
              const double wj = tw.at(o, c, j);
              double acc_w = 0.0;
              for (std::ptrdiff_t tt = t0; tt < t1; ++tt) {
                gx_row[tt + shift] += g_row[tt] * wj;
                acc_w += g_row[tt] * x_row[tt + shift];
              }
              gw.at(o, c, j) += acc_w;
            }
          }
        }
    });
  }

  /// Affine map. x: [batch, features], w: [out, features], b: [out].
  int dense(int x, int w, int b) {
    const Tensor& tx = value(x);
    const Tensor& tw = value(w);
    const Tensor& tb = value(b);
    if (tx.rank() != 2 || tw.rank() != 2 || tb.rank() != 1)
      throw dimension_error("dense: expected ranks 2/2/1");
    const std::size_t batch = tx.dim(0), f = tx.dim(1), o = tw.dim(0);
    if (tw.dim(1) != f)
      throw dimension_error("dense: weight features " + std::to_string(tw.dim(1)) +
                            " != input features " + std::to_string(f));
    if (tb.dim(0) != o) throw dimension_error("dense: bias length != out");

    Tensor out = Tensor::zeros({batch, o});
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t q = 0; q < o; ++q) {
        double acc = tb.at(q);
        for (std::size_t j = 0; j < f; ++j) acc += tx.at(n, j) * tw.at(q, j);
        out.at(n, q) = acc;
      }

    return push(std::move(out), [x, w, b, batch, f, o](Tape& t, const Tensor& g, int) {
      const Tensor& tx = t.value(x);
      const Tensor& tw = t.value(w);
      Tensor& gx = t.grad_ref(x);
      Tensor& gw = t.grad_ref(w);
      Tensor& gb = t.grad_ref(b);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t q = 0; q < o; ++q) {
          const double gy = g.at(n, q);
          gb.at(q) += gy;
          for (std::size_t j = 0; j < f; ++j) {
            gx.at(n, j) += gy * tw.at(q, j);
            gw.at(q, j) += gy * tx.at(n, j);
          }
        }
    });
  }

  /// Mean over the length axis. x: [batch, ch, len] -> [batch, ch].
  int global_avg_pool(int x) {
    const Tensor& tx = value(x);
    if (tx.rank() != 3) throw dimension_error("global_avg_pool: expected rank 3");
    const std::size_t batch = tx.dim(0), ch = tx.dim(1), len = tx.dim(2);
    Tensor out = Tensor::zeros({batch, ch});
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (std::size_t t = 0; t < len; ++t) acc += tx.at(n, c, t);
        out.at(n, c) = acc / static_cast<double>(len);
      }
    return push(std::move(out), [x, batch, ch, len](Tape& t, const Tensor& g, int) {
      Tensor& gx = t.grad_ref(x);
      const double inv = 1.0 / static_cast<double>(len);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t tt = 0; tt < len; ++tt) gx.at(n, c, tt) += g.at(n, c) * inv;
    });
  }

  /// Mean over the batch of -log softmax(logits)[label], with the usual
  /// max-shift so huge logits cannot overflow. Returns a rank-0 scalar node.
  int softmax_cross_entropy(int logits, const std::vector<int>& labels) {
    const Tensor& tl = value(logits);
    if (tl.rank() != 2) throw dimension_error("cross_entropy: logits must be [batch, classes]");
    const std::size_t batch = tl.dim(0), classes = tl.dim(1);
    if (labels.size() != batch)
      throw dimension_error("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                            std::to_string(batch));
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= classes)
        throw class_error("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(classes) + ")");
    }

    Tensor probs = Tensor::zeros({batch, classes});
    double loss = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      double mx = tl.at(n, 0);
      for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, tl.at(n, c));
      double denom = 0.0;
      for (std::size_t c = 0; c < classes; ++c) denom += std::exp(tl.at(n, c) - mx);
      const double log_denom = std::log(denom);
      for (std::size_t c = 0; c < classes; ++c) probs.at(n, c) = std::exp(tl.at(n, c) - mx) / denom;
      loss += -(tl.at(n, static_cast<std::size_t>(labels[n])) - mx - log_denom);
    }
    loss /= static_cast<double>(batch);

    return push(Tensor::scalar(loss),
                [logits, labels, probs = std::move(probs), batch, classes](Tape& t, const Tensor& g, int) {
                  Tensor& gl = t.grad_ref(logits);
                  const double inv = g.data[0] / static_cast<double>(batch);
                  for (std::size_t n = 0; n < batch; ++n)
                    for (std::size_t c = 0; c < classes; ++c) {
                      const double onehot = (static_cast<std::size_t>(labels[n]) == c) ? 1.0 : 0.0;
                      gl.at(n, c) += inv * (probs.at(n, c) - onehot);
                    }
                });
  }

  /// Reverse sweep from a scalar node. Gradients of every node at or below
  /// `node` (leaves included) are available through grad() afterwards.
  void backward(int node) {
    if (node < 0 || static_cast<std::size_t>(node) >= nodes_.size())
      throw contract_error("backward: unknown node id");
    if (nodes_[static_cast<std::size_t>(node)].value.size() != 1)
      throw contract_error("backward: loss must be scalar, got shape " +
                           Tensor::shape_string(nodes_[static_cast<std::size_t>(node)].value.shape));
    for (std::size_t i = 0; i <= static_cast<std::size_t>(node); ++i) {
      nodes_[i].grad = Tensor::zeros(nodes_[i].value.shape);
    }
    nodes_[static_cast<std::size_t>(node)].grad.data[0] = 1.0;
    for (int i = node; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.back) n.back(*this, n.grad, i);
    }
  }

  /// Every ReLU pre-activation of this tape, concatenated in graph order.
  /// The finite-difference checker compares these across its +/- probes to
  /// spot perturbations that land on or cross an activation kink.
  std::vector<double> relu_input_values() const {
    std::vector<double> out;
    for (int id : relu_args_) {
      const Tensor& v = value(id);
      out.insert(out.end(), v.data.begin(), v.data.end());
    }
    return out;
  }

 private:
  using BackwardFn = std::function<void(Tape&, const Tensor& upstream, int self)>;

  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn back;
  };

  Tensor& grad_ref(int id) { return nodes_.at(static_cast<std::size_t>(id)).grad; }

  int push(Tensor value, BackwardFn back) {
    if (!value.all_finite()) throw numeric_error("tape: non-finite value in node " + std::to_string(nodes_.size()));
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back)});
    return static_cast<int>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::vector<int> relu_args_;
};

}  // namespace sag
