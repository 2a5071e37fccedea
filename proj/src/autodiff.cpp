#include "storytag/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace storytag::nn {

const Matrix& Var::value() const { return node_->value; }

Matrix Gradients::dense_of(const Parameter& p) const {
  Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
  if (auto it = dense.find(&p); it != dense.end()) g += it->second;
  if (auto it = sparse_columns.find(&p); it != sparse_columns.end()) {
    for (const auto& [col, v] : it->second) g.col(col) += v;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::make(Matrix value, std::vector<Node*> inputs, std::function<void(Node&)> backward) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.tape = this;
  if (grad_enabled_) {
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [](Node* in) { return in->requires_grad; });
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return Var(&n);
}

void Tape::accumulate(Node* node, const Matrix& grad) {
  if (!node->requires_grad) return;
  if (node->grad.size() == 0) {
    node->grad = grad;
  } else {
    node->grad += grad;
  }
}

Var Tape::constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.tape = this;
  return Var(&n);
}

Var Tape::param(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(it->second);
  Node& n = nodes_.emplace_back();
  n.value = p.value;
  n.tape = this;
  n.requires_grad = grad_enabled_ && p.trainable;
  param_nodes_.emplace(&p, &n);
  if (n.requires_grad) param_links_.emplace_back(&n, &p);
  return Var(&n);
}

Var Tape::embed(const Parameter& table, std::span<const int> ids) {
  Matrix out(table.value.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || ids[t] >= table.value.cols()) {
      throw std::out_of_range("token id " + std::to_string(ids[t]) + " outside embedding table of " +
                              std::to_string(table.value.cols()) + " rows");
    }
    out.col(static_cast<Eigen::Index>(t)) = table.value.col(ids[t]);
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(out);
  n.tape = this;
  n.requires_grad = grad_enabled_ && table.trainable;
  if (n.requires_grad) {
    std::vector<int> copy(ids.begin(), ids.end());
    const Parameter* tp = &table;
    n.backward = [this, tp, copy = std::move(copy)](Node& self) {
      auto& cols = gradients_.sparse_columns[tp];
      for (std::size_t t = 0; t < copy.size(); ++t) {
        auto [it, fresh] = cols.try_emplace(copy[t], self.grad.col(static_cast<Eigen::Index>(t)));
        if (!fresh) it->second += self.grad.col(static_cast<Eigen::Index>(t));
      }
    };
  }
  return Var(&n);
}

void Tape::backward(Var root) {
  if (!grad_enabled_) throw std::logic_error("backward on a tape without gradients");
  if (root.rows() != 1 || root.cols() != 1) throw std::invalid_argument("backward needs a scalar root");
  if (!root.node()->requires_grad) return;
  root.node()->grad = Matrix::Ones(1, 1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->requires_grad && it->backward && it->grad.size() > 0) it->backward(*it);
  }
  for (auto [node, p] : param_links_) {
    if (node->grad.size() == 0) continue;
    auto [slot, fresh] = gradients_.dense.try_emplace(p, node->grad);
    if (!fresh) slot->second += node->grad;
  }
}

// ---------------------------------------------------------------------------
// Elementwise and linear algebra

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul shape mismatch");
  Node* na = a.node();
  Node* nb = b.node();
  return na->tape->make(a.value() * b.value(), {na, nb}, [na, nb](Node& self) {
    if (na->requires_grad) Tape::accumulate(na, self.grad * nb->value.transpose());
    if (nb->requires_grad) Tape::accumulate(nb, na->value.transpose() * self.grad);
  });
}

Var add(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("add shape mismatch");
  Node* na = a.node();
  Node* nb = b.node();
  return na->tape->make(a.value() + b.value(), {na, nb}, [na, nb](Node& self) {
    Tape::accumulate(na, self.grad);
    Tape::accumulate(nb, self.grad);
  });
}

Var add_bias(Var m, Var bias) {
  if (bias.cols() != 1 || bias.rows() != m.rows()) throw std::invalid_argument("add_bias shape mismatch");
  Node* nm = m.node();
  Node* nb = bias.node();
  Matrix out = m.value();
  out.colwise() += bias.value().col(0);
  return nm->tape->make(std::move(out), {nm, nb}, [nm, nb](Node& self) {
    Tape::accumulate(nm, self.grad);
    if (nb->requires_grad) Tape::accumulate(nb, self.grad.rowwise().sum());
  });
}

Var mul(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("mul shape mismatch");
  Node* na = a.node();
  Node* nb = b.node();
  return na->tape->make(a.value().cwiseProduct(b.value()), {na, nb}, [na, nb](Node& self) {
    if (na->requires_grad) Tape::accumulate(na, self.grad.cwiseProduct(nb->value));
    if (nb->requires_grad) Tape::accumulate(nb, self.grad.cwiseProduct(na->value));
  });
}

Var one_minus(Var a) {
  Node* na = a.node();
  return na->tape->make((1.0 - a.value().array()).matrix(), {na},
                        [na](Node& self) { Tape::accumulate(na, -self.grad); });
}

Var tanh(Var a) {
  Node* na = a.node();
  Matrix out = a.value().array().tanh().matrix();
  return na->tape->make(std::move(out), {na}, [na](Node& self) {
    Tape::accumulate(na, (self.grad.array() * (1.0 - self.value.array().square())).matrix());
  });
}

Var sigmoid(Var a) {
  Node* na = a.node();
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return na->tape->make(std::move(out), {na}, [na](Node& self) {
    Tape::accumulate(na, (self.grad.array() * self.value.array() * (1.0 - self.value.array())).matrix());
  });
}

Var scale(Var a, double factor) {
  Node* na = a.node();
  return na->tape->make(a.value() * factor, {na},
                        [na, factor](Node& self) { Tape::accumulate(na, self.grad * factor); });
}

// ---------------------------------------------------------------------------
// Shape

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  std::vector<Node*> inputs;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows column mismatch");
    rows += p.rows();
    inputs.push_back(p.node());
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return inputs[0]->tape->make(std::move(out), inputs, [inputs](Node& self) {
    Eigen::Index r = 0;
    for (Node* in : inputs) {
      const auto h = in->value.rows();
      if (in->requires_grad) Tape::accumulate(in, self.grad.middleRows(r, h));
      r += h;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols of nothing");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  std::vector<Node*> inputs;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols row mismatch");
    cols += p.cols();
    inputs.push_back(p.node());
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return inputs[0]->tape->make(std::move(out), inputs, [inputs](Node& self) {
    Eigen::Index c = 0;
    for (Node* in : inputs) {
      const auto w = in->value.cols();
      if (in->requires_grad) Tape::accumulate(in, self.grad.middleCols(c, w));
      c += w;
    }
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols out of range");
  Node* na = a.node();
  return na->tape->make(a.value().middleCols(start, count), {na}, [na, start, count](Node& self) {
    Matrix g = Matrix::Zero(na->value.rows(), na->value.cols());
    g.middleCols(start, count) = self.grad;
    Tape::accumulate(na, g);
  });
}

// ---------------------------------------------------------------------------
// Softmax family

namespace {

void softmax_inplace(Eigen::Ref<Eigen::VectorXd> v) {
  const double m = v.maxCoeff();
  v = (v.array() - m).exp().matrix();
  v /= v.sum();
}

std::vector<Eigen::Index> segment_offsets(std::span<const int> lengths, Eigen::Index total) {
  std::vector<Eigen::Index> offsets;
  offsets.reserve(lengths.size());
  Eigen::Index o = 0;
  for (int l : lengths) {
    if (l <= 0) throw std::invalid_argument("segment lengths must be positive");
    offsets.push_back(o);
    o += l;
  }
  if (o != total) throw std::invalid_argument("segment lengths do not cover the input");
  return offsets;
}

}  // namespace

Var softmax_cols(Var a) {
  Node* na = a.node();
  Matrix out = a.value();
  for (Eigen::Index c = 0; c < out.cols(); ++c) softmax_inplace(out.col(c));
  return na->tape->make(std::move(out), {na}, [na](Node& self) {
    Matrix g(self.value.rows(), self.value.cols());
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
      const double dot = self.grad.col(c).dot(self.value.col(c));
      g.col(c) = self.value.col(c).cwiseProduct((self.grad.col(c).array() - dot).matrix());
    }
    Tape::accumulate(na, g);
  });
}

Var segment_softmax(Var scores, std::span<const int> lengths) {
  if (scores.rows() != 1) throw std::invalid_argument("segment_softmax expects a 1 x N row");
  auto offsets = segment_offsets(lengths, scores.cols());
  std::vector<int> lens(lengths.begin(), lengths.end());
  Node* ns = scores.node();
  Matrix out = scores.value();
  for (std::size_t s = 0; s < lens.size(); ++s) {
    Eigen::VectorXd seg = out.row(0).segment(offsets[s], lens[s]).transpose();
    softmax_inplace(seg);
    out.row(0).segment(offsets[s], lens[s]) = seg.transpose();
  }
  return ns->tape->make(std::move(out), {ns}, [ns, offsets, lens](Node& self) {
    Matrix g(1, self.value.cols());
    for (std::size_t s = 0; s < lens.size(); ++s) {
      auto y = self.value.row(0).segment(offsets[s], lens[s]);
      auto dy = self.grad.row(0).segment(offsets[s], lens[s]);
      const double dot = y.dot(dy);
      g.row(0).segment(offsets[s], lens[s]) = y.cwiseProduct((dy.array() - dot).matrix());
    }
    Tape::accumulate(ns, g);
  });
}

Var segment_weighted_sum(Var values, Var weights, std::span<const int> lengths) {
  if (weights.rows() != 1 || weights.cols() != values.cols()) {
    throw std::invalid_argument("segment_weighted_sum shape mismatch");
  }
  auto offsets = segment_offsets(lengths, values.cols());
  std::vector<int> lens(lengths.begin(), lengths.end());
  Node* nv = values.node();
  Node* nw = weights.node();
  Matrix out(values.rows(), static_cast<Eigen::Index>(lens.size()));
  for (std::size_t s = 0; s < lens.size(); ++s) {
    out.col(static_cast<Eigen::Index>(s)) = values.value().middleCols(offsets[s], lens[s]) *
                                            weights.value().row(0).segment(offsets[s], lens[s]).transpose();
  }
  return nv->tape->make(std::move(out), {nv, nw}, [nv, nw, offsets, lens](Node& self) {
    if (nv->requires_grad) {
      Matrix g(nv->value.rows(), nv->value.cols());
      for (std::size_t s = 0; s < lens.size(); ++s) {
        g.middleCols(offsets[s], lens[s]) =
            self.grad.col(static_cast<Eigen::Index>(s)) * nw->value.row(0).segment(offsets[s], lens[s]);
      }
      Tape::accumulate(nv, g);
    }
    if (nw->requires_grad) {
      Matrix g(1, nw->value.cols());
      for (std::size_t s = 0; s < lens.size(); ++s) {
        g.row(0).segment(offsets[s], lens[s]) =
            self.grad.col(static_cast<Eigen::Index>(s)).transpose() * nv->value.middleCols(offsets[s], lens[s]);
      }
      Tape::accumulate(nw, g);
    }
  });
}

Var dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Matrix mask(a.rows(), a.cols());
  const double keep = 1.0 - rate;
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform(rng) < keep ? 1.0 / keep : 0.0;
  Node* na = a.node();
  Matrix out = a.value().cwiseProduct(mask);
  return na->tape->make(std::move(out), {na}, [na, mask = std::move(mask)](Node& self) {
    Tape::accumulate(na, self.grad.cwiseProduct(mask));
  });
}

// ---------------------------------------------------------------------------
// Bidirectional LSTM

namespace {

struct DirectionCache {
  Matrix gates;   // 4H x N, activated i f g o
  Matrix cells;   // H x N
  Matrix hidden;  // H x N
};

struct Packing {
  std::vector<int> lengths;
  std::vector<Eigen::Index> offsets;
  int max_len = 0;
  Eigen::Index position(std::size_t s, int t, bool reverse) const {
    return reverse ? offsets[s] + lengths[s] - 1 - t : offsets[s] + t;
  }
};

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

DirectionCache run_direction(const Matrix& inputs, const Packing& pack, const Matrix& wx, const Matrix& wh,
                             const Matrix& b, bool reverse) {
  const Eigen::Index hidden = wh.cols();
  const Eigen::Index n = inputs.cols();
  DirectionCache cache{Matrix(4 * hidden, n), Matrix(hidden, n), Matrix(hidden, n)};
  Matrix pre = wx * inputs;
  pre.colwise() += b.col(0);

  std::vector<std::size_t> active;
  for (int t = 0; t < pack.max_len; ++t) {
    active.clear();
    for (std::size_t s = 0; s < pack.lengths.size(); ++s) {
      if (pack.lengths[s] > t) active.push_back(s);
    }
    const auto a = static_cast<Eigen::Index>(active.size());
    Matrix h_prev = Matrix::Zero(hidden, a);
    Matrix c_prev = Matrix::Zero(hidden, a);
    if (t > 0) {
      for (Eigen::Index k = 0; k < a; ++k) {
        const auto p = pack.position(active[static_cast<std::size_t>(k)], t - 1, reverse);
        h_prev.col(k) = cache.hidden.col(p);
        c_prev.col(k) = cache.cells.col(p);
      }
    }
    Matrix z = wh * h_prev;
    for (Eigen::Index k = 0; k < a; ++k) {
      const auto p = pack.position(active[static_cast<std::size_t>(k)], t, reverse);
      z.col(k) += pre.col(p);
      for (Eigen::Index r = 0; r < hidden; ++r) {
        const double ig = sigm(z(r, k));
        const double fg = sigm(z(hidden + r, k));
        const double gg = std::tanh(z(2 * hidden + r, k));
        const double og = sigm(z(3 * hidden + r, k));
        const double c = fg * c_prev(r, k) + ig * gg;
        cache.gates(r, p) = ig;
        cache.gates(hidden + r, p) = fg;
        cache.gates(2 * hidden + r, p) = gg;
        cache.gates(3 * hidden + r, p) = og;
        cache.cells(r, p) = c;
        cache.hidden(r, p) = og * std::tanh(c);
      }
    }
  }
  return cache;
}

struct DirectionGrads {
  Matrix d_inputs, d_wx, d_wh, d_b;
};

DirectionGrads backprop_direction(const Matrix& inputs, const Packing& pack, const Matrix& wx, const Matrix& wh,
                                  const DirectionCache& cache, const Matrix& d_hidden, bool reverse) {
  const Eigen::Index hidden = wh.cols();
  const Eigen::Index n = inputs.cols();
  const auto seqs = static_cast<Eigen::Index>(pack.lengths.size());
  Matrix d_pre = Matrix::Zero(4 * hidden, n);
  Matrix d_wh = Matrix::Zero(wh.rows(), wh.cols());
  Matrix dh_next = Matrix::Zero(hidden, seqs);
  Matrix dc_next = Matrix::Zero(hidden, seqs);

  std::vector<std::size_t> active;
  for (int t = pack.max_len - 1; t >= 0; --t) {
    active.clear();
    for (std::size_t s = 0; s < pack.lengths.size(); ++s) {
      if (pack.lengths[s] > t) active.push_back(s);
    }
    const auto a = static_cast<Eigen::Index>(active.size());
    Matrix d_gates(4 * hidden, a);
    Matrix h_prev = Matrix::Zero(hidden, a);
    for (Eigen::Index k = 0; k < a; ++k) {
      const auto s = active[static_cast<std::size_t>(k)];
      const auto p = pack.position(s, t, reverse);
      const auto sk = static_cast<Eigen::Index>(s);
      const bool has_prev = t > 0;
      const Eigen::Index pp = has_prev ? pack.position(s, t - 1, reverse) : 0;
      if (has_prev) h_prev.col(k) = cache.hidden.col(pp);
      for (Eigen::Index r = 0; r < hidden; ++r) {
        const double ig = cache.gates(r, p);
        const double fg = cache.gates(hidden + r, p);
        const double gg = cache.gates(2 * hidden + r, p);
        const double og = cache.gates(3 * hidden + r, p);
        const double tc = std::tanh(cache.cells(r, p));
        const double cp = has_prev ? cache.cells(r, pp) : 0.0;
        const double dh = d_hidden(r, p) + dh_next(r, sk);
        const double dc = dc_next(r, sk) + dh * og * (1.0 - tc * tc);
        d_gates(r, k) = dc * gg * ig * (1.0 - ig);
        d_gates(hidden + r, k) = dc * cp * fg * (1.0 - fg);
        d_gates(2 * hidden + r, k) = dc * ig * (1.0 - gg * gg);
        d_gates(3 * hidden + r, k) = dh * tc * og * (1.0 - og);
        dc_next(r, sk) = dc * fg;
      }
      d_pre.col(p) = d_gates.col(k);
    }
    d_wh.noalias() += d_gates * h_prev.transpose();
    const Matrix dh_prev = wh.transpose() * d_gates;
    for (Eigen::Index k = 0; k < a; ++k) dh_next.col(static_cast<Eigen::Index>(active[static_cast<std::size_t>(k)])) = dh_prev.col(k);
  }
  return {wx.transpose() * d_pre, d_pre * inputs.transpose(), std::move(d_wh), d_pre.rowwise().sum()};
}

void check_lstm(const LstmParams& p, Eigen::Index input_rows) {
  const auto h = p.recurrent_weights->value.cols();
  if (p.recurrent_weights->value.rows() != 4 * h || p.input_weights->value.rows() != 4 * h ||
      p.input_weights->value.cols() != input_rows || p.bias->value.rows() != 4 * h || p.bias->value.cols() != 1) {
    throw std::invalid_argument("LSTM parameter shapes do not match the input");
  }
}

}  // namespace

Var bilstm(Var inputs, std::span<const int> lengths, const LstmParams& forward, const LstmParams& backward) {
  check_lstm(forward, inputs.rows());
  check_lstm(backward, inputs.rows());
  Tape& tape = *inputs.node()->tape;
  Packing pack;
  pack.lengths.assign(lengths.begin(), lengths.end());
  pack.offsets = segment_offsets(lengths, inputs.cols());
  for (int l : pack.lengths) pack.max_len = std::max(pack.max_len, l);

  Var fwx = tape.param(*forward.input_weights), fwh = tape.param(*forward.recurrent_weights),
      fb = tape.param(*forward.bias);
  Var bwx = tape.param(*backward.input_weights), bwh = tape.param(*backward.recurrent_weights),
      bb = tape.param(*backward.bias);

  auto fcache = std::make_shared<DirectionCache>(
      run_direction(inputs.value(), pack, fwx.value(), fwh.value(), fb.value(), false));
  auto bcache = std::make_shared<DirectionCache>(
      run_direction(inputs.value(), pack, bwx.value(), bwh.value(), bb.value(), true));
  const Eigen::Index h = fwh.cols();
  Matrix out(2 * h, inputs.cols());
  out.topRows(h) = fcache->hidden;
  out.bottomRows(h) = bcache->hidden;

  Node* nx = inputs.node();
  std::vector<Node*> ins = {nx, fwx.node(), fwh.node(), fb.node(), bwx.node(), bwh.node(), bb.node()};
  return tape.make(std::move(out), ins, [ins, pack, fcache, bcache, h](Node& self) {
    Node* nx = ins[0];
    const Matrix df = self.grad.topRows(h);
    const Matrix db = self.grad.bottomRows(h);
    auto gf = backprop_direction(nx->value, pack, ins[1]->value, ins[2]->value, *fcache, df, false);
    auto gb = backprop_direction(nx->value, pack, ins[4]->value, ins[5]->value, *bcache, db, true);
    if (nx->requires_grad) Tape::accumulate(nx, gf.d_inputs + gb.d_inputs);
    Tape::accumulate(ins[1], gf.d_wx);
    Tape::accumulate(ins[2], gf.d_wh);
    Tape::accumulate(ins[3], gf.d_b);
    Tape::accumulate(ins[4], gb.d_wx);
    Tape::accumulate(ins[5], gb.d_wh);
    Tape::accumulate(ins[6], gb.d_b);
  });
}

// ---------------------------------------------------------------------------
// Batch norm

Var batch_norm(Var a, const BatchNormParams& params, bool training) {
  Tape& tape = *a.node()->tape;
  Var gamma = tape.param(*params.gamma);
  Var beta = tape.param(*params.beta);
  const Eigen::Index rows = a.rows();
  const Eigen::Index n = a.cols();
  if (gamma.rows() != rows || beta.rows() != rows) throw std::invalid_argument("batch_norm width mismatch");
  if (n == 0) throw std::invalid_argument("batch_norm on an empty batch");

  Vector mean, var;
  if (training) {
    mean = a.value().rowwise().mean();
    var = (a.value().colwise() - mean).array().square().rowwise().mean().matrix();
    BatchStatistics stats{params.running_mean, params.running_var, mean,
                          n > 1 ? Vector(var * (static_cast<double>(n) / static_cast<double>(n - 1))) : var};
    tape.batch_statistics().push_back(std::move(stats));
  } else {
    mean = params.running_mean->value.col(0);
    var = params.running_var->value.col(0);
  }
  const Vector inv_std = (var.array() + params.eps).rsqrt().matrix();
  Matrix xhat = (a.value().colwise() - mean).array().colwise() * inv_std.array();
  Matrix out = (xhat.array().colwise() * gamma.value().col(0).array()).matrix();
  out.colwise() += beta.value().col(0);

  Node* na = a.node();
  Node* ng = gamma.node();
  Node* nb = beta.node();
  return tape.make(std::move(out), {na, ng, nb}, [na, ng, nb, xhat = std::move(xhat), inv_std, training](Node& self) {
    const Eigen::Index n = self.grad.cols();
    if (ng->requires_grad) Tape::accumulate(ng, self.grad.cwiseProduct(xhat).rowwise().sum());
    if (nb->requires_grad) Tape::accumulate(nb, self.grad.rowwise().sum());
    if (!na->requires_grad) return;
    const Matrix dxhat = (self.grad.array().colwise() * ng->value.col(0).array()).matrix();
    if (!training) {
      Tape::accumulate(na, (dxhat.array().colwise() * inv_std.array()).matrix());
      return;
    }
    const Vector sum_dxhat = dxhat.rowwise().sum();
    const Vector sum_dxhat_xhat = dxhat.cwiseProduct(xhat).rowwise().sum();
    Matrix dx = (static_cast<double>(n) * dxhat).colwise() - sum_dxhat;
    dx -= (xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
    dx = (dx.array().colwise() * (inv_std.array() / static_cast<double>(n))).matrix();
    Tape::accumulate(na, dx);
  });
}

// ---------------------------------------------------------------------------
// Loss

Var kl_divergence(Var predicted, const Matrix& target) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols()) {
    throw std::invalid_argument("kl_divergence shape mismatch");
  }
  constexpr double kFloor = 1e-12;
  double loss = 0.0;
  const Matrix& p = predicted.value();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double t = target.data()[i];
    if (t > 0.0) loss += t * (std::log(t) - std::log(std::max(p.data()[i], kFloor)));
  }
  Node* np = predicted.node();
  Matrix out(1, 1);
  out(0, 0) = loss;
  return np->tape->make(std::move(out), {np}, [np, target](Node& self) {
    Matrix g = Matrix::Zero(target.rows(), target.cols());
    const double up = self.grad(0, 0);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double t = target.data()[i];
      const double q = np->value.data()[i];
      if (t > 0.0 && q >= kFloor) g.data()[i] = -up * t / q;
    }
    Tape::accumulate(np, g);
  });
}

}  // namespace storytag::nn
