#pragma once

// Brute-force reference implementations. Written independently of the
// library code: plain loops, no shared helpers.

#include <cmath>
#include <cstddef>
#include <set>
#include <vector>

#include <Eigen/Dense>

namespace storytag::testing {

/// Power iteration with explicit edge loops. Stops when the max-norm change
/// drops below `tol` or after `max_iter` sweeps.
inline std::vector<double> pagerank_oracle(const Eigen::MatrixXd& w, double d, double tol, int max_iter) {
  const std::size_t n = static_cast<std::size_t>(w.rows());
  if (n == 1) return {1.0};
  std::vector<double> out(n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) out[j] += w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
  std::vector<double> s(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < max_iter; ++it) {
    std::vector<double> next(n, (1.0 - d) / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double wji = w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
        if (out[j] > 0.0 && wji != 0.0) acc += wji / out[j] * s[j];
      }
      next[i] += d * acc;
    }
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(next[i] - s[i]));
    s = next;
    if (change < tol) break;
  }
  return s;
}

/// Slope of the least-squares line through (x, y[x]) for x in p-2..p+2,
/// computed from the normal equations.
inline double ls_slope_oracle(const std::vector<double>& y, std::size_t p) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t x = p - 2; x <= p + 2; ++x) {
    const double xd = static_cast<double>(x);
    sx += xd;
    sy += y[x];
    sxx += xd * xd;
    sxy += xd * y[x];
  }
  return (5.0 * sxy - sx * sy) / (5.0 * sxx - sx * sx);
}

inline std::size_t cutoff_oracle(const std::vector<double>& y, double threshold) {
  if (y.size() < 5) return y.size();
  for (std::size_t p = 2; p + 2 < y.size(); ++p)
    if (std::abs(ls_slope_oracle(y, p)) < threshold) return p;
  return y.size();
}

/// Pooled micro-F1 (percentage) from per-instance sets.
inline double micro_f1_oracle(const std::vector<std::set<int>>& pred, const std::vector<std::set<int>>& gold) {
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (int t : pred[i]) (gold[i].count(t) ? tp : fp)++;
    for (int t : gold[i]) if (!pred[i].count(t)) fn++;
  }
  const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return p + r > 0 ? 100.0 * 2 * p * r / (p + r) : 0.0;
}

inline double sigmoid_oracle(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Step-by-step LSTM over the columns of x (gate order i f g o); H x T.
inline Eigen::MatrixXd lstm_oracle(const Eigen::MatrixXd& x, const Eigen::MatrixXd& wx, const Eigen::MatrixXd& wh,
                                   const Eigen::MatrixXd& b, bool reverse) {
  const Eigen::Index h = wh.cols(), t_len = x.cols();
  Eigen::MatrixXd out(h, t_len);
  std::vector<double> hs(static_cast<std::size_t>(h), 0.0), cs(static_cast<std::size_t>(h), 0.0);
  for (Eigen::Index step = 0; step < t_len; ++step) {
    const Eigen::Index t = reverse ? t_len - 1 - step : step;
    std::vector<double> pre(static_cast<std::size_t>(4 * h));
    for (Eigen::Index r = 0; r < 4 * h; ++r) {
      double acc = b(r, 0);
      for (Eigen::Index k = 0; k < x.rows(); ++k) acc += wx(r, k) * x(k, t);
      for (Eigen::Index k = 0; k < h; ++k) acc += wh(r, k) * hs[static_cast<std::size_t>(k)];
      pre[static_cast<std::size_t>(r)] = acc;
    }
    for (Eigen::Index u = 0; u < h; ++u) {
      const auto s = static_cast<std::size_t>(u);
      const auto hh = static_cast<std::size_t>(h);
      const double i = sigmoid_oracle(pre[s]);
      const double f = sigmoid_oracle(pre[s + hh]);
      const double g = std::tanh(pre[s + 2 * hh]);
      const double o = sigmoid_oracle(pre[s + 3 * hh]);
      cs[s] = f * cs[s] + i * g;
      hs[s] = o * std::tanh(cs[s]);
      out(u, t) = hs[s];
    }
  }
  return out;
}

}  // namespace storytag::testing
