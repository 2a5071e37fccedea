#pragma once

// Central finite-difference checks against tape gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "storytag/autodiff.hpp"

namespace storytag::testing {

struct GradReport {
  double max_rel_error = 0.0;
  std::string worst;
};

/// `loss` records a scalar on the given tape. Every tensor in `params` is
/// perturbed entry by entry with step `h`.
inline GradReport check_gradients(const std::function<nn::Var(nn::Tape&)>& loss,
                                  const std::vector<std::pair<std::string, nn::Parameter*>>& params,
                                  double h = 1e-5) {
  nn::Tape tape(true);
  tape.backward(loss(tape));
  const auto& grads = tape.gradients();
  GradReport report;
  for (const auto& [name, p] : params) {
    const nn::Matrix analytic = grads.dense_of(*p);
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double saved = p->value(i);
      p->value(i) = saved + h;
      nn::Tape plus(false);
      const double fp = loss(plus).value()(0, 0);
      p->value(i) = saved - h;
      nn::Tape minus(false);
      const double fm = loss(minus).value()(0, 0);
      p->value(i) = saved;
      const double numeric = (fp - fm) / (2 * h);
      const double a = analytic(i);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                       std::to_string(numeric);
      }
    }
  }
  return report;
}

/// Scalar sum(x .* w) built from tape ops.
inline nn::Var weighted_total(nn::Var x, const nn::Matrix& w) {
  nn::Tape& tape = *x.node()->tape;
  nn::Var prod = nn::mul(x, tape.constant(w));
  nn::Var rows = nn::matmul(tape.constant(nn::Matrix::Ones(1, w.rows())), prod);
  return nn::matmul(rows, tape.constant(nn::Matrix::Ones(w.cols(), 1)));
}

}  // namespace storytag::testing
