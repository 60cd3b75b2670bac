#pragma once

// Small first-order minimizers over a flat parameter vector. The objective
// returns f(x) and, when `grad` is non-null, writes the gradient. An
// objective that throws sgplvm::Error or returns a non-finite value is
// treated as +inf at that point, so trial steps into bad regions are simply
// rejected.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sgplvm/errors.hpp"
#include "sgplvm/kron.hpp"

namespace sgplvm {

using Objective = std::function<double(const Vector &x, Vector *grad)>;

// Called after every accepted iteration with (iteration, f, |grad|, x);
// returning false stops the run.
using IterationCallback =
    std::function<bool(int iter, double f, double grad_norm, const Vector &x)>;

struct OptimResult {
  Vector x;
  double f = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::string status;
};

struct LbfgsOptions {
  int max_iters = 500;
  int memory = 10;
  double tolerance = 1e-7;  // on relative change of f
  double grad_tolerance = 1e-9;
  double armijo = 1e-4;
  int max_backtracks = 40;
};

struct AdamOptions {
  int max_iters = 1000;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double tolerance = 1e-7;
  int patience = 20;  // iterations of small relative change before stopping
};

namespace detail {

inline double safe_eval(const Objective &f, const Vector &x, Vector *g) {
  try {
    const double v = f(x, g);
    if (!std::isfinite(v) || (g != nullptr && !g->allFinite())) {
      return std::numeric_limits<double>::infinity();
    }
    return v;
  } catch (const Error &) {
    return std::numeric_limits<double>::infinity();
  }
}

inline bool small_change(double f_old, double f_new, double tol) {
  return std::abs(f_old - f_new) <= tol * std::max({std::abs(f_old), std::abs(f_new), 1.0});
}

}  // namespace detail

inline OptimResult lbfgs_minimize(const Objective &objective, const Vector &x0,
                                  const LbfgsOptions &opt,
                                  const IterationCallback &callback = nullptr) {
  OptimResult res;
  res.x = x0;
  Vector g(x0.size());
  res.f = detail::safe_eval(objective, res.x, &g);
  if (!std::isfinite(res.f)) {
    res.status = "objective not finite at the starting point";
    return res;
  }
  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;
  Vector x_new(x0.size()), g_new(x0.size());

  for (int it = 0; it < opt.max_iters; ++it) {
    const double gnorm = g.norm();
    if (gnorm <= opt.grad_tolerance) {
      res.converged = true;
      res.status = "gradient below tolerance";
      return res;
    }
    // Two-loop recursion.
    Vector d = -g;
    std::vector<double> alpha(s_hist.size());
    for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(d);
      d -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) {
      d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    } else {
      d *= std::min(1.0, 1.0 / gnorm);
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double b = rho_hist[k] * y_hist[k].dot(d);
      d += s_hist[k] * (alpha[k] - b);
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      d = -g * std::min(1.0, 1.0 / gnorm);
      slope = g.dot(d);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int bt = 0; bt < opt.max_backtracks; ++bt) {
      x_new = res.x + step * d;
      f_new = detail::safe_eval(objective, x_new, &g_new);
      if (f_new <= res.f + opt.armijo * step * slope && f_new < res.f) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!s_hist.empty()) {
        // Retry once from steepest descent before giving up.
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        continue;
      }
      res.converged = true;
      res.status = "line search could not improve the objective";
      return res;
    }

    const Vector s = x_new - res.x;
    const Vector yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double f_old = res.f;
    res.x = x_new;
    res.f = f_new;
    g = g_new;
    res.iterations = it + 1;
    if (callback && !callback(res.iterations, res.f, g.norm(), res.x)) {
      res.status = "stopped by callback";
      return res;
    }
    if (detail::small_change(f_old, res.f, opt.tolerance)) {
      res.converged = true;
      res.status = "relative change below tolerance";
      return res;
    }
  }
  res.status = "iteration limit reached";
  return res;
}

// Adam with best-iterate tracking: the returned point is the best one
// evaluated, so the result never scores worse than the start.
inline OptimResult adam_minimize(const Objective &objective, const Vector &x0,
                                 const AdamOptions &opt,
                                 const IterationCallback &callback = nullptr) {
  OptimResult res;
  res.x = x0;
  Vector x = x0;
  Vector g(x0.size());
  double f = detail::safe_eval(objective, x, &g);
  res.f = f;
  if (!std::isfinite(f)) {
    res.status = "objective not finite at the starting point";
    return res;
  }
  Vector m = Vector::Zero(x0.size()), v = Vector::Zero(x0.size());
  int quiet = 0;
  for (int it = 1; it <= opt.max_iters; ++it) {
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(opt.beta1, it);
    const double c2 = 1.0 - std::pow(opt.beta2, it);
    const Vector step = opt.learning_rate * (m / c1).array() /
                        ((v / c2).array().sqrt() + opt.epsilon);
    Vector x_next = x - step;
    Vector g_next(x0.size());
    const double f_next = detail::safe_eval(objective, x_next, &g_next);
    res.iterations = it;
    if (!std::isfinite(f_next)) {
      res.status = "objective became non-finite";
      return res;
    }
    quiet = detail::small_change(f, f_next, opt.tolerance) ? quiet + 1 : 0;
    x = std::move(x_next);
    g = std::move(g_next);
    f = f_next;
    if (f < res.f) {
      res.f = f;
      res.x = x;
    }
    if (callback && !callback(it, f, g.norm(), x)) {
      res.status = "stopped by callback";
      return res;
    }
    if (quiet >= opt.patience) {
      res.converged = true;
      res.status = "relative change below tolerance";
      return res;
    }
  }
  res.status = "iteration limit reached";
  return res;
}

}  // namespace sgplvm
