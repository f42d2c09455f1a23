#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

namespace trpca {

struct LbfgsOptions {
  int max_iters = 1000;
  int memory = 10;
  double grad_tol = 1e-9;       // stop when ||grad||_2 <= grad_tol
  double c1 = 1e-4;             // Armijo constant
  double c2 = 0.9;              // curvature constant
  int max_line_search = 50;
  double f_tol = 0.0;           // optional absolute objective-change stop (0 = off)
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;          // gradient tolerance reached
  bool line_search_failed = false;
  bool non_finite = false;         // objective/gradient became non-finite
  std::vector<double> trace;       // objective at each accepted iterate
};

namespace detail {

// Objective and directional derivative along x + a*d.
template <class F>
struct LineEval {
  F& fg;
  const Eigen::VectorXd& x;
  const Eigen::VectorXd& d;
  Eigen::VectorXd xt, gt;
  double operator()(double a, double& dphi) {
    xt = x + a * d;
    const double f = fg(xt, gt);
    dphi = gt.dot(d);
    return f;
  }
};

// Strong-Wolfe line search (bracket + zoom with bisection/interpolation).
// Returns a step satisfying both conditions, or 0 on failure. On success the
// evaluator's xt/gt hold the accepted point and its gradient.
template <class F>
double wolfe_search(LineEval<F>& eval, double f0, double dphi0, double a_init,
                    const LbfgsOptions& opt, double& f_out) {
  const double c1 = opt.c1, c2 = opt.c2;
  double a_prev = 0.0, f_prev = f0, dphi_prev = dphi0;
  double a = a_init;
  const double a_max = 1e10;

  auto zoom = [&](double lo, double f_lo, double dphi_lo, double hi, double f_hi) -> double {
    for (int i = 0; i < opt.max_line_search; ++i) {
      // Quadratic interpolation using phi(lo), phi'(lo), phi(hi); fall back to
      // bisection when the model step is not sensible.
      double a_j;
      const double denom = 2.0 * (f_hi - f_lo - dphi_lo * (hi - lo));
      if (denom != 0.0 && std::isfinite(f_hi)) {
        a_j = lo - dphi_lo * (hi - lo) * (hi - lo) / denom;
      } else {
        a_j = 0.5 * (lo + hi);
      }
      const double lo_b = std::min(lo, hi), hi_b = std::max(lo, hi);
      const double span = hi_b - lo_b;
      if (!(a_j > lo_b + 0.1 * span && a_j < hi_b - 0.1 * span)) a_j = 0.5 * (lo + hi);

      double dphi_j;
      const double f_j = eval(a_j, dphi_j);
      if (!std::isfinite(f_j) || f_j > f0 + c1 * a_j * dphi0 || f_j >= f_lo) {
        hi = a_j;
        f_hi = f_j;
      } else {
        if (std::abs(dphi_j) <= -c2 * dphi0) {
          f_out = f_j;
          return a_j;
        }
        if (dphi_j * (hi - lo) >= 0.0) {
          hi = lo;
          f_hi = f_lo;
        }
        lo = a_j;
        f_lo = f_j;
        dphi_lo = dphi_j;
      }
      if (std::abs(hi - lo) <= 1e-16 * std::max(1.0, std::abs(lo))) break;
    }
    // Accept the best sufficient-decrease point found even without curvature.
    double dphi_lo2;
    const double f_lo2 = eval(lo, dphi_lo2);
    if (lo > 0.0 && std::isfinite(f_lo2) && f_lo2 <= f0 + c1 * lo * dphi0) {
      f_out = f_lo2;
      return lo;
    }
    return 0.0;
  };

  for (int i = 0; i < opt.max_line_search; ++i) {
    double dphi;
    const double f = eval(a, dphi);
    if (!std::isfinite(f)) {
      // Too far; shrink toward the last good point.
      a = 0.5 * (a_prev + a);
      continue;
    }
    if (f > f0 + c1 * a * dphi0 || (i > 0 && f >= f_prev)) {
      return zoom(a_prev, f_prev, dphi_prev, a, f);
    }
    if (std::abs(dphi) <= -c2 * dphi0) {
      f_out = f;
      return a;
    }
    if (dphi >= 0.0) {
      return zoom(a, f, dphi, a_prev, f_prev);
    }
    a_prev = a;
    f_prev = f;
    dphi_prev = dphi;
    a = std::min(2.5 * a, a_max);
  }
  return 0.0;
}

}  // namespace detail

/// Limited-memory BFGS with a strong-Wolfe line search. `fg` evaluates the
/// objective and writes the gradient: double fg(const VectorXd& x, VectorXd& g).
template <class F>
LbfgsResult lbfgs_minimize(F&& fg, Eigen::VectorXd x0, const LbfgsOptions& opt = {}) {
  using Eigen::VectorXd;
  LbfgsResult res;
  res.x = std::move(x0);

  VectorXd g(res.x.size());
  double f = fg(res.x, g);
  if (!std::isfinite(f) || !g.allFinite()) {
    res.non_finite = true;
    res.f = f;
    res.grad_norm = std::numeric_limits<double>::quiet_NaN();
    return res;
  }
  res.trace.push_back(f);

  std::deque<VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  for (int iter = 0; iter < opt.max_iters; ++iter) {
    res.grad_norm = g.norm();
    if (res.grad_norm <= opt.grad_tol) {
      res.converged = true;
      break;
    }

    // Two-loop recursion.
    VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    VectorXd d = -q;

    double dphi0 = g.dot(d);
    if (dphi0 >= 0.0) {
      // Not a descent direction (stale curvature); restart from steepest descent.
      d = -g;
      dphi0 = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    const double a_init =
        s_hist.empty() ? std::min(1.0, 1.0 / std::max(1e-300, g.lpNorm<1>())) : 1.0;
    detail::LineEval<F> eval{fg, res.x, d, VectorXd(), VectorXd()};
    double f_new = f;
    const double step = detail::wolfe_search(eval, f, dphi0, a_init, opt, f_new);
    if (step == 0.0) {
      res.line_search_failed = true;
      break;
    }

    VectorXd x_new = res.x + step * d;
    // eval.gt corresponds to the last evaluation inside the search, which is
    // the accepted point for every successful return path.
    VectorXd g_new = eval.gt;
    if (!std::isfinite(f_new) || !g_new.allFinite()) {
      res.non_finite = true;
      break;
    }

    VectorXd s = x_new - res.x;
    VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    const double f_prev = f;
    res.x = std::move(x_new);
    g = std::move(g_new);
    f = f_new;
    res.trace.push_back(f);
    res.iterations = iter + 1;

    if (opt.f_tol > 0.0 && std::abs(f_prev - f) <= opt.f_tol) break;
  }

  res.f = f;
  res.grad_norm = g.norm();
  if (res.grad_norm <= opt.grad_tol) res.converged = true;
  return res;
}

}  // namespace trpca
