#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <vector>

#include "trpca/core.hpp"
#include "trpca/lbfgs.hpp"
#include "trpca/rng.hpp"

namespace trpca {

/// The K factor matrices (d_k x R) of the explicit low-rank parameterization.
using FactorSet = std::vector<Matrix>;

struct SolverConfig {
  Index rank_bound = 1;   // R
  double lambda_x = 1e-5;
  double lambda_s = 1e-3;
  int order = 3;          // K
  int max_iters = 1000;
  int memory = 10;
  double grad_tol = 1e-9;
  double init_scale = 0.0;  // 0 = (||Z||_F / R)^{1/K} / sqrt(d_k) per mode
  bool symmetric = false;
  std::uint64_t seed = 0;
  double zero_tol = 1e-6;       // near-zero column threshold, relative to mean column norm
  double cert_grad_tol = 1e-6;  // stationarity threshold for the optimality certificate

  void validate() const {
    require(rank_bound >= 1, "SolverConfig: rank_bound must be >= 1");
    require(order >= 2, "SolverConfig: order must be >= 2");
    require(lambda_x >= 0.0, "SolverConfig: lambda_x must be nonnegative");
    require(lambda_s > 0.0,
            "SolverConfig: lambda_s must be positive (at zero the sparse part absorbs "
            "everything and the decomposition is unidentifiable)");
    require(max_iters >= 1 && memory >= 1, "SolverConfig: iteration limits must be >= 1");
    require(grad_tol > 0.0 && zero_tol > 0.0, "SolverConfig: tolerances must be positive");
  }
};

struct SolveReport {
  KruskalTensor factors;   // balanced
  DenseTensor lowrank;     // dense reconstruction of `factors`
  DenseTensor sparse;      // shrink(Z - lowrank, lambda_s)
  std::vector<double> objective_trace;
  double final_objective = 0.0;
  double final_grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;   // non-finite objective encountered
  bool global_cert = false;
  double wall_time_seconds = 0.0;
  int threads = 1;         // kernels are single-threaded and deterministic
};

// ---------------------------------------------------------------------------
// Shrinkage and the smoothed data-fit term
// ---------------------------------------------------------------------------

inline double shrink_scalar(double x, double lambda) {
  const double m = std::abs(x) - lambda;
  return m > 0.0 ? (x > 0.0 ? m : -m) : 0.0;
}

inline DenseTensor shrink(const DenseTensor& t, double lambda) {
  require(lambda >= 0.0, "shrink: lambda must be nonnegative");
  DenseTensor out = t;
  for (double& v : out.data) v = shrink_scalar(v, lambda);
  return out;
}

inline Matrix shrink(const Matrix& m, double lambda) {
  require(lambda >= 0.0, "shrink: lambda must be nonnegative");
  return m.unaryExpr([lambda](double v) { return shrink_scalar(v, lambda); });
}

struct PhiResult {
  double value = 0.0;
  DenseTensor s_star;  // argmin_S 1/2 ||x + S - z||_F^2 + lambda_s ||S||_sum
};

/// Partial minimization over the sparse component: the minimizer is
/// shrink(z - x, lambda_s) and the value is the elementwise Huber sum of z - x
/// (t^2/2 inside the dead zone, lambda_s |t| - lambda_s^2/2 outside).
inline PhiResult phi_eval(const DenseTensor& x, const DenseTensor& z, double lambda_s) {
  require(x.same_dims(z), "phi_eval: dims mismatch");
  PhiResult res;
  res.s_star = DenseTensor(x.dims);
  double v = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double t = z.data[i] - x.data[i];
    const double a = std::abs(t);
    if (a <= lambda_s) {
      v += 0.5 * t * t;
    } else {
      v += lambda_s * a - 0.5 * lambda_s * lambda_s;
      res.s_star.data[i] = t > 0.0 ? (a - lambda_s) : -(a - lambda_s);
    }
  }
  res.value = v;
  return res;
}

namespace detail {

// Huber value of (z - x) and its derivative wrt x, in one pass.
// d phi / d x = clip(x - z, -lambda_s, lambda_s).
inline double phi_value_grad(const DenseTensor& x, const DenseTensor& z, double lambda_s,
                             DenseTensor& grad_out) {
  double v = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double t = x.data[i] - z.data[i];
    const double a = std::abs(t);
    if (a <= lambda_s) {
      v += 0.5 * t * t;
      grad_out.data[i] = t;
    } else {
      v += lambda_s * a - 0.5 * lambda_s * lambda_s;
      grad_out.data[i] = t > 0.0 ? lambda_s : -lambda_s;
    }
  }
  return v;
}

inline DenseTensor dense_from_factors(const FactorSet& a, const std::vector<Index>& dims) {
  KruskalTensor k;
  k.factors = a;
  DenseTensor d = dense_from_kruskal(k);
  require(d.dims == dims, "dense_from_factors: factor shapes inconsistent with tensor");
  return d;
}

}  // namespace detail

/// Objective of the factorized program:
///   (lambda_x / K) sum_{r,k} ||a_r^{(k)}||^K + phi(X(a)).
inline double objective_eval(const FactorSet& a, const DenseTensor& z, const SolverConfig& cfg) {
  require(static_cast<int>(a.size()) == cfg.order, "objective_eval: factor count != order");
  const DenseTensor x = detail::dense_from_factors(a, z.dims);
  double reg = 0.0;
  for (const Matrix& f : a)
    for (Index r = 0; r < f.cols(); ++r) reg += std::pow(f.col(r).norm(), cfg.order);
  return (cfg.lambda_x / cfg.order) * reg + phi_eval(x, z, cfg.lambda_s).value;
}

/// Analytic gradient of the factorized objective:
///   grad_k = lambda_x A_k diag(||a_r||^{K-2}) + G_(k) C_k,
/// where G = X + S* - Z (the sparse minimizer held fixed) and C_k is the
/// Khatri-Rao chain of the other factors matching the unfolding column order.
inline FactorSet gradient(const FactorSet& a, const DenseTensor& z, const SolverConfig& cfg) {
  require(static_cast<int>(a.size()) == cfg.order, "gradient: factor count != order");
  const DenseTensor x = detail::dense_from_factors(a, z.dims);
  DenseTensor g(z.dims);
  detail::phi_value_grad(x, z, cfg.lambda_s, g);

  FactorSet grads(a.size());
  for (int k = 1; k <= cfg.order; ++k) {
    const Matrix& fk = a[static_cast<std::size_t>(k - 1)];
    const Matrix chain = khatri_rao_skip(a, k);
    Matrix gk = matricize(g, k) * chain;
    for (Index r = 0; r < fk.cols(); ++r)
      gk.col(r) += cfg.lambda_x * std::pow(fk.col(r).norm(), cfg.order - 2) * fk.col(r);
    grads[static_cast<std::size_t>(k - 1)] = std::move(gk);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Factor balancing and the ex-post global-optimality certificate
// ---------------------------------------------------------------------------

/// Rescale each term's mode columns to the common norm (prod_k ||a_r^{(k)}||)^{1/K}.
/// The dense reconstruction is unchanged, and by the AM-GM equality case the
/// factorized regularizer value equals lambda_x * sum_r prod_k ||a_r^{(k)}||
/// afterwards. A term with any zero column reconstructs to zero and is zeroed.
inline FactorSet balance_factors(const FactorSet& a) {
  if (a.empty()) return a;
  const Index r_count = a.front().cols();
  const int k_count = static_cast<int>(a.size());
  FactorSet out = a;
  for (Index r = 0; r < r_count; ++r) {
    double prod = 1.0;
    std::vector<double> norms(static_cast<std::size_t>(k_count));
    for (int k = 0; k < k_count; ++k) {
      norms[static_cast<std::size_t>(k)] = out[static_cast<std::size_t>(k)].col(r).norm();
      prod *= norms[static_cast<std::size_t>(k)];
    }
    if (prod == 0.0) {
      for (int k = 0; k < k_count; ++k) out[static_cast<std::size_t>(k)].col(r).setZero();
      continue;
    }
    const double target = std::pow(prod, 1.0 / k_count);
    for (int k = 0; k < k_count; ++k)
      out[static_cast<std::size_t>(k)].col(r) *= target / norms[static_cast<std::size_t>(k)];
  }
  return out;
}

/// Sufficient condition for a stationary point to be a global minimizer:
/// the gradient is (numerically) zero and some factor column is (numerically)
/// zero, i.e. the rank bound is slack at the solution.
inline bool global_optimality_check(const FactorSet& a, double grad_norm, double zero_tol,
                                    double grad_tol) {
  if (!(grad_norm <= grad_tol)) return false;
  std::vector<double> norms;
  for (const Matrix& f : a)
    for (Index r = 0; r < f.cols(); ++r) norms.push_back(f.col(r).norm());
  if (norms.empty()) return false;
  double min_norm = norms.front(), nz_sum = 0.0;
  Index nz_count = 0;
  for (double n : norms) {
    min_norm = std::min(min_norm, n);
    if (n > 0.0) {
      nz_sum += n;
      ++nz_count;
    }
  }
  if (nz_count == 0) return true;  // identically zero point: the bound is slack
  return min_norm <= zero_tol * (nz_sum / static_cast<double>(nz_count));
}

// ---------------------------------------------------------------------------
// Solver drivers
// ---------------------------------------------------------------------------

namespace detail {

inline Index pack_size(const FactorSet& a) {
  Index n = 0;
  for (const Matrix& f : a) n += f.size();
  return n;
}

inline void pack(const FactorSet& a, Vector& x) {
  x.resize(pack_size(a));
  Index off = 0;
  for (const Matrix& f : a) {
    std::copy(f.data(), f.data() + f.size(), x.data() + off);
    off += f.size();
  }
}

inline void unpack(const Vector& x, FactorSet& a) {
  Index off = 0;
  for (Matrix& f : a) {
    std::copy(x.data() + off, x.data() + off + f.size(), f.data());
    off += f.size();
  }
}

// Shared fused value+gradient evaluation for the packed problem. `tied` makes
// all modes share factor 0 (symmetric parameterization); the gradient is then
// the sum of the per-mode chain-rule terms.
struct PackedProblem {
  const DenseTensor& z;
  SolverConfig cfg;
  FactorSet shapes;  // matrices with the right shapes, used as scratch
  bool tied = false;

  double operator()(const Vector& xv, Vector& gv) {
    FactorSet& a = shapes;
    if (tied) {
      Index off = 0;
      Matrix& u = a.front();
      std::copy(xv.data(), xv.data() + u.size(), u.data());
      off += u.size();
      for (std::size_t k = 1; k < a.size(); ++k) a[k] = u;
      (void)off;
    } else {
      unpack(xv, a);
    }

    const DenseTensor x = dense_from_factors(a, z.dims);
    DenseTensor g(z.dims);
    const double phi = phi_value_grad(x, z, cfg.lambda_s, g);

    double reg = 0.0;
    for (const Matrix& f : a)
      for (Index r = 0; r < f.cols(); ++r) reg += std::pow(f.col(r).norm(), cfg.order);
    const double value = (cfg.lambda_x / cfg.order) * reg + phi;

    gv.resize(xv.size());
    if (tied) {
      const Matrix& u = a.front();
      const Matrix chain = khatri_rao_skip(a, 1);  // identical for every mode
      Matrix gu = Matrix::Zero(u.rows(), u.cols());
      for (int k = 1; k <= cfg.order; ++k) gu += matricize(g, k) * chain;
      for (Index r = 0; r < u.cols(); ++r)
        gu.col(r) += cfg.lambda_x * cfg.order * std::pow(u.col(r).norm(), cfg.order - 2) * u.col(r);
      std::copy(gu.data(), gu.data() + gu.size(), gv.data());
    } else {
      Index off = 0;
      for (int k = 1; k <= cfg.order; ++k) {
        const Matrix& fk = a[static_cast<std::size_t>(k - 1)];
        const Matrix chain = khatri_rao_skip(a, k);
        Matrix gk = matricize(g, k) * chain;
        for (Index r = 0; r < fk.cols(); ++r)
          gk.col(r) += cfg.lambda_x * std::pow(fk.col(r).norm(), cfg.order - 2) * fk.col(r);
        std::copy(gk.data(), gk.data() + gk.size(), gv.data() + off);
        off += gk.size();
      }
    }
    return value;
  }
};

inline SolveReport finish_solve(const DenseTensor& z, FactorSet factors, const LbfgsResult& lr,
                                const SolverConfig& cfg,
                                std::chrono::steady_clock::time_point t0) {
  SolveReport rep;
  FactorSet balanced = balance_factors(factors);
  rep.lowrank = dense_from_factors(balanced, z.dims);
  rep.sparse = shrink(z - rep.lowrank, cfg.lambda_s);
  rep.factors = KruskalTensor{};
  rep.factors.factors = std::move(balanced);
  rep.objective_trace = lr.trace;
  rep.final_objective = lr.f;
  rep.final_grad_norm = lr.grad_norm;
  rep.iterations = lr.iterations;
  rep.converged = lr.converged;
  rep.diverged = lr.non_finite;
  rep.global_cert = global_optimality_check(rep.factors.factors, lr.grad_norm, cfg.zero_tol,
                                            cfg.cert_grad_tol);
  rep.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline double auto_scale(const DenseTensor& z, const SolverConfig& cfg, Index dk) {
  if (cfg.init_scale > 0.0) return cfg.init_scale;
  const double zf = frobenius(z);
  if (zf == 0.0) return 0.0;
  return std::pow(zf / static_cast<double>(cfg.rank_bound), 1.0 / cfg.order) /
         std::sqrt(static_cast<double>(dk));
}

}  // namespace detail

/// Limited-memory quasi-Newton descent on the factorized objective from a
/// seeded Gaussian initialization. Factors are balanced on return and the
/// sparse part recomputed via the shrinkage formula.
inline SolveReport lbfgs_solve(const DenseTensor& z, const SolverConfig& cfg) {
  cfg.validate();
  require(z.order() == cfg.order, "lbfgs_solve: tensor order != cfg.order");
  const auto t0 = std::chrono::steady_clock::now();

  FactorSet a(static_cast<std::size_t>(cfg.order));
  Rng rng(derive_seed(cfg.seed, 0x501fULL));
  for (int k = 0; k < cfg.order; ++k) {
    const Index dk = z.dim(k);
    const double scale = detail::auto_scale(z, cfg, dk);
    Matrix f(dk, cfg.rank_bound);
    for (Index j = 0; j < f.size(); ++j) f.data()[j] = scale * rng.normal();
    a[static_cast<std::size_t>(k)] = std::move(f);
  }

  detail::PackedProblem prob{z, cfg, a, false};
  Vector x0;
  detail::pack(a, x0);
  LbfgsOptions opt;
  opt.max_iters = cfg.max_iters;
  opt.memory = cfg.memory;
  opt.grad_tol = cfg.grad_tol;
  const LbfgsResult lr = lbfgs_minimize(prob, std::move(x0), opt);
  detail::unpack(lr.x, a);
  return detail::finish_solve(z, std::move(a), lr, cfg, t0);
}

/// Symmetric objective value for the tied parameterization X = sum_r u_r^{(x)K}.
inline double symmetric_objective_eval(const Matrix& u, const DenseTensor& z,
                                       const SolverConfig& cfg) {
  FactorSet a(static_cast<std::size_t>(cfg.order), u);
  return objective_eval(a, z, cfg);
}

/// Gradient of the symmetric objective wrt the shared factor.
inline Matrix symmetric_gradient(const Matrix& u, const DenseTensor& z, const SolverConfig& cfg) {
  FactorSet a(static_cast<std::size_t>(cfg.order), u);
  const FactorSet g = gradient(a, z, cfg);
  Matrix out = Matrix::Zero(u.rows(), u.cols());
  for (const Matrix& gk : g) out += gk;
  return out;
}

/// Same contract as lbfgs_solve with every rank-one term constrained to be
/// symmetric (one shared factor per term). Requires cubic dims.
inline SolveReport symmetric_solve(const DenseTensor& z, const SolverConfig& cfg) {
  cfg.validate();
  require(z.order() == cfg.order, "symmetric_solve: tensor order != cfg.order");
  for (Index k = 1; k < z.order(); ++k)
    require(z.dim(k) == z.dim(0), "symmetric_solve: cubic dims required");
  const auto t0 = std::chrono::steady_clock::now();

  const Index d = z.dim(0);
  const double scale = detail::auto_scale(z, cfg, d);
  Rng rng(derive_seed(cfg.seed, 0x5c3dULL));
  Matrix u(d, cfg.rank_bound);
  for (Index j = 0; j < u.size(); ++j) u.data()[j] = scale * rng.normal();

  FactorSet shapes(static_cast<std::size_t>(cfg.order), u);
  detail::PackedProblem prob{z, cfg, shapes, true};
  Vector x0(u.size());
  std::copy(u.data(), u.data() + u.size(), x0.data());
  LbfgsOptions opt;
  opt.max_iters = cfg.max_iters;
  opt.memory = cfg.memory;
  opt.grad_tol = cfg.grad_tol;
  const LbfgsResult lr = lbfgs_minimize(prob, std::move(x0), opt);

  std::copy(lr.x.data(), lr.x.data() + lr.x.size(), u.data());
  FactorSet a(static_cast<std::size_t>(cfg.order), u);
  return detail::finish_solve(z, std::move(a), lr, cfg, t0);
}

}  // namespace trpca
