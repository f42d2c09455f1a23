#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "trpca/core.hpp"
#include "trpca/solver.hpp"

namespace trpca {

struct AdmmConfig {
  double rho = 1.0;
  int max_iters = 500;
  double primal_tol = 1e-7;
  double dual_tol = 1e-7;
  bool adapt_rho = true;         // x2 / /2 residual balancing at ratio 10
  double shrink_lambda = 1e-3;   // sparse threshold for the rank-constrained scheme

  void validate() const {
    require(rho > 0.0, "AdmmConfig: rho must be positive");
    require(max_iters >= 1, "AdmmConfig: max_iters must be >= 1");
    require(primal_tol > 0.0 && dual_tol > 0.0, "AdmmConfig: tolerances must be positive");
  }
};

struct BaselineResult {
  DenseTensor lowrank;
  DenseTensor sparse;
  int iterations = 0;
  bool converged = false;
  double feasibility = 0.0;  // ||X + S - Z||_F at exit
};

// ---------------------------------------------------------------------------
// Singular value thresholding
// ---------------------------------------------------------------------------

/// Proximal map of tau * ||.||_*: U max(Sigma - tau, 0) V^T from a full SVD.
inline Matrix svt(const Matrix& m, double tau) {
  require(tau >= 0.0, "svt: tau must be nonnegative");
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector s = svd.singularValues();
  for (Index i = 0; i < s.size(); ++i) s(i) = std::max(s(i) - tau, 0.0);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

inline double nuclear_norm(const Matrix& m) {
  return Eigen::BDCSVD<Matrix>(m).singularValues().sum();
}

// ---------------------------------------------------------------------------
// Matrix RPCA on a chosen matricization (inexact augmented Lagrangian)
// ---------------------------------------------------------------------------

/// min ||L||_* + lambda ||S||_1  s.t. ||L + S - Z_(mode)||_F <= eps,
/// solved by an inexact augmented-Lagrangian splitting with svt/shrink steps;
/// the equality constraint is driven to within the eps ball. Result folded
/// back to tensor shape.
inline BaselineResult matrix_rpca(const DenseTensor& z, Index mode, double lambda, double eps,
                                  const AdmmConfig& cfg = {}) {
  require(lambda > 0.0, "matrix_rpca: lambda must be positive");
  require(eps >= 0.0, "matrix_rpca: eps must be nonnegative");
  cfg.validate();
  const Matrix zm = matricize(z, mode);
  const double zf = zm.norm();

  BaselineResult res;
  Matrix l = Matrix::Zero(zm.rows(), zm.cols());
  Matrix s = l;
  if (zf == 0.0) {
    res.lowrank = dematricize(l, z.dims, mode);
    res.sparse = dematricize(s, z.dims, mode);
    res.converged = true;
    return res;
  }

  const double z2 = Eigen::BDCSVD<Matrix>(zm).singularValues()(0);
  Matrix y = zm / std::max(z2, zm.cwiseAbs().maxCoeff() / lambda);
  double mu = 1.25 / z2;
  const double mu_max = mu * 1e7;
  const double rho = 1.6;

  double feas = zf;
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    l = svt(zm - s + y / mu, 1.0 / mu);
    s = shrink(zm - l + y / mu, lambda / mu);
    const Matrix resid = zm - l - s;
    feas = resid.norm();
    if (feas <= std::max(eps, 1e-9 * zf)) {
      res.converged = true;
      ++it;
      break;
    }
    y += mu * resid;
    mu = std::min(rho * mu, mu_max);
  }
  res.lowrank = dematricize(l, z.dims, mode);
  res.sparse = dematricize(s, z.dims, mode);
  res.iterations = it;
  res.feasibility = feas;
  return res;
}

/// Convex reference for the Lagrangian form
///   min 1/2 ||X + S - Z||_F^2 + lambda_x ||X||_* + lambda_s ||S||_1,
/// by exact block-coordinate descent (each block step is a prox in closed
/// form; the objective is convex, so the limit is a global minimizer).
struct LagrangianRpcaResult {
  Matrix lowrank;
  Matrix sparse;
  double objective = 0.0;
  int iterations = 0;
};

inline LagrangianRpcaResult matrix_rpca_lagrangian(const Matrix& z, double lambda_x,
                                                   double lambda_s, int max_iters = 20000,
                                                   double tol = 1e-13) {
  require(lambda_x > 0.0 && lambda_s > 0.0, "matrix_rpca_lagrangian: lambdas must be positive");
  LagrangianRpcaResult res;
  Matrix x = Matrix::Zero(z.rows(), z.cols());
  Matrix s = x;
  int it = 0;
  for (; it < max_iters; ++it) {
    const Matrix x_prev = x;
    const Matrix s_prev = s;
    x = svt(z - s, lambda_x);
    s = shrink(z - x, lambda_s);
    const double delta = (x - x_prev).norm() + (s - s_prev).norm();
    if (delta <= tol * std::max(1.0, z.norm())) {
      ++it;
      break;
    }
  }
  res.lowrank = x;
  res.sparse = s;
  res.iterations = it;
  res.objective = 0.5 * (x + s - z).squaredNorm() + lambda_x * nuclear_norm(x) +
                  lambda_s * s.cwiseAbs().sum();
  return res;
}

// ---------------------------------------------------------------------------
// Sum-of-nuclear-norms RPCA (ADMM over mode-matricization copies)
// ---------------------------------------------------------------------------

/// min w sum_i ||(X_i)_(i)||_* + ||S||_1  s.t.  X_i + S = Z for each mode,
/// with the X_i driven to consensus by the splitting; returns the average of
/// the mode copies. nuclear_weight <= 0 selects the side-length default per
/// mode.
inline BaselineResult horpca_s(const DenseTensor& z, double nuclear_weight,
                               const AdmmConfig& cfg = {}) {
  cfg.validate();
  require(z.order() == 3, "horpca_s: order-3 tensor expected");
  std::array<double, 3> w{};
  for (int i = 0; i < 3; ++i) {
    w[static_cast<std::size_t>(i)] =
        nuclear_weight > 0.0 ? nuclear_weight : static_cast<double>(z.dim(i));
  }
  const double zf = std::max(frobenius(z), 1e-300);

  std::array<DenseTensor, 3> x{DenseTensor(z.dims), DenseTensor(z.dims), DenseTensor(z.dims)};
  std::array<DenseTensor, 3> y = x;
  DenseTensor s(z.dims);
  double rho = cfg.rho;

  BaselineResult res;
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    for (int i = 0; i < 3; ++i) {
      DenseTensor target = z;
      target -= s;
      for (std::size_t e = 0; e < target.data.size(); ++e)
        target.data[e] += y[static_cast<std::size_t>(i)].data[e] / rho;
      const Matrix unf = matricize(target, i + 1);
      x[static_cast<std::size_t>(i)] =
          dematricize(svt(unf, w[static_cast<std::size_t>(i)] / rho), z.dims, i + 1);
    }

    const DenseTensor s_prev = s;
    DenseTensor mean(z.dims);
    for (int i = 0; i < 3; ++i)
      for (std::size_t e = 0; e < mean.data.size(); ++e)
        mean.data[e] += (z.data[e] - x[static_cast<std::size_t>(i)].data[e] +
                         y[static_cast<std::size_t>(i)].data[e] / rho) / 3.0;
    s = shrink(mean, 1.0 / (3.0 * rho));

    double primal_sq = 0.0;
    for (int i = 0; i < 3; ++i) {
      for (std::size_t e = 0; e < s.data.size(); ++e) {
        const double r = z.data[e] - x[static_cast<std::size_t>(i)].data[e] - s.data[e];
        y[static_cast<std::size_t>(i)].data[e] += rho * r;
        primal_sq += r * r;
      }
    }
    const double primal = std::sqrt(primal_sq);
    const double dual = rho * std::sqrt(3.0) * frobenius(s - s_prev);

    if (primal <= cfg.primal_tol * zf && dual <= cfg.dual_tol * zf) {
      res.converged = true;
      ++it;
      break;
    }
    if (cfg.adapt_rho) {
      if (primal > 10.0 * dual)
        rho *= 2.0;
      else if (dual > 10.0 * primal)
        rho /= 2.0;
    }
  }

  DenseTensor xbar(z.dims);
  for (int i = 0; i < 3; ++i) xbar += x[static_cast<std::size_t>(i)];
  xbar *= 1.0 / 3.0;
  res.lowrank = std::move(xbar);
  res.sparse = std::move(s);
  res.iterations = it;
  res.feasibility = frobenius(res.lowrank + res.sparse - z);
  return res;
}

// ---------------------------------------------------------------------------
// Tucker-rank-constrained RPCA (alternating projection / shrinkage)
// ---------------------------------------------------------------------------

namespace detail {

/// Projection onto Tucker rank <= (r1, r2, r3) by truncated higher-order SVD:
/// mode products with the top-r_i left singular subspaces.
inline DenseTensor hosvd_truncate(const DenseTensor& t, std::array<Index, 3> ranks) {
  DenseTensor out = t;
  for (Index mode = 1; mode <= 3; ++mode) {
    const Index r = ranks[static_cast<std::size_t>(mode - 1)];
    const Matrix unf = matricize(out, mode);
    if (r >= std::min(unf.rows(), unf.cols())) continue;
    Eigen::BDCSVD<Matrix> svd(unf, Eigen::ComputeThinU);
    const Matrix u = svd.matrixU().leftCols(r);
    out = mode_product(out, u * u.transpose(), mode);
  }
  return out;
}

}  // namespace detail

/// Alternating scheme for the rank-constrained program: project Z - S onto
/// Tucker rank <= ranks, shrink the residual into S, iterate. The constraint
/// X + S = Z holds up to the shrink dead zone (residual entries bounded by
/// cfg.shrink_lambda).
inline BaselineResult horpca_c(const DenseTensor& z, std::array<Index, 3> ranks,
                               const AdmmConfig& cfg = {}) {
  cfg.validate();
  require(z.order() == 3, "horpca_c: order-3 tensor expected");
  for (int i = 0; i < 3; ++i)
    require(ranks[static_cast<std::size_t>(i)] >= 1 &&
                ranks[static_cast<std::size_t>(i)] <= z.dim(i),
            "horpca_c: ranks must satisfy 1 <= r_i <= d_i");

  BaselineResult res;
  DenseTensor s(z.dims);
  DenseTensor x(z.dims);
  const double zf = std::max(frobenius(z), 1e-300);
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    const DenseTensor x_prev = x;
    x = detail::hosvd_truncate(z - s, ranks);
    s = shrink(z - x, cfg.shrink_lambda);
    if (frobenius(x - x_prev) <= cfg.primal_tol * zf) {
      res.converged = true;
      ++it;
      break;
    }
  }
  res.lowrank = std::move(x);
  res.sparse = std::move(s);
  res.iterations = it;
  res.feasibility = frobenius(res.lowrank + res.sparse - z);
  return res;
}

}  // namespace trpca
