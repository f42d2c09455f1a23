#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trpca/rng.hpp"

namespace trpca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Dense real tensor of arbitrary order, stored with the first index fastest:
/// entry (i1, i2, ..., iK) lives at offset i1 + d1*(i2 + d2*(i3 + ...)).
/// Order three is the primary case; the solver also uses orders 2 and 4+.
struct DenseTensor {
  std::vector<Index> dims;
  std::vector<double> data;

  DenseTensor() = default;

  explicit DenseTensor(std::vector<Index> d) : dims(std::move(d)) {
    require(!dims.empty(), "DenseTensor: order must be at least 1");
    for (Index di : dims) require(di >= 1, "DenseTensor: dims must be positive");
    data.assign(static_cast<std::size_t>(size_of(dims)), 0.0);
  }

  DenseTensor(Index d1, Index d2, Index d3) : DenseTensor(std::vector<Index>{d1, d2, d3}) {}

  static Index size_of(const std::vector<Index>& d) {
    Index n = 1;
    for (Index di : d) n *= di;
    return n;
  }

  Index order() const { return static_cast<Index>(dims.size()); }
  Index size() const { return static_cast<Index>(data.size()); }
  Index dim(Index k) const { return dims[static_cast<std::size_t>(k)]; }

  double& operator[](Index flat) { return data[static_cast<std::size_t>(flat)]; }
  double operator[](Index flat) const { return data[static_cast<std::size_t>(flat)]; }

  Index offset3(Index i, Index j, Index k) const {
    return i + dims[0] * (j + dims[1] * k);
  }
  double& at(Index i, Index j, Index k) { return data[static_cast<std::size_t>(offset3(i, j, k))]; }
  double at(Index i, Index j, Index k) const { return data[static_cast<std::size_t>(offset3(i, j, k))]; }

  bool same_dims(const DenseTensor& o) const { return dims == o.dims; }

  bool is_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  DenseTensor& operator+=(const DenseTensor& o) {
    require(same_dims(o), "DenseTensor +=: dims mismatch");
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
  }
  DenseTensor& operator-=(const DenseTensor& o) {
    require(same_dims(o), "DenseTensor -=: dims mismatch");
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
    return *this;
  }
  DenseTensor& operator*=(double s) {
    for (double& v : data) v *= s;
    return *this;
  }
  friend DenseTensor operator+(DenseTensor a, const DenseTensor& b) { return a += b; }
  friend DenseTensor operator-(DenseTensor a, const DenseTensor& b) { return a -= b; }
  friend DenseTensor operator*(double s, DenseTensor a) { return a *= s; }
};

/// CP representation: K factor matrices of shape d_k x R, plus optional
/// per-term weights. With weights present, factor columns are unit norm.
struct KruskalTensor {
  std::vector<Matrix> factors;
  std::optional<Vector> weights;

  KruskalTensor() = default;
  explicit KruskalTensor(std::vector<Matrix> f, std::optional<Vector> w = std::nullopt)
      : factors(std::move(f)), weights(std::move(w)) {
    validate();
  }

  Index order() const { return static_cast<Index>(factors.size()); }
  Index rank() const { return factors.empty() ? 0 : factors.front().cols(); }

  std::vector<Index> dims() const {
    std::vector<Index> d;
    d.reserve(factors.size());
    for (const Matrix& f : factors) d.push_back(f.rows());
    return d;
  }

  void validate(double tol = 1e-10) const {
    require(!factors.empty(), "KruskalTensor: needs at least one factor matrix");
    const Index r = factors.front().cols();
    for (const Matrix& f : factors)
      require(f.cols() == r, "KruskalTensor: factor column counts disagree");
    if (weights) {
      require(weights->size() == r, "KruskalTensor: weight count != rank");
      for (Index j = 0; j < r; ++j) {
        require((*weights)(j) >= 0.0, "KruskalTensor: weights must be nonnegative");
        for (const Matrix& f : factors) {
          const double n = f.col(j).norm();
          require(std::abs(n - 1.0) <= tol || n == 0.0,
                  "KruskalTensor: weighted form requires unit-norm factor columns");
        }
      }
    }
  }

  /// Weight of term r (product of column norms when no explicit weights).
  double term_weight(Index r) const {
    if (weights) return (*weights)(r);
    double w = 1.0;
    for (const Matrix& f : factors) w *= f.col(r).norm();
    return w;
  }

  /// Equivalent normalized view: unit columns with explicit weights.
  KruskalTensor normalized(double zero_tol = 0.0) const {
    const Index r = rank();
    std::vector<Matrix> nf = factors;
    Vector w = Vector::Ones(r);
    if (weights) w = *weights;
    for (Index j = 0; j < r; ++j) {
      for (Matrix& f : nf) {
        const double n = f.col(j).norm();
        if (n > zero_tol) {
          f.col(j) /= n;
          w(j) *= n;
        } else {
          f.col(j).setZero();
          w(j) = 0.0;
        }
      }
    }
    KruskalTensor out;
    out.factors = std::move(nf);
    out.weights = std::move(w);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Khatri-Rao and matricization
// ---------------------------------------------------------------------------

/// Column-wise Kronecker product: column j is a.col(j) (x) b.col(j), with
/// b's index fastest (block i of the result is a(i,j) * b.col(j)).
inline Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "khatri_rao: column counts differ");
  Matrix out(a.rows() * b.rows(), a.cols());
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      out.block(i * b.rows(), j, b.rows(), 1) = a(i, j) * b.col(j);
  return out;
}

/// Khatri-Rao chain over all factors except `skip` (1-based mode), combined
/// in decreasing mode order so its rows match matricize() column order.
inline Matrix khatri_rao_skip(const std::vector<Matrix>& factors, Index skip) {
  const Index k_count = static_cast<Index>(factors.size());
  require(skip >= 1 && skip <= k_count, "khatri_rao_skip: mode out of range");
  Matrix chain;
  bool first = true;
  for (Index m = k_count; m >= 1; --m) {
    if (m == skip) continue;
    const Matrix& f = factors[static_cast<std::size_t>(m - 1)];
    chain = first ? f : khatri_rao(chain, f);
    first = false;
  }
  if (first) {
    // Order-1 edge: the empty chain is a 1 x R row of ones.
    chain = Matrix::Ones(1, factors.front().cols());
  }
  return chain;
}

/// Mode-k unfolding: fibers along mode k become columns. Column index is the
/// mixed-radix number of the remaining indices with the smallest mode fastest
/// (mode 1 of an order-3 tensor: column j2 + d2*j3), so that
/// matricize(dense(K), k) == A_k * khatri_rao_skip(factors, k)^T.
inline Matrix matricize(const DenseTensor& t, Index mode) {
  const Index k_count = t.order();
  require(mode >= 1 && mode <= k_count, "matricize: invalid mode");
  const Index dk = t.dim(mode - 1);
  const Index ncols = t.size() / dk;
  Matrix out(dk, ncols);

  // stride of mode `mode` in the flat layout, and loop bounds for the rest
  Index stride = 1;
  for (Index m = 0; m < mode - 1; ++m) stride *= t.dim(m);

  std::vector<Index> rest_dims;
  for (Index m = 0; m < k_count; ++m)
    if (m != mode - 1) rest_dims.push_back(t.dim(m));

  std::vector<Index> idx(rest_dims.size(), 0);
  for (Index col = 0; col < ncols; ++col) {
    // flat offset of the fiber start for this column
    Index base = 0, mult = 1;
    std::size_t pos = 0;
    for (Index m = 0; m < k_count; ++m) {
      if (m == mode - 1) {
        mult *= t.dim(m);
        continue;
      }
      base += idx[pos] * mult;
      mult *= t.dim(m);
      ++pos;
    }
    for (Index i = 0; i < dk; ++i) out(i, col) = t[base + i * stride];
    // advance mixed-radix counter (smallest remaining mode fastest)
    for (std::size_t p = 0; p < idx.size(); ++p) {
      if (++idx[p] < rest_dims[p]) break;
      idx[p] = 0;
    }
  }
  return out;
}

/// Inverse of matricize: refold a mode-k unfolding into a tensor of `dims`.
inline DenseTensor dematricize(const Matrix& m, const std::vector<Index>& dims, Index mode) {
  DenseTensor t(dims);
  const Index k_count = t.order();
  require(mode >= 1 && mode <= k_count, "dematricize: invalid mode");
  const Index dk = t.dim(mode - 1);
  require(m.rows() == dk && m.cols() == t.size() / dk, "dematricize: shape mismatch");

  Index stride = 1;
  for (Index idx_m = 0; idx_m < mode - 1; ++idx_m) stride *= t.dim(idx_m);

  std::vector<Index> rest_dims;
  for (Index idx_m = 0; idx_m < k_count; ++idx_m)
    if (idx_m != mode - 1) rest_dims.push_back(t.dim(idx_m));

  std::vector<Index> idx(rest_dims.size(), 0);
  for (Index col = 0; col < m.cols(); ++col) {
    Index base = 0, mult = 1;
    std::size_t pos = 0;
    for (Index im = 0; im < k_count; ++im) {
      if (im == mode - 1) {
        mult *= t.dim(im);
        continue;
      }
      base += idx[pos] * mult;
      mult *= t.dim(im);
      ++pos;
    }
    for (Index i = 0; i < dk; ++i) t[base + i * stride] = m(i, col);
    for (std::size_t p = 0; p < idx.size(); ++p) {
      if (++idx[p] < rest_dims[p]) break;
      idx[p] = 0;
    }
  }
  return t;
}

/// Evaluate a Kruskal tensor densely: entry (i1..iK) = sum_r w_r prod_k U_k(i_k, r).
inline DenseTensor dense_from_kruskal(const KruskalTensor& k) {
  k.validate();
  const std::vector<Index> dims = k.dims();
  if (k.rank() == 0) return DenseTensor(dims);
  Matrix lead = k.factors.front();
  if (k.weights)
    for (Index r = 0; r < k.rank(); ++r) lead.col(r) *= (*k.weights)(r);
  const Matrix chain = khatri_rao_skip(k.factors, 1);
  const Matrix unf = lead * chain.transpose();
  return dematricize(unf, dims, 1);
}

/// Single mode-k product: replaces mode-k fibers by M * fiber.
inline DenseTensor mode_product(const DenseTensor& t, const Matrix& m, Index mode) {
  require(m.cols() == t.dim(mode - 1), "mode_product: inner dimension mismatch");
  const Matrix unf = m * matricize(t, mode);
  std::vector<Index> nd = t.dims;
  nd[static_cast<std::size_t>(mode - 1)] = m.rows();
  return dematricize(unf, nd, mode);
}

/// (M1, M2, M3) . t as successive mode products (order-3).
inline DenseTensor mode_multiply(const DenseTensor& t, const Matrix& m1, const Matrix& m2,
                                 const Matrix& m3) {
  require(t.order() == 3, "mode_multiply: order-3 tensor expected");
  return mode_product(mode_product(mode_product(t, m1, 1), m2, 2), m3, 3);
}

// ---------------------------------------------------------------------------
// Norms and inner products
// ---------------------------------------------------------------------------

inline double inner(const DenseTensor& a, const DenseTensor& b) {
  require(a.same_dims(b), "inner: dims mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double frobenius(const DenseTensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v * v;
  return std::sqrt(s);
}

inline double sum_norm(const DenseTensor& t) {
  double s = 0.0;
  for (double v : t.data) s += std::abs(v);
  return s;
}

inline double max_norm(const DenseTensor& t) {
  double s = 0.0;
  for (double v : t.data) s = std::max(s, std::abs(v));
  return s;
}

// ---------------------------------------------------------------------------
// Spectral norm (higher-order power iteration) and atomic-norm surrogate
// ---------------------------------------------------------------------------

namespace detail {

/// res[i_k] = sum over all entries of t[...] * prod_{j != k} u_j[i_j].
inline Vector contract_all_but(const DenseTensor& t, const std::vector<Vector>& u, Index mode) {
  const Index k_count = t.order();
  const Index dk = t.dim(mode - 1);
  Vector res = Vector::Zero(dk);
  std::vector<Index> idx(static_cast<std::size_t>(k_count), 0);
  const Index n = t.size();
  for (Index flat = 0; flat < n; ++flat) {
    double p = t[flat];
    if (p != 0.0) {
      for (Index m = 0; m < k_count; ++m) {
        if (m == mode - 1) continue;
        p *= u[static_cast<std::size_t>(m)](idx[static_cast<std::size_t>(m)]);
      }
      res(idx[static_cast<std::size_t>(mode - 1)]) += p;
    }
    for (Index m = 0; m < k_count; ++m) {
      if (++idx[static_cast<std::size_t>(m)] < t.dim(m)) break;
      idx[static_cast<std::size_t>(m)] = 0;
    }
  }
  return res;
}

inline double contract_full(const DenseTensor& t, const std::vector<Vector>& u) {
  return contract_all_but(t, u, 1).dot(u.front());
}

/// One alternating maximization run from the given start; returns the final
/// value of <t, u1 (x) ... (x) uK> and optionally the per-sweep value trace
/// (nondecreasing: each block update is an exact maximization).
inline double hopm_run(const DenseTensor& t, std::vector<Vector>& u, int iters,
                       double rel_tol = 1e-10, std::vector<double>* trace = nullptr) {
  const Index k_count = t.order();
  double val = std::abs(contract_full(t, u));
  if (trace) trace->push_back(val);
  for (int it = 0; it < iters; ++it) {
    const double prev = val;
    for (Index mode = 1; mode <= k_count; ++mode) {
      Vector g = contract_all_but(t, u, mode);
      const double n = g.norm();
      if (n == 0.0) return val;
      u[static_cast<std::size_t>(mode - 1)] = g / n;
      val = n;
    }
    if (trace) trace->push_back(val);
    if (std::abs(val - prev) <= rel_tol * std::max(1.0, std::abs(val))) break;
  }
  return val;
}

}  // namespace detail

/// Multi-start power-iteration lower bound on the tensor spectral norm
/// max_{unit u,v,w} <t, u (x) v (x) w>. Every restart value is attained by an
/// explicit rank-one tensor, so the maximum is a certified lower bound.
inline double spectral_norm_estimate(const DenseTensor& t, int restarts = 32, int iters = 200,
                                     std::uint64_t seed = 0) {
  require(restarts >= 1, "spectral_norm_estimate: restarts must be >= 1");
  Rng rng(derive_seed(seed, 0x5eedULL));
  double best = 0.0;
  const Index k_count = t.order();
  for (int r = 0; r < restarts; ++r) {
    std::vector<Vector> u(static_cast<std::size_t>(k_count));
    for (Index m = 0; m < k_count; ++m) {
      Vector v(t.dim(m));
      for (Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
      const double n = v.norm();
      u[static_cast<std::size_t>(m)] = (n > 0) ? Vector(v / n) : Vector(Vector::Unit(t.dim(m), 0));
    }
    best = std::max(best, detail::hopm_run(t, u, iters));
  }
  return best;
}

/// Sum over terms of the product of factor column norms. For any CP
/// decomposition this weight sum upper-bounds the atomic norm of the value.
inline double atomic_norm_surrogate(const KruskalTensor& k) {
  double s = 0.0;
  for (Index r = 0; r < k.rank(); ++r) s += k.term_weight(r);
  return s;
}

// ---------------------------------------------------------------------------
// Tucker rank
// ---------------------------------------------------------------------------

struct TuckerRankReport {
  std::array<Index, 3> ranks{0, 0, 0};
  std::array<Vector, 3> singular_values;
  std::array<double, 3> tail_norm{0.0, 0.0, 0.0};  // Frobenius mass beyond the cutoff
  double r_bar = 0.0;
};

/// sqrt((r1 r2 d3 + r1 r3 d2 + r2 r3 d1) / (d1 + d2 + d3)).
inline double r_bar(const std::array<Index, 3>& dims, const std::array<Index, 3>& ranks) {
  for (int i = 0; i < 3; ++i) {
    require(ranks[i] >= 0, "r_bar: ranks must be nonnegative");
    require(ranks[i] <= dims[i], "r_bar: rank exceeds dimension");
  }
  const double num = static_cast<double>(ranks[0]) * ranks[1] * dims[2] +
                     static_cast<double>(ranks[0]) * ranks[2] * dims[1] +
                     static_cast<double>(ranks[1]) * ranks[2] * dims[0];
  const double den = static_cast<double>(dims[0] + dims[1] + dims[2]);
  return std::sqrt(num / den);
}

/// Mode ranks from matricization SVDs, thresholded at tol * sigma_max.
/// The zero tensor reports rank (0,0,0).
inline TuckerRankReport tucker_rank(const DenseTensor& t, double tol = 1e-8) {
  require(t.order() == 3, "tucker_rank: order-3 tensor expected");
  require(tol > 0.0, "tucker_rank: tol must be positive");
  TuckerRankReport rep;
  for (Index mode = 1; mode <= 3; ++mode) {
    const Matrix unf = matricize(t, mode);
    Eigen::BDCSVD<Matrix> svd(unf);
    const Vector& s = svd.singularValues();
    rep.singular_values[static_cast<std::size_t>(mode - 1)] = s;
    Index r = 0;
    if (s.size() > 0 && s(0) > 0.0) {
      const double cut = tol * s(0);
      for (Index i = 0; i < s.size(); ++i)
        if (s(i) > cut) ++r;
    }
    rep.ranks[static_cast<std::size_t>(mode - 1)] = r;
    double tail = 0.0;
    for (Index i = r; i < s.size(); ++i) tail += s(i) * s(i);
    rep.tail_norm[static_cast<std::size_t>(mode - 1)] = std::sqrt(tail);
  }
  rep.r_bar = r_bar({t.dim(0), t.dim(1), t.dim(2)}, rep.ranks);
  return rep;
}

}  // namespace trpca
