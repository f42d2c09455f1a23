#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "trpca/core.hpp"
#include "trpca/rng.hpp"

namespace trpca {

// ---------------------------------------------------------------------------
// Support sets and their projections
// ---------------------------------------------------------------------------

/// Sorted, deduplicated set of entry positions of an order-3 tensor, stored as
/// flat offsets (ascending = layout order).
struct SupportSet {
  std::array<Index, 3> dims{0, 0, 0};
  std::vector<Index> flat;

  Index total() const { return dims[0] * dims[1] * dims[2]; }
  Index size() const { return static_cast<Index>(flat.size()); }

  static SupportSet empty(std::array<Index, 3> d) { return SupportSet{d, {}}; }

  static SupportSet all(std::array<Index, 3> d) {
    SupportSet s{d, {}};
    s.flat.resize(static_cast<std::size_t>(s.total()));
    for (Index i = 0; i < s.total(); ++i) s.flat[static_cast<std::size_t>(i)] = i;
    return s;
  }

  static SupportSet from_flat(std::array<Index, 3> d, std::vector<Index> offsets) {
    SupportSet s{d, std::move(offsets)};
    std::sort(s.flat.begin(), s.flat.end());
    s.flat.erase(std::unique(s.flat.begin(), s.flat.end()), s.flat.end());
    for (Index f : s.flat)
      require(f >= 0 && f < s.total(), "SupportSet: index out of range");
    return s;
  }

  static SupportSet from_triples(std::array<Index, 3> d,
                                 const std::vector<std::array<Index, 3>>& triples) {
    std::vector<Index> offsets;
    offsets.reserve(triples.size());
    for (const auto& t : triples) {
      for (int i = 0; i < 3; ++i)
        require(t[static_cast<std::size_t>(i)] >= 0 && t[static_cast<std::size_t>(i)] < d[static_cast<std::size_t>(i)],
                "SupportSet: triple out of range");
      offsets.push_back(t[0] + d[0] * (t[1] + d[1] * t[2]));
    }
    return from_flat(d, std::move(offsets));
  }

  /// Uniform m-subset of all positions, without replacement.
  static SupportSet random(std::array<Index, 3> d, Index m, std::uint64_t seed) {
    SupportSet probe{d, {}};
    require(m >= 0 && m <= probe.total(), "SupportSet: m out of range");
    Rng rng(seed);
    auto picks = rng.sample_without_replacement(static_cast<std::uint64_t>(probe.total()),
                                                static_cast<std::uint64_t>(m));
    std::vector<Index> offsets(picks.begin(), picks.end());
    return SupportSet{d, std::move(offsets)};
  }
};

inline void check_dims(const DenseTensor& t, const SupportSet& s, const char* who) {
  require(t.order() == 3 && t.dim(0) == s.dims[0] && t.dim(1) == s.dims[1] && t.dim(2) == s.dims[2],
          std::string(who) + ": dims mismatch");
}

/// Keep entries on the support, zero the rest.
inline DenseTensor project_support(const DenseTensor& t, const SupportSet& s) {
  check_dims(t, s, "project_support");
  DenseTensor out(t.dims);
  for (Index f : s.flat) out[f] = t[f];
  return out;
}

/// Zero entries on the support, keep the rest.
inline DenseTensor project_support_complement(const DenseTensor& t, const SupportSet& s) {
  check_dims(t, s, "project_support_complement");
  DenseTensor out = t;
  for (Index f : s.flat) out[f] = 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Factor-subspace bases and tensor-space projectors
// ---------------------------------------------------------------------------

/// Orthonormal bases for the three factor column spaces.
struct SubspaceBases {
  Matrix u, v, w;

  std::array<Index, 3> dims() const { return {u.rows(), v.rows(), w.rows()}; }
  std::array<Index, 3> ranks() const { return {u.cols(), v.cols(), w.cols()}; }

  void validate(double tol = 1e-10) const {
    for (const Matrix* b : {&u, &v, &w}) {
      const Matrix g = b->transpose() * (*b) - Matrix::Identity(b->cols(), b->cols());
      require(g.norm() <= tol * std::max<double>(1, b->cols()),
              "SubspaceBases: columns not orthonormal");
    }
  }
};

namespace detail {

/// Orthonormal basis of the column space of f (SVD, relative threshold).
inline Matrix orth(const Matrix& f, double tol) {
  Eigen::BDCSVD<Matrix> svd(f, Eigen::ComputeThinU);
  const Vector& s = svd.singularValues();
  Index r = 0;
  if (s.size() > 0 && s(0) > 0.0) {
    const double cut = tol * s(0);
    for (Index i = 0; i < s.size(); ++i)
      if (s(i) > cut) ++r;
  }
  return svd.matrixU().leftCols(r);
}

}  // namespace detail

inline SubspaceBases bases_from_kruskal(const KruskalTensor& k, double tol = 1e-10) {
  require(k.order() == 3, "bases_from_kruskal: order-3 tensor expected");
  SubspaceBases b;
  b.u = detail::orth(k.factors[0], tol);
  b.v = detail::orth(k.factors[1], tol);
  b.w = detail::orth(k.factors[2], tol);
  require(b.u.cols() > 0 && b.v.cols() > 0 && b.w.cols() > 0,
          "bases_from_kruskal: zero factor matrix");
  return b;
}

/// P_X^0 = (P_U, P_V, P_W) . t
inline DenseTensor project_px0(const DenseTensor& t, const SubspaceBases& b) {
  const Matrix pu = b.u * b.u.transpose();
  const Matrix pv = b.v * b.v.transpose();
  const Matrix pw = b.w * b.w.transpose();
  return mode_multiply(t, pu, pv, pw);
}

/// P_X = P_{U,V,W} + P_{U^perp,V,W} + P_{U,V^perp,W} + P_{U,V,W^perp}
inline DenseTensor project_px(const DenseTensor& t, const SubspaceBases& b) {
  const Matrix pu = b.u * b.u.transpose();
  const Matrix pv = b.v * b.v.transpose();
  const Matrix pw = b.w * b.w.transpose();
  const Matrix qu = Matrix::Identity(pu.rows(), pu.cols()) - pu;
  const Matrix qv = Matrix::Identity(pv.rows(), pv.cols()) - pv;
  const Matrix qw = Matrix::Identity(pw.rows(), pw.cols()) - pw;
  DenseTensor out = mode_multiply(t, pu, pv, pw);
  out += mode_multiply(t, qu, pv, pw);
  out += mode_multiply(t, pu, qv, pw);
  out += mode_multiply(t, pu, pv, qw);
  return out;
}

/// P_X^perp = I - P_X
inline DenseTensor project_px_perp(const DenseTensor& t, const SubspaceBases& b) {
  return t - project_px(t, b);
}

// ---------------------------------------------------------------------------
// Coherence
// ---------------------------------------------------------------------------

struct CoherenceReport {
  double mu = 0.0;                       // max over modes
  std::array<double, 3> mode_mu{0, 0, 0};
  double alpha_estimate = 0.0;           // heuristic, see alpha_estimate()
  std::array<Index, 3> ranks{0, 0, 0};
  double r_bar = 0.0;
};

namespace detail {

/// (d/r) * max_i || row i of the orthonormal basis ||^2
inline double subspace_coherence(const Matrix& basis) {
  const Index d = basis.rows();
  const Index r = basis.cols();
  require(r > 0, "subspace_coherence: empty basis");
  double m = 0.0;
  for (Index i = 0; i < d; ++i) m = std::max(m, basis.row(i).squaredNorm());
  return (static_cast<double>(d) / static_cast<double>(r)) * m;
}

}  // namespace detail

/// mu(X) = max over modes of the factor column-space coherence.
inline double coherence_mu(const KruskalTensor& k, double tol = 1e-10) {
  const SubspaceBases b = bases_from_kruskal(k, tol);
  return std::max({detail::subspace_coherence(b.u), detail::subspace_coherence(b.v),
                   detail::subspace_coherence(b.w)});
}

/// Heuristic estimate of alpha(X): build the candidate dual
/// W0 = sum_r u_r (x) v_r (x) w_r from the orthonormal bases, normalize to
/// unit spectral norm, project by P_X^0, renormalize, and report
/// sqrt(d1 d2 d3 / rbar) * ||W||_max. Exact for odeco tensors; an estimate in
/// general (the exact dual tensor is intractable).
inline double alpha_estimate(const KruskalTensor& k, int restarts = 32, int iters = 200,
                             std::uint64_t seed = 0) {
  const SubspaceBases b = bases_from_kruskal(k);
  const auto dims = b.dims();
  const auto ranks = b.ranks();
  const Index rmin = std::min({ranks[0], ranks[1], ranks[2]});

  KruskalTensor cand;
  cand.factors = {b.u.leftCols(rmin), b.v.leftCols(rmin), b.w.leftCols(rmin)};
  DenseTensor w0 = dense_from_kruskal(cand);
  double s = spectral_norm_estimate(w0, restarts, iters, seed);
  require(s > 0.0, "alpha_estimate: degenerate (zero) tensor");
  w0 *= 1.0 / s;

  DenseTensor w1 = project_px0(w0, b);
  s = spectral_norm_estimate(w1, restarts, iters, seed + 1);
  require(s > 0.0, "alpha_estimate: projected candidate vanished");
  w1 *= 1.0 / s;

  const double rb = r_bar({dims[0], dims[1], dims[2]}, ranks);
  const double n = static_cast<double>(dims[0]) * dims[1] * dims[2];
  return std::sqrt(n / rb) * max_norm(w1);
}

inline CoherenceReport coherence_report(const KruskalTensor& k, std::uint64_t seed = 0) {
  const SubspaceBases b = bases_from_kruskal(k);
  CoherenceReport rep;
  rep.mode_mu = {detail::subspace_coherence(b.u), detail::subspace_coherence(b.v),
                 detail::subspace_coherence(b.w)};
  rep.mu = std::max({rep.mode_mu[0], rep.mode_mu[1], rep.mode_mu[2]});
  rep.ranks = b.ranks();
  rep.r_bar = r_bar(b.dims(), rep.ranks);
  rep.alpha_estimate = alpha_estimate(k, 32, 200, seed);
  return rep;
}

// ---------------------------------------------------------------------------
// Operator norm of P_Omega P_X
// ---------------------------------------------------------------------------

/// |||P_Omega P_X||| by power iteration on the self-adjoint composite
/// P_X P_Omega P_X (their squares agree); returns the square root of the
/// dominant eigenvalue.
inline double opnorm_pomega_px(const SubspaceBases& b, const SupportSet& s, int iters = 500,
                               std::uint64_t seed = 0) {
  require(iters >= 1, "opnorm_pomega_px: iters must be >= 1");
  const auto d = b.dims();
  require(d[0] == s.dims[0] && d[1] == s.dims[1] && d[2] == s.dims[2],
          "opnorm_pomega_px: dims mismatch");
  if (s.size() == 0) return 0.0;

  Rng rng(derive_seed(seed, 0x0b0eULL));
  DenseTensor t(d[0], d[1], d[2]);
  for (double& x : t.data) x = rng.normal();
  t = project_px(t, b);
  double n = frobenius(t);
  if (n == 0.0) return 0.0;
  t *= 1.0 / n;

  double lam = 0.0;
  for (int it = 0; it < iters; ++it) {
    DenseTensor y = project_px(project_support(project_px(t, b), s), b);
    const double prev = lam;
    lam = inner(t, y);
    n = frobenius(y);
    if (n <= 1e-300) return 0.0;
    t = y;
    t *= 1.0 / n;
    if (it > 0 && std::abs(lam - prev) <= 1e-12 * std::max(1.0, std::abs(lam))) break;
  }
  return std::sqrt(std::max(lam, 0.0));
}

// ---------------------------------------------------------------------------
// Hypothesis and certificate checks
// ---------------------------------------------------------------------------

/// Diagnostic evaluation of the exact-recovery hypotheses: with
/// n = d1 d2 d3 - m, checks
///   rbar <= rho_r * sqrt(n / ((d1+d2+d3) log(n) alpha0^4 mu0^2))   and
///   m <= rho_s * d1 d2 d3,
/// and reports lambda = (d1+d2+d3)^{-1/2}.
struct Theorem1Report {
  double lambda = 0.0;
  Index n = 0;
  double rank_rhs = 0.0;
  bool rank_ok = false;
  double rank_margin = 0.0;  // rhs - rbar
  double sparsity_rhs = 0.0;
  bool sparsity_ok = false;
  double sparsity_margin = 0.0;  // rhs - m
};

inline Theorem1Report theorem1_check(std::array<Index, 3> dims, double rbar, Index m,
                                     double mu0, double alpha0, double rho_r = 1.0,
                                     double rho_s = 1.0) {
  require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, "theorem1_check: bad dims");
  require(rbar >= 0 && m >= 0 && mu0 > 0 && alpha0 > 0 && rho_r > 0 && rho_s > 0,
          "theorem1_check: parameters must be positive");
  Theorem1Report rep;
  const double dsum = static_cast<double>(dims[0] + dims[1] + dims[2]);
  const double total = static_cast<double>(dims[0]) * dims[1] * dims[2];
  rep.lambda = 1.0 / std::sqrt(dsum);
  rep.n = static_cast<Index>(total) - m;
  require(rep.n > 1, "theorem1_check: n = d1 d2 d3 - m must exceed 1");
  const double n = static_cast<double>(rep.n);
  rep.rank_rhs = rho_r * std::sqrt(n / (dsum * std::log(n) * std::pow(alpha0, 4) * mu0 * mu0));
  rep.rank_ok = rbar <= rep.rank_rhs;
  rep.rank_margin = rep.rank_rhs - rbar;
  rep.sparsity_rhs = rho_s * total;
  rep.sparsity_ok = static_cast<double>(m) <= rep.sparsity_rhs;
  rep.sparsity_margin = rep.sparsity_rhs - static_cast<double>(m);
  return rep;
}

/// Verification of the four dual-certificate conditions on supplied tensors
/// (checking only; no certificate is constructed here):
///   (i)   P_X^perp W^perp = W^perp
///   (ii)  ||W^perp|| < 1/4
///   (iii) ||P_Omega(W - lambda sgn(S) + W^perp)||_F <= lambda/8
///   (iv)  ||P_Omega^perp(W + W^perp)||_max < lambda/4
struct DualCertReport {
  bool fixed_point_ok = false;
  bool spectral_ok = false;
  bool support_ok = false;
  bool offsupport_ok = false;
  double fixed_point_residual = 0.0;
  double spectral_value = 0.0;
  double support_value = 0.0;
  double offsupport_value = 0.0;
  bool all() const { return fixed_point_ok && spectral_ok && support_ok && offsupport_ok; }
};

inline DualCertReport dual_cert_check(const DenseTensor& wperp, const DenseTensor& w,
                                      const DenseTensor& s_signs, const SubspaceBases& b,
                                      const SupportSet& supp, double lambda,
                                      std::uint64_t seed = 0) {
  require(wperp.same_dims(w) && w.same_dims(s_signs), "dual_cert_check: dims mismatch");
  check_dims(w, supp, "dual_cert_check");
  DualCertReport rep;

  rep.fixed_point_residual = frobenius(project_px_perp(wperp, b) - wperp);
  rep.fixed_point_ok = rep.fixed_point_residual <= 1e-8;

  rep.spectral_value = spectral_norm_estimate(wperp, 32, 200, seed);
  rep.spectral_ok = rep.spectral_value < 0.25;

  DenseTensor combo = w;
  combo += wperp;
  DenseTensor on = combo;
  for (std::size_t i = 0; i < on.data.size(); ++i) on.data[i] -= lambda * s_signs.data[i];
  rep.support_value = frobenius(project_support(on, supp));
  rep.support_ok = rep.support_value <= lambda / 8.0;

  rep.offsupport_value = max_norm(project_support_complement(combo, supp));
  rep.offsupport_ok = rep.offsupport_value < lambda / 4.0;
  return rep;
}

/// Empirical check of the random-sign spectral-norm tail bound: draws sign
/// tensors (+1 w.p. rho/2, -1 w.p. rho/2, 0 otherwise), estimates the spectral
/// norm of each, and reports the fraction falling within
/// sqrt(8 (d1+d2+d3) log(6/log(3/2)) + log(2/delta)).
struct SignSpectralReport {
  double within_fraction = 0.0;
  double bound = 0.0;
  int trials = 0;
};

inline SignSpectralReport random_sign_spectral_check(std::array<Index, 3> dims, double rho,
                                                     double delta, int trials,
                                                     std::uint64_t seed = 0, int restarts = 8,
                                                     int iters = 60) {
  require(rho >= 0.0 && rho < 1.0, "random_sign_spectral_check: rho in [0,1)");
  require(delta > 0.0 && delta < 1.0, "random_sign_spectral_check: delta in (0,1)");
  require(trials >= 1, "random_sign_spectral_check: trials must be >= 1");
  SignSpectralReport rep;
  rep.trials = trials;
  const double dsum = static_cast<double>(dims[0] + dims[1] + dims[2]);
  rep.bound = std::sqrt(8.0 * dsum * std::log(6.0 / std::log(1.5)) + std::log(2.0 / delta));

  int within = 0;
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, 0x51c4ULL, static_cast<std::uint64_t>(t)));
    DenseTensor g(dims[0], dims[1], dims[2]);
    for (double& x : g.data) {
      const double u = rng.uniform();
      x = (u < rho / 2.0) ? 1.0 : (u < rho ? -1.0 : 0.0);
    }
    const double est = spectral_norm_estimate(g, restarts, iters,
                                              derive_seed(seed, 0xe571ULL, static_cast<std::uint64_t>(t)));
    if (est <= rep.bound) ++within;
  }
  rep.within_fraction = static_cast<double>(within) / static_cast<double>(trials);
  return rep;
}

}  // namespace trpca
