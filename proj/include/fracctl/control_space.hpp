#pragma once

/// \file
/// Discrete H^1(0,T) geometry for the controls: inner products, the Riesz
/// map, nodal box constraints with their H^1-metric projection, and sampled
/// feasible directions.

#include <fracctl/frac_kernel.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace fracctl {

/// Matrix control a(t) in R^{n x n} and bias l(t) in R^n sampled on the nodes.
/// Column j of `a` stores a(t_j) in column-major order.
struct ControlPair {
  Mat a;
  Mat ell;

  static ControlPair zeros(Index n, Index nodes) {
    return {Mat::Zero(n * n, nodes), Mat::Zero(n, nodes)};
  }

  /// Controls constant in time.
  static ControlPair constant(const Mat& a0, const Vec& l0, Index nodes) {
    ControlPair u = zeros(l0.size(), nodes);
    const Eigen::Map<const Vec> flat(a0.data(), a0.size());
    u.a.colwise() = flat;
    u.ell.colwise() = l0;
    return u;
  }

  Index dim() const { return ell.rows(); }
  Index nodes() const { return ell.cols(); }

  Eigen::Map<const Mat> a_at(Index j) const { return {a.col(j).data(), dim(), dim()}; }
  Eigen::Map<Mat> a_at(Index j) { return {a.col(j).data(), dim(), dim()}; }

  ControlPair& operator+=(const ControlPair& o) {
    a += o.a;
    ell += o.ell;
    return *this;
  }
  ControlPair& operator-=(const ControlPair& o) {
    a -= o.a;
    ell -= o.ell;
    return *this;
  }
  ControlPair& operator*=(double s) {
    a *= s;
    ell *= s;
    return *this;
  }
  friend ControlPair operator+(ControlPair l, const ControlPair& r) { return l += r; }
  friend ControlPair operator-(ControlPair l, const ControlPair& r) { return l -= r; }
  friend ControlPair operator*(double s, ControlPair u) { return u *= s; }
};

/// Tridiagonal Gram matrix of the discrete H^1 inner product on one scalar
/// component: trapezoid mass plus forward-difference stiffness,
///   A = h diag(1/2, 1, ..., 1, 1/2) + (1/h) tridiag(-1, 2, -1)  (ends 1/h).
class H1Gram {
 public:
  explicit H1Gram(const TimeGrid& grid) : nodes_(grid.nodes()), h_(grid.step()) {
    diag_.assign(static_cast<std::size_t>(nodes_), h_ + 2.0 / h_);
    diag_.front() = diag_.back() = 0.5 * h_ + 1.0 / h_;
    off_ = -1.0 / h_;
  }

  Index nodes() const { return nodes_; }
  double diag(Index i) const { return diag_[static_cast<std::size_t>(i)]; }
  double off() const { return off_; }

  /// A applied to every row of u (rows are independent components).
  Mat apply(const Mat& u) const {
    Mat out(u.rows(), u.cols());
    for (Index j = 0; j < nodes_; ++j) {
      out.col(j) = diag(j) * u.col(j);
      if (j > 0) out.col(j) += off_ * u.col(j - 1);
      if (j + 1 < nodes_) out.col(j) += off_ * u.col(j + 1);
    }
    return out;
  }

  /// Solve A x = rhs row by row (Thomas algorithm; A is SPD).
  Mat solve(const Mat& rhs) const {
    const auto n = static_cast<std::size_t>(nodes_);
    std::vector<double> c(n), d(n);
    Mat x(rhs.rows(), rhs.cols());
    // factorization shared by all rows
    std::vector<double> denom(n);
    denom[0] = diag_[0];
    c[0] = off_ / denom[0];
    for (std::size_t i = 1; i < n; ++i) {
      denom[i] = diag_[i] - off_ * c[i - 1];
      c[i] = off_ / denom[i];
    }
    for (Index r = 0; r < rhs.rows(); ++r) {
      d[0] = rhs(r, 0) / denom[0];
      for (std::size_t i = 1; i < n; ++i) {
        d[i] = (rhs(r, static_cast<Index>(i)) - off_ * d[i - 1]) / denom[i];
      }
      x(r, nodes_ - 1) = d[n - 1];
      for (std::size_t i = n - 1; i-- > 0;) {
        d[i] -= c[i] * d[i + 1];
        x(r, static_cast<Index>(i)) = d[i];
      }
    }
    return x;
  }

 private:
  Index nodes_;
  double h_;
  std::vector<double> diag_;
  double off_;
};

/// (u, v)_{H^1,h}: trapezoid rule for int u.v plus forward differences for
/// int u'.v', summed over rows.
inline double h1_inner(const Mat& u, const Mat& v, const TimeGrid& grid) {
  detail::require_nodal(u, grid, "h1_inner");
  detail::require_nodal(v, grid, "h1_inner");
  const double h = grid.step();
  const Index last = grid.nodes() - 1;
  double mass = 0.5 * (u.col(0).dot(v.col(0)) + u.col(last).dot(v.col(last)));
  for (Index j = 1; j < last; ++j) mass += u.col(j).dot(v.col(j));
  double stiff = 0.0;
  for (Index j = 0; j < last; ++j) {
    stiff += (u.col(j + 1) - u.col(j)).dot(v.col(j + 1) - v.col(j));
  }
  return h * mass + stiff / h;
}

inline double h1_norm(const Mat& u, const TimeGrid& grid) {
  return std::sqrt(std::max(0.0, h1_inner(u, u, grid)));
}

inline double h1_inner(const ControlPair& u, const ControlPair& v, const TimeGrid& grid) {
  return h1_inner(u.a, v.a, grid) + h1_inner(u.ell, v.ell, grid);
}

inline double h1_norm(const ControlPair& u, const TimeGrid& grid) {
  return std::sqrt(std::max(0.0, h1_inner(u, u, grid)));
}

/// <psi, v>_{L^2,h} = h sum_{j>=1} psi_j . v_j, the right-endpoint rule that
/// matches the state quadrature (node 0 never enters the state).
inline double l2_pairing(const Mat& psi, const Mat& v, const TimeGrid& grid) {
  detail::require_nodal(psi, grid, "l2_pairing");
  detail::require_nodal(v, grid, "l2_pairing");
  const Index nodes = grid.nodes();
  return grid.step() * (psi.rightCols(nodes - 1).cwiseProduct(v.rightCols(nodes - 1))).sum();
}

/// H^1 representative g of the functional v -> <psi, v>_{L^2,h}:
/// solves A g = W psi with W = h diag(0, 1, ..., 1).
inline Mat riesz_lift(const Mat& psi, const TimeGrid& grid) {
  detail::require_nodal(psi, grid, "riesz_lift");
  if (!psi.allFinite()) {
    throw std::invalid_argument("riesz_lift: non-finite density");
  }
  Mat rhs = grid.step() * psi;
  rhs.col(0).setZero();
  return H1Gram(grid).solve(rhs);
}

/// K = { l : lower <= l(t_j) <= upper for all nodes }, bounds may be infinite.
struct BoxConstraint {
  Mat lower;
  Mat upper;

  static BoxConstraint unbounded(Index n, Index nodes) {
    const double inf = std::numeric_limits<double>::infinity();
    return {Mat::Constant(n, nodes, -inf), Mat::Constant(n, nodes, inf)};
  }

  /// Same bounds at every node.
  static BoxConstraint constant(const Vec& lo, const Vec& hi, Index nodes) {
    BoxConstraint box{Mat(lo.size(), nodes), Mat(hi.size(), nodes)};
    box.lower.colwise() = lo;
    box.upper.colwise() = hi;
    box.validate();
    return box;
  }

  void validate() const {
    if (lower.rows() != upper.rows() || lower.cols() != upper.cols()) {
      throw std::invalid_argument("box bounds have mismatched shapes");
    }
    if ((lower.array() > upper.array()).any() || lower.array().isNaN().any() ||
        upper.array().isNaN().any()) {
      throw std::invalid_argument("infeasible box: lower > upper somewhere");
    }
  }

  bool contains(const Mat& ell, double tol = 0.0) const {
    return ((ell.array() >= lower.array() - tol) && (ell.array() <= upper.array() + tol)).all();
  }

  /// Midpoint of finite bounds, the finite bound if only one is finite, else 0.
  Mat midpoint() const {
    Mat mid(lower.rows(), lower.cols());
    for (Index i = 0; i < mid.size(); ++i) {
      const double lo = lower(i), hi = upper(i);
      if (std::isfinite(lo) && std::isfinite(hi)) {
        mid(i) = 0.5 * (lo + hi);
      } else if (std::isfinite(lo)) {
        mid(i) = std::max(lo, 0.0);
      } else if (std::isfinite(hi)) {
        mid(i) = std::min(hi, 0.0);
      } else {
        mid(i) = 0.0;
      }
    }
    return mid;
  }
};

namespace detail {

/// Solve a tridiagonal system given as (sub, diag, super) in place.
inline void thomas(std::vector<double>& sub, std::vector<double>& diag, std::vector<double>& sup,
                   std::vector<double>& rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double w = sub[i] / diag[i - 1];
    diag[i] -= w * sup[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  rhs[n - 1] /= diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) {
    rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
  }
}

enum class BoundState : std::uint8_t { free, lower, upper };

/// Primal-dual active-set projection of one row w onto [lo, hi] in the A-norm.
/// A is an M-matrix, so the active-set updates terminate.
inline Vec project_row(const H1Gram& gram, const Vec& w, const Vec& lo, const Vec& hi,
                       double* kkt_residual) {
  const Index n = w.size();
  std::vector<BoundState> state(static_cast<std::size_t>(n), BoundState::free);
  for (Index i = 0; i < n; ++i) {
    if (w(i) < lo(i)) state[static_cast<std::size_t>(i)] = BoundState::lower;
    if (w(i) > hi(i)) state[static_cast<std::size_t>(i)] = BoundState::upper;
  }
  const Vec aw = gram.apply(w.transpose()).transpose();
  Vec v = w;
  Vec mu = Vec::Zero(n);
  const Index max_iter = 10 * n + 10;
  for (Index iter = 0;; ++iter) {
    if (iter > max_iter) {
      throw ProjectionFailure("H1 box projection: active-set iteration did not settle");
    }
    for (Index i = 0; i < n; ++i) {
      const auto s = state[static_cast<std::size_t>(i)];
      if (s == BoundState::lower) v(i) = lo(i);
      if (s == BoundState::upper) v(i) = hi(i);
    }
    // free block: A_FF v_F = (A w)_F - A_FA v_A
    std::vector<Index> free_idx;
    for (Index i = 0; i < n; ++i) {
      if (state[static_cast<std::size_t>(i)] == BoundState::free) free_idx.push_back(i);
    }
    if (!free_idx.empty()) {
      const std::size_t m = free_idx.size();
      std::vector<double> sub(m, 0.0), diag(m), sup(m, 0.0), rhs(m);
      for (std::size_t k = 0; k < m; ++k) {
        const Index i = free_idx[k];
        diag[k] = gram.diag(i);
        double r = aw(i);
        if (i > 0 && state[static_cast<std::size_t>(i - 1)] != BoundState::free) {
          r -= gram.off() * v(i - 1);
        }
        if (i + 1 < n && state[static_cast<std::size_t>(i + 1)] != BoundState::free) {
          r -= gram.off() * v(i + 1);
        }
        rhs[k] = r;
        if (k > 0 && free_idx[k - 1] == i - 1) sub[k] = gram.off();
        if (k + 1 < m && free_idx[k + 1] == i + 1) sup[k] = gram.off();
      }
      thomas(sub, diag, sup, rhs);
      for (std::size_t k = 0; k < m; ++k) v(free_idx[k]) = rhs[k];
    }
    mu = gram.apply((v - w).transpose()).transpose();
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      const double c = gram.diag(i);
      BoundState next = BoundState::free;
      if (std::isfinite(lo(i)) && mu(i) + c * (lo(i) - v(i)) > 0.0) {
        next = BoundState::lower;
      } else if (std::isfinite(hi(i)) && mu(i) + c * (hi(i) - v(i)) < 0.0) {
        next = BoundState::upper;
      }
      if (next != state[static_cast<std::size_t>(i)]) {
        state[static_cast<std::size_t>(i)] = next;
        changed = true;
      }
    }
    if (!changed) break;
  }
  if (kkt_residual != nullptr) {
    double res = 0.0;
    const double scale = std::max(1.0, gram.apply(w.transpose()).cwiseAbs().maxCoeff());
    for (Index i = 0; i < n; ++i) {
      switch (state[static_cast<std::size_t>(i)]) {
        case BoundState::free:
          res = std::max(res, std::abs(mu(i)) / scale);
          res = std::max({res, lo(i) - v(i), v(i) - hi(i)});
          break;
        case BoundState::lower:
          res = std::max(res, -mu(i) / scale);
          break;
        case BoundState::upper:
          res = std::max(res, mu(i) / scale);
          break;
      }
    }
    *kkt_residual = res;
  }
  return v;
}

}  // namespace detail

/// H^1-metric projection onto the box: argmin ||v - ell||_{H^1,h} subject to
/// the nodal bounds. Components decouple because A acts per row.
inline Mat project_K(const Mat& ell, const BoxConstraint& box, const TimeGrid& grid,
                     double* kkt_residual = nullptr) {
  detail::require_nodal(ell, grid, "project_K");
  box.validate();
  if (box.lower.rows() != ell.rows() || box.lower.cols() != ell.cols()) {
    throw std::invalid_argument("project_K: box and control shapes differ");
  }
  if (box.contains(ell)) {
    if (kkt_residual != nullptr) *kkt_residual = 0.0;
    return ell;
  }
  const H1Gram gram(grid);
  Mat out(ell.rows(), ell.cols());
  double worst = 0.0;
  for (Index r = 0; r < ell.rows(); ++r) {
    double res = 0.0;
    out.row(r) = detail::project_row(gram, ell.row(r).transpose(), box.lower.row(r).transpose(),
                                     box.upper.row(r).transpose(), &res)
                     .transpose();
    worst = std::max(worst, res);
  }
  if (worst > 1e-10) {
    throw ProjectionFailure("H1 box projection: KKT residual " + std::to_string(worst));
  }
  if (kkt_residual != nullptr) *kkt_residual = worst;
  return out;
}

/// Pseudo-random nodal directions in cone(K - ell_bar): Gaussian entries,
/// forced >= 0 where ell_bar sits on its lower bound, <= 0 on its upper bound
/// (both: 0). A bound counts as active within active_tol.
inline std::vector<Mat> cone_directions(const Mat& ell_bar, const BoxConstraint& box, int count,
                                        std::uint64_t seed, double active_tol = 1e-9) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Mat> dirs;
  dirs.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int c = 0; c < count; ++c) {
    Mat d(ell_bar.rows(), ell_bar.cols());
    for (Index j = 0; j < d.cols(); ++j) {
      for (Index i = 0; i < d.rows(); ++i) {
        double x = normal(rng);
        const bool at_lo = ell_bar(i, j) - box.lower(i, j) <= active_tol;
        const bool at_hi = box.upper(i, j) - ell_bar(i, j) <= active_tol;
        if (at_lo && at_hi) {
          x = 0.0;
        } else if (at_lo) {
          x = std::abs(x);
        } else if (at_hi) {
          x = -std::abs(x);
        }
        d(i, j) = x;
      }
    }
    dirs.push_back(std::move(d));
  }
  return dirs;
}

}  // namespace fracctl
