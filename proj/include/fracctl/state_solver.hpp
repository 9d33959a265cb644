#pragma once

/// \file
/// Mild solutions of  d^gamma y = f(a y + l),  y(0) = y0, i.e. of the Volterra
/// equation  y(t) = y0 + I_{0+}^gamma [f(a y + l)](t),  plus the strong-solution
/// diagnostics.

#include <fracctl/activation.hpp>
#include <fracctl/control_space.hpp>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace fracctl {

struct SolverOptions {
  int max_iterations = 100;
  double tolerance = 1e-13;     // relative, per step
  double max_contraction = 0.9;  // refuse steps with b_1 L ||a|| above this
};

namespace detail {

inline void require_controls(const ControlPair& u, const TimeGrid& grid, const char* what) {
  if (u.dim() == 0) {
    throw std::invalid_argument(std::string(what) + ": state dimension must be positive");
  }
  if (grid.steps() < 2) {
    throw std::invalid_argument(std::string(what) + ": need at least two time steps");
  }
  if (u.nodes() != grid.nodes() || u.a.cols() != grid.nodes() ||
      u.a.rows() != u.dim() * u.dim()) {
    throw std::invalid_argument(std::string(what) + ": control shape does not match the grid");
  }
}

/// Contraction factor b_1 L ||a_j||_inf of the implicit step at node j.
inline void check_contraction(double factor, int j, const SolverOptions& opt, const char* what) {
  if (!(factor < opt.max_contraction)) {
    throw ContractionFailure(std::string(what) + ": step contraction factor " +
                             std::to_string(factor) + " at node " + std::to_string(j) +
                             " is not below " + std::to_string(opt.max_contraction) +
                             "; refine the time step");
  }
}

inline Vec argument_at(const ControlPair& u, const Mat& y, Index j) {
  return u.a_at(j) * y.col(j) + u.ell.col(j);
}

}  // namespace detail

/// Solve y_j = y0 + sum_{k<j} w[j][k] f(a_{k+1} y_{k+1} + l_{k+1}).
///
/// Each step is implicit in y_j and solved by fixed-point iteration started
/// at y_{j-1}; the iteration contracts with factor b_1 L ||a_j||. For smooth
/// nonlinearities the fixed point is finished with Newton steps so the
/// result is accurate to rounding.
template <Nonlinearity F>
GridFunction solve_state(const F& f, const ControlPair& u, const Vec& y0, const TimeGrid& grid,
                         const SolverOptions& opt = {}) {
  detail::require_controls(u, grid, "solve_state");
  const Index n = u.dim();
  if (y0.size() != n) {
    throw std::invalid_argument("solve_state: initial value has the wrong dimension");
  }
  const int steps = grid.steps();
  const double b1 = grid.lag_weight(1);
  GridFunction y = GridFunction::zeros(n, grid.nodes(), Role::state);
  Mat rhs = Mat::Zero(n, grid.nodes());  // f(a y + l) at each node
  y.at(0) = y0;
  Vec base(n);
  for (int j = 1; j <= steps; ++j) {
    base = y0;
    for (int i = 1; i < j; ++i) {
      base += grid.lag_weight(j - i + 1) * rhs.col(i);
    }
    const auto a_j = u.a_at(j);
    const double factor = b1 * f.lipschitz() * a_j.cwiseAbs().rowwise().sum().maxCoeff();
    detail::check_contraction(factor, j, opt, "solve_state");
    Vec cur = y.at(j - 1);
    bool converged = false;
    for (int it = 0; it < opt.max_iterations; ++it) {
      const Vec z = a_j * cur + u.ell.col(j);
      Vec next(n);
      for (Index i = 0; i < n; ++i) next(i) = base(i) + b1 * f.value(z(i));
      const double change = (next - cur).lpNorm<Eigen::Infinity>();
      cur = std::move(next);
      if (!cur.allFinite()) break;
      if (change <= opt.tolerance * std::max(1.0, cur.lpNorm<Eigen::Infinity>())) {
        converged = true;
        break;
      }
    }
    if constexpr (SmoothNonlinearity<F>) {
      // Newton polish: residual r(y) = y - base - b1 f(a y + l)
      for (int it = 0; it < 3 && cur.allFinite(); ++it) {
        const Vec z = a_j * cur + u.ell.col(j);
        Vec res(n), slope(n);
        for (Index i = 0; i < n; ++i) {
          res(i) = cur(i) - base(i) - b1 * f.value(z(i));
          slope(i) = f.derivative(z(i));
        }
        const Mat jac = Mat::Identity(n, n) - b1 * slope.asDiagonal() * Mat(a_j);
        cur -= jac.partialPivLu().solve(res);
      }
    }
    if (!cur.allFinite()) {
      throw NonFiniteError("solve_state: non-finite state at node " + std::to_string(j));
    }
    if (!converged) {
      throw ContractionFailure("solve_state: fixed point did not converge at node " +
                               std::to_string(j));
    }
    y.at(j) = cur;
    const Vec z = a_j * cur + u.ell.col(j);
    for (Index i = 0; i < n; ++i) rhs(i, j) = f.value(z(i));
  }
  return y;
}

/// max over pairs of ||S(u1) - S(u2)||_inf / (||a1 - a2||_inf + ||l1 - l2||_inf);
/// identical pairs contribute 0.
template <Nonlinearity F>
double lipschitz_probe(const F& f, const std::vector<std::pair<ControlPair, ControlPair>>& pairs,
                       const Vec& y0, const TimeGrid& grid) {
  double worst = 0.0;
  for (const auto& [u1, u2] : pairs) {
    const double input = sup_norm(u1.a - u2.a) + sup_norm(u1.ell - u2.ell);
    const double output =
        sup_norm(solve_state(f, u1, y0, grid).values - solve_state(f, u2, y0, grid).values);
    if (input == 0.0) {
      continue;
    }
    worst = std::max(worst, output / input);
  }
  return worst;
}

/// Discrete L^zeta norm of the forward difference quotients,
/// (h sum_j |(y_{j+1} - y_j)/h|^zeta)^(1/zeta). Stays bounded under refinement
/// exactly when y is in W^{1,zeta}.
inline double difference_quotient_diagnostic(const GridFunction& y, double zeta,
                                             const TimeGrid& grid) {
  detail::require_nodal(y.values, grid, "difference_quotient_diagnostic");
  if (!(zeta >= 1.0)) {
    throw std::invalid_argument("difference_quotient_diagnostic: zeta must be >= 1");
  }
  const double h = grid.step();
  double acc = 0.0;
  for (Index j = 0; j + 1 < y.count(); ++j) {
    acc += std::pow((y.at(j + 1) - y.at(j)).norm() / h, zeta);
  }
  return std::pow(h * acc, 1.0 / zeta);
}

/// True iff f(a(0) y0 + l(0)) vanishes, the compatibility condition under
/// which the strong solution is more regular at t = 0.
template <Nonlinearity F>
bool compatibility_check(const F& f, const ControlPair& u, const Vec& y0, double tol = 1e-12) {
  const Vec z = u.a_at(0) * y0 + u.ell.col(0);
  double worst = 0.0;
  for (Index i = 0; i < z.size(); ++i) worst = std::max(worst, std::abs(f.value(z(i))));
  return worst <= tol;
}

/// Gronwall-type majorant c1 E_gamma(L M T^gamma) of ||y||_inf, with
/// M >= ||a||_inf, ||l||_inf and c1 = ||y0|| + (|f(0)| + L M) T^gamma / Gamma(gamma+1).
template <Nonlinearity F>
double state_bound(const F& f, const ControlPair& u, const Vec& y0, const TimeGrid& grid) {
  double m = sup_norm(u.ell);
  for (Index j = 0; j < u.nodes(); ++j) {
    m = std::max(m, u.a_at(j).cwiseAbs().rowwise().sum().maxCoeff());
  }
  const double lip = f.lipschitz();
  const double mass = operator_norm_bound(grid);
  const double c1 = y0.lpNorm<Eigen::Infinity>() + (std::abs(f.value(0.0)) + lip * m) * mass;
  return c1 * mittag_leffler(grid.gamma(),
                             lip * m * std::pow(grid.final_time(), grid.gamma()));
}

}  // namespace fracctl
