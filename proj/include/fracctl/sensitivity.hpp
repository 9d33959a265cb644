#pragma once

/// \file
/// Directional derivative dy = S'(u; du) of the control-to-state map:
///   dy(t) = I_{0+}^gamma [ f'(a y + l; a dy + da y + dl) ](t).

#include <fracctl/state_solver.hpp>

namespace fracctl {

/// Solve the linearized equation on the grid of `y`:
///   dy_j = sum_{k<j} w[j][k] f'(z_{k+1}; a_{k+1} dy_{k+1} + da_{k+1} y_{k+1} + dl_{k+1})
/// with z = a y + l. Per-step fixed point, contracting by the Lipschitz bound
/// of f'(z; .). Arguments within kink_band of a kink are differentiated as if
/// they sat on it.
template <Nonlinearity F>
GridFunction solve_sensitivity(const F& f, const GridFunction& y, const ControlPair& u,
                               const ControlPair& du, const TimeGrid& grid,
                               double kink_band = 0.0, const SolverOptions& opt = {}) {
  detail::require_controls(u, grid, "solve_sensitivity");
  detail::require_controls(du, grid, "solve_sensitivity");
  detail::require_nodal(y.values, grid, "solve_sensitivity");
  const Index n = u.dim();
  const int steps = grid.steps();
  const double b1 = grid.lag_weight(1);
  GridFunction dy = GridFunction::zeros(n, grid.nodes(), Role::sensitivity);
  Mat rhs = Mat::Zero(n, grid.nodes());
  Vec base(n);
  for (int j = 1; j <= steps; ++j) {
    base.setZero();
    for (int i = 1; i < j; ++i) base += grid.lag_weight(j - i + 1) * rhs.col(i);
    const auto a_j = u.a_at(j);
    const double factor = b1 * f.lipschitz() * a_j.cwiseAbs().rowwise().sum().maxCoeff();
    detail::check_contraction(factor, j, opt, "solve_sensitivity");
    const Vec z = detail::argument_at(u, y.values, j);
    const Vec forcing = du.a_at(j) * y.at(j) + du.ell.col(j);
    Vec cur = dy.at(j - 1);
    bool converged = false;
    for (int it = 0; it < opt.max_iterations; ++it) {
      const Vec dir = a_j * cur + forcing;
      Vec next(n);
      for (Index i = 0; i < n; ++i) next(i) = base(i) + b1 * f.dir_derivative(z(i), dir(i), kink_band);
      const double change = (next - cur).lpNorm<Eigen::Infinity>();
      cur = std::move(next);
      if (!cur.allFinite()) break;
      if (change <= opt.tolerance * std::max(1.0, cur.lpNorm<Eigen::Infinity>())) {
        converged = true;
        break;
      }
    }
    if (!cur.allFinite()) {
      throw NonFiniteError("solve_sensitivity: non-finite value at node " + std::to_string(j));
    }
    if (!converged) {
      throw ContractionFailure("solve_sensitivity: fixed point did not converge at node " +
                               std::to_string(j));
    }
    dy.at(j) = cur;
    const Vec dir = a_j * cur + forcing;
    for (Index i = 0; i < n; ++i) rhs(i, j) = f.dir_derivative(z(i), dir(i), kink_band);
  }
  return dy;
}

/// Gateaux derivative of the mollified solution map. The step equation is
/// linear here, (I - b_1 D_j a_j) dy_j = rhs with D_j = diag f_eps'(z_j), and
/// is solved directly so the map is linear in (da, dl) to rounding.
inline GridFunction smoothed_sensitivity(const MollifiedActivation& fe, const GridFunction& y,
                                         const ControlPair& u, const ControlPair& du,
                                         const TimeGrid& grid, const SolverOptions& opt = {}) {
  detail::require_controls(u, grid, "smoothed_sensitivity");
  detail::require_controls(du, grid, "smoothed_sensitivity");
  detail::require_nodal(y.values, grid, "smoothed_sensitivity");
  const Index n = u.dim();
  const int steps = grid.steps();
  const double b1 = grid.lag_weight(1);
  GridFunction dy = GridFunction::zeros(n, grid.nodes(), Role::sensitivity);
  Mat rhs = Mat::Zero(n, grid.nodes());
  for (int j = 1; j <= steps; ++j) {
    Vec base = Vec::Zero(n);
    for (int i = 1; i < j; ++i) base += grid.lag_weight(j - i + 1) * rhs.col(i);
    const Mat a_j = u.a_at(j);
    detail::check_contraction(b1 * fe.lipschitz() * a_j.cwiseAbs().rowwise().sum().maxCoeff(), j,
                              opt, "smoothed_sensitivity");
    const Vec slope = fe.derivative(Vec(detail::argument_at(u, y.values, j)));
    const Vec forcing = du.a_at(j) * y.at(j) + du.ell.col(j);
    const Mat lhs = Mat::Identity(n, n) - b1 * slope.asDiagonal() * a_j;
    const Vec cur = lhs.partialPivLu().solve(base + b1 * slope.cwiseProduct(forcing));
    if (!cur.allFinite()) {
      throw NonFiniteError("smoothed_sensitivity: non-finite value at node " + std::to_string(j));
    }
    dy.at(j) = cur;
    rhs.col(j) = slope.cwiseProduct(a_j * cur + forcing);
  }
  return dy;
}

}  // namespace fracctl
