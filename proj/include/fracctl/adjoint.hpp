#pragma once

/// \file
/// Backward adjoint equation
///   p(t) = (T-t)^(gamma-1)/Gamma(gamma) grad_g + I_{T-}^gamma [a^T lambda](t),  t < T,
/// and the multiplier lambda.
///
/// Adjoint data is panel-indexed: column m belongs to [t_m, t_{m+1}], the
/// right kernel is anchored at t_m and lambda_m pairs with the state and
/// controls at t_{m+1} (where the forward rule samples its integrand). The
/// singular term enters as its exact average over the panel. With these
/// conventions the scheme is the exact discrete adjoint of the forward
/// product-rectangle rule, so
///   h sum_m lambda_m . (da_{m+1} y_{m+1} + dl_{m+1}) = grad_g . dy_N
/// holds to rounding for the mollified problem.

#include <fracctl/sensitivity.hpp>

namespace fracctl {

struct AdjointPair {
  GridFunction p;       // adjoint-interior, N panels
  GridFunction lambda;  // adjoint-interior, N panels
  Vec singular_coefficient;  // grad g(y(T))
};

/// (1/h) int_{t_m}^{t_{m+1}} (T - t)^(gamma-1)/Gamma(gamma) dt.
inline double singular_panel_average(const TimeGrid& grid, int m) {
  return grid.lag_weight(grid.steps() - m) / grid.step();
}

/// Point value (T - t_m)^(gamma-1)/Gamma(gamma), m < N.
inline double singular_point_value(const TimeGrid& grid, int m) {
  const double gm = grid.gamma();
  return std::pow(grid.final_time() - grid.node(m), gm - 1.0) / std::tgamma(gm);
}

/// Nodal L^2 density of a panel multiplier: column 0 is zero, column j holds
/// lambda_{j-1}. Pairs through l2_pairing.
inline Mat nodal_density(const GridFunction& lambda) {
  Mat out = Mat::Zero(lambda.dim(), lambda.count() + 1);
  out.rightCols(lambda.count()) = lambda.values;
  return out;
}

/// Nodal density of da -> <lambda, da y>: column j holds vec(lambda_{j-1} y_j^T).
inline Mat matrix_density(const GridFunction& lambda, const GridFunction& y) {
  const Index n = lambda.dim();
  Mat out = Mat::Zero(n * n, lambda.count() + 1);
  for (Index j = 1; j <= lambda.count(); ++j) {
    const Mat outer = lambda.at(j - 1) * y.at(j).transpose();
    out.col(j) = Eigen::Map<const Vec>(outer.data(), n * n);
  }
  return out;
}

/// <lambda, v>: h sum_m lambda_m . v_{m+1}.
inline double multiplier_pairing(const GridFunction& lambda, const Mat& v, const TimeGrid& grid) {
  return l2_pairing(nodal_density(lambda), v, grid);
}

/// Backward sweep for the adjoint of the mollified problem,
///   p_m = avg_m(singular) grad_g + sum_{k>=m} b_{k-m+1} a_{k+1}^T lambda_k,
///   lambda_m = f_eps'(z_{m+1}) p_m.
/// The k = m term makes each step implicit; it is linear and solved directly.
inline AdjointPair solve_adjoint_smoothed(const MollifiedActivation& fe, const GridFunction& y,
                                          const ControlPair& u, const Vec& grad_g,
                                          const TimeGrid& grid, const SolverOptions& opt = {}) {
  detail::require_controls(u, grid, "solve_adjoint_smoothed");
  detail::require_nodal(y.values, grid, "solve_adjoint_smoothed");
  const Index n = u.dim();
  if (grad_g.size() != n) {
    throw std::invalid_argument("solve_adjoint_smoothed: gradient has the wrong dimension");
  }
  const int steps = grid.steps();
  const double b1 = grid.lag_weight(1);
  AdjointPair out{GridFunction::zeros(n, steps, Role::adjoint_interior),
                  GridFunction::zeros(n, steps, Role::adjoint_interior), grad_g};
  Mat carried = Mat::Zero(n, steps);  // a_{k+1}^T lambda_k
  for (int m = steps - 1; m >= 0; --m) {
    Vec rhs = singular_panel_average(grid, m) * grad_g;
    for (int k = m + 1; k < steps; ++k) rhs += grid.lag_weight(k - m + 1) * carried.col(k);
    const Mat a_next = u.a_at(m + 1);
    detail::check_contraction(b1 * fe.lipschitz() * a_next.cwiseAbs().colwise().sum().maxCoeff(),
                              m, opt, "solve_adjoint_smoothed");
    const Vec slope = fe.derivative(Vec(detail::argument_at(u, y.values, m + 1)));
    const Mat lhs = Mat::Identity(n, n) - b1 * a_next.transpose() * slope.asDiagonal();
    const Vec p = lhs.partialPivLu().solve(rhs);
    if (!p.allFinite()) {
      throw NonFiniteError("solve_adjoint_smoothed: non-finite adjoint on panel " +
                           std::to_string(m));
    }
    out.p.at(m) = p;
    out.lambda.at(m) = slope.cwiseProduct(p);
    carried.col(m) = a_next.transpose() * out.lambda.at(m);
  }
  return out;
}

/// p given lambda: the right-hand side of the adjoint equation evaluated
/// with the same panel conventions as solve_adjoint_smoothed.
inline GridFunction reconstruct_adjoint(const ControlPair& u, const GridFunction& lambda,
                                        const Vec& grad_g, const TimeGrid& grid) {
  detail::require_controls(u, grid, "reconstruct_adjoint");
  const int steps = grid.steps();
  if (lambda.count() != steps || lambda.dim() != u.dim()) {
    throw std::invalid_argument("reconstruct_adjoint: multiplier must hold one column per panel");
  }
  Mat carried(u.dim(), steps);
  for (int k = 0; k < steps; ++k) carried.col(k) = u.a_at(k + 1).transpose() * lambda.at(k);
  GridFunction p = GridFunction::zeros(u.dim(), steps, Role::adjoint_interior);
  for (int m = 0; m < steps; ++m) {
    Vec v = singular_panel_average(grid, m) * grad_g;
    for (int k = m; k < steps; ++k) v += grid.lag_weight(k - m + 1) * carried.col(k);
    p.at(m) = v;
  }
  return p;
}

struct Residual {
  double absolute = 0.0;
  double relative = 0.0;
};

/// Discrete L^r distance between a candidate adjoint and the adjoint rebuilt
/// from its multiplier. Zero iff (p, lambda) satisfy the adjoint equation.
inline Residual certificate_adjoint(const AdjointPair& candidate, const ControlPair& u,
                                    const Vec& grad_g, const TimeGrid& grid, double r) {
  const GridFunction rebuilt = reconstruct_adjoint(u, candidate.lambda, grad_g, grid);
  const double abs_res = panel_lr_norm(candidate.p.values - rebuilt.values, grid.step(), r);
  const double scale = std::max(panel_lr_norm(candidate.p.values, grid.step(), r),
                                panel_lr_norm(rebuilt.values, grid.step(), r));
  return {abs_res, scale > 0.0 ? abs_res / scale : abs_res};
}

}  // namespace fracctl
