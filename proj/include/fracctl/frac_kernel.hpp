#pragma once

/// \file
/// Discrete fractional calculus on a uniform grid: Riemann-Liouville
/// integrals of order gamma in (0, 1], their product-rectangle weights and the
/// Mittag-Leffler function.

#include <fracctl/errors.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace fracctl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Uniform grid t_j = j*h on [0, T] together with the fractional order.
///
/// The left kernel (t - s)^(gamma-1) / Gamma(gamma) is integrated exactly
/// over every panel, so the weight that node j gives to panel [t_k, t_{k+1}]
/// only depends on the lag m = j - k:
///
///   w[j][k] = lag_weight(j - k) = h^gamma ((j-k)^gamma - (j-k-1)^gamma) / Gamma(gamma+1).
///
/// The weights are applied to the integrand at the right end t_{k+1}. The
/// same numbers are the exact panel integrals of the right kernel
/// (s - t)^(gamma-1) / Gamma(gamma).
class TimeGrid {
 public:
  TimeGrid(double final_time, int steps, double gamma)
      : final_time_(final_time), steps_(steps), gamma_(gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0)) {
      throw std::invalid_argument("fractional order must lie in (0, 1], got " +
                                  std::to_string(gamma));
    }
    if (steps < 1) {
      throw std::invalid_argument("time grid needs at least one step");
    }
    if (!(final_time > 0.0) || !std::isfinite(final_time)) {
      throw std::invalid_argument("final time must be positive and finite");
    }
    step_ = final_time_ / steps_;
    gamma_plus_one_ = std::tgamma(gamma_ + 1.0);
    lag_weights_.assign(static_cast<std::size_t>(steps_) + 1, 0.0);
    const double scale = std::pow(step_, gamma_) / gamma_plus_one_;
    lag_weights_[1] = scale;
    for (int m = 2; m <= steps_; ++m) {
      // m^g - (m-1)^g without cancellation
      const double md = m;
      const double diff = -std::pow(md, gamma_) * std::expm1(gamma_ * std::log1p(-1.0 / md));
      lag_weights_[static_cast<std::size_t>(m)] = scale * diff;
    }
  }

  double final_time() const { return final_time_; }
  int steps() const { return steps_; }
  double gamma() const { return gamma_; }
  double step() const { return step_; }
  Index nodes() const { return steps_ + 1; }

  double node(int j) const { return j == steps_ ? final_time_ : j * step_; }

  /// Exact integral of the kernel over one panel at lag m >= 1.
  double lag_weight(int m) const { return lag_weights_[static_cast<std::size_t>(m)]; }

  /// Weight of panel [t_k, t_{k+1}] in the integral up to t_j (k < j).
  double weight(int j, int k) const { return lag_weight(j - k); }

  /// t_j^gamma / Gamma(gamma + 1): the integral of the kernel over [0, t_j].
  double kernel_mass(int j) const { return std::pow(node(j), gamma_) / gamma_plus_one_; }

  double gamma_plus_one() const { return gamma_plus_one_; }

 private:
  double final_time_;
  int steps_;
  double gamma_;
  double step_ = 0.0;
  double gamma_plus_one_ = 1.0;
  std::vector<double> lag_weights_;
};

/// What a sampled function stands for. Adjoint-interior functions hold one
/// column per panel (N columns) because the adjoint is singular at t = T.
enum class Role { state, sensitivity, adjoint_interior, control };

/// Samples of an R^n valued function; column j is the value at node j
/// (or panel j for adjoint-interior data).
struct GridFunction {
  Mat values;
  Role role = Role::state;

  GridFunction() = default;
  GridFunction(Mat v, Role r) : values(std::move(v)), role(r) {}

  static GridFunction zeros(Index dim, Index count, Role r) {
    return {Mat::Zero(dim, count), r};
  }

  Index dim() const { return values.rows(); }
  Index count() const { return values.cols(); }
  auto at(Index j) const { return values.col(j); }
  auto at(Index j) { return values.col(j); }

  bool all_finite() const { return values.allFinite(); }
};

namespace detail {

inline void require_nodal(const Mat& values, const TimeGrid& grid, const char* what) {
  if (values.cols() != grid.nodes()) {
    throw std::invalid_argument(std::string(what) + ": expected " +
                                std::to_string(grid.nodes()) + " nodal samples, got " +
                                std::to_string(values.cols()));
  }
}

}  // namespace detail

/// (I_{0+}^gamma phi)(t_j) with the product-rectangle rule. Node 0 maps to 0.
inline GridFunction left_frac_integral(const GridFunction& phi, const TimeGrid& grid) {
  detail::require_nodal(phi.values, grid, "left_frac_integral");
  const int n_steps = grid.steps();
  GridFunction out = GridFunction::zeros(phi.dim(), grid.nodes(), phi.role);
  for (int j = 1; j <= n_steps; ++j) {
    for (int k = 0; k < j; ++k) {
      out.values.col(j) += grid.lag_weight(j - k) * phi.values.col(k + 1);
    }
  }
  return out;
}

/// (I_{T-}^gamma psi)(t_j): right kernel integrated from t_j to T, panel
/// [t_k, t_{k+1}] sampled at its left end. The value at t_N is 0.
inline GridFunction right_frac_integral(const GridFunction& psi, const TimeGrid& grid) {
  detail::require_nodal(psi.values, grid, "right_frac_integral");
  const int n_steps = grid.steps();
  GridFunction out = GridFunction::zeros(psi.dim(), grid.nodes(), psi.role);
  for (int j = 0; j < n_steps; ++j) {
    for (int k = j; k < n_steps; ++k) {
      out.values.col(j) += grid.lag_weight(k + 1 - j) * psi.values.col(k);
    }
  }
  return out;
}

/// Bound T^gamma / (gamma Gamma(gamma)) on the norm of I_{0+}^gamma and
/// I_{T-}^gamma in every L^p, p in [1, inf].
inline double operator_norm_bound(const TimeGrid& grid) {
  return std::pow(grid.final_time(), grid.gamma()) / grid.gamma_plus_one();
}

/// Integrability exponent r in [1, 1/(1-gamma)) used for discrete L^r norms
/// of the adjoint and multiplier. Defaults to the midpoint of the admissible
/// interval; for gamma = 1 every r works and 2 is returned.
inline double default_lr_exponent(double gamma) {
  if (gamma >= 1.0) {
    return 2.0;
  }
  return 0.5 * (1.0 + 1.0 / (1.0 - gamma));
}

/// Discrete L^r norm of panel data: (h * sum_m |v_m|^r)^(1/r) with |.| the
/// Euclidean norm of each column.
inline double panel_lr_norm(const Mat& values, double step, double r) {
  double acc = 0.0;
  for (Index m = 0; m < values.cols(); ++m) {
    acc += std::pow(values.col(m).norm(), r);
  }
  return std::pow(step * acc, 1.0 / r);
}

/// Max-norm over all samples and components.
inline double sup_norm(const Mat& values) {
  return values.size() == 0 ? 0.0 : values.cwiseAbs().maxCoeff();
}

/// Mittag-Leffler function E_{gamma,1}(z) = sum_k z^k / Gamma(k gamma + 1).
///
/// Kahan-compensated series, stopped when a term drops below 1e-16 of the
/// partial sum or after 400 terms. Admitted range |z| <= 50. Inside that range
/// the call still throws RangeError when the series does not converge within
/// 400 terms or, for z < 0, when cancellation among large terms would push the
/// absolute error above 1e-12. Positive arguments are accurate to a few ulps
/// relative.
inline double mittag_leffler(double gamma, double z) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("mittag_leffler: order must lie in (0, 1]");
  }
  if (!(std::abs(z) <= 50.0)) {
    throw RangeError("mittag_leffler: |z| <= 50 required, got z = " + std::to_string(z));
  }
  constexpr int kMaxTerms = 400;
  constexpr double kRelStop = 1e-16;
  constexpr double kAbsTarget = 1e-12;
  double sum = 1.0;
  double carry = 0.0;
  double largest = 1.0;
  if (z == 0.0) {
    return 1.0;
  }
  const double log_abs = std::log(std::abs(z));
  for (int k = 1; k < kMaxTerms; ++k) {
    const double arg = k * gamma + 1.0;
    double magnitude;
    if (arg < 170.0) {
      magnitude = std::pow(std::abs(z), k) / std::tgamma(arg);
    } else {
      magnitude = std::exp(k * log_abs - std::lgamma(arg));
    }
    const double term = (z < 0.0 && (k % 2 == 1)) ? -magnitude : magnitude;
    if (!std::isfinite(term)) {
      throw RangeError("mittag_leffler: series overflow at z = " + std::to_string(z));
    }
    largest = std::max(largest, magnitude);
    const double y = term - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
    if (magnitude < kRelStop * std::abs(sum) || magnitude < 1e-300) {
      // alternating series: rounding of the largest term survives in the sum
      if (z < 0.0 && largest * 4.0 * std::numeric_limits<double>::epsilon() > kAbsTarget) {
        throw RangeError("mittag_leffler: cancellation exceeds accuracy target at z = " +
                         std::to_string(z));
      }
      return sum;
    }
  }
  throw RangeError("mittag_leffler: series did not converge in 400 terms at z = " +
                   std::to_string(z));
}

}  // namespace fracctl
