#pragma once

/// \file
/// Componentwise non-smooth activations with exact directional derivatives,
/// and their mollified C^1 counterparts.

#include <fracctl/frac_kernel.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fracctl {

/// Left and right derivative f'_-(z) = -f'(z; -1), f'_+(z) = f'(z; 1).
struct OneSided {
  double minus = 0.0;
  double plus = 0.0;
};

/// Lipschitz, directionally differentiable scalar non-linearity applied
/// componentwise.
///
/// Every kind except smooth_tanh is piecewise linear and stored as
///   f(x) = offset + s_0 x + sum_k (s_k - s_{k-1}) max(0, x - kink_k)
/// with sorted kinks and K+1 slopes.
class Activation {
 public:
  enum class Kind { relu, max_shift, abs, smooth_tanh, piecewise_linear };

  static Activation relu() {
    Activation f = piecewise_linear({0.0}, {0.0, 1.0}, 0.0);
    f.kind_ = Kind::relu;
    f.name_ = "relu";
    return f;
  }

  /// max(c, z)
  static Activation max_shift(double c) {
    Activation f = piecewise_linear({c}, {0.0, 1.0}, std::max(c, 0.0));
    f.kind_ = Kind::max_shift;
    f.name_ = "max_shift";
    f.shift_ = c;
    return f;
  }

  static Activation abs() {
    Activation f = piecewise_linear({0.0}, {-1.0, 1.0}, 0.0);
    f.kind_ = Kind::abs;
    f.name_ = "abs";
    return f;
  }

  static Activation leaky_relu(double alpha) {
    Activation f = piecewise_linear({0.0}, {alpha, 1.0}, 0.0);
    f.name_ = "leaky_relu";
    return f;
  }

  static Activation identity() {
    Activation f = piecewise_linear({}, {1.0}, 0.0);
    f.name_ = "identity";
    return f;
  }

  static Activation smooth_tanh() {
    Activation f;
    f.kind_ = Kind::smooth_tanh;
    f.name_ = "smooth_tanh";
    f.lipschitz_ = 1.0;
    return f;
  }

  /// Breakpoint/slope table: slopes[k] holds on (kinks[k-1], kinks[k]).
  static Activation piecewise_linear(std::vector<double> kinks, std::vector<double> slopes,
                                     double value_at_zero) {
    if (slopes.size() != kinks.size() + 1) {
      throw std::invalid_argument("piecewise_linear: need exactly one more slope than kinks");
    }
    if (!std::is_sorted(kinks.begin(), kinks.end()) ||
        std::adjacent_find(kinks.begin(), kinks.end()) != kinks.end()) {
      throw std::invalid_argument("piecewise_linear: kinks must be strictly increasing");
    }
    Activation f;
    f.kind_ = Kind::piecewise_linear;
    f.name_ = "piecewise_linear";
    f.kinks_ = std::move(kinks);
    f.slopes_ = std::move(slopes);
    double at_zero = f.slopes_.front() * 0.0;
    for (std::size_t k = 0; k < f.kinks_.size(); ++k) {
      at_zero += f.jump(k) * std::max(0.0, -f.kinks_[k]);
    }
    f.offset_ = value_at_zero - at_zero;
    f.lipschitz_ = 0.0;
    for (double s : f.slopes_) {
      f.lipschitz_ = std::max(f.lipschitz_, std::abs(s));
    }
    if (f.lipschitz_ == 0.0) {
      f.lipschitz_ = 1.0;  // constant map; any positive constant bounds it
    }
    return f;
  }

  Kind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  double shift() const { return shift_; }
  double lipschitz() const { return lipschitz_; }
  std::span<const double> kinks() const { return kinks_; }
  std::span<const double> slopes() const { return slopes_; }
  double offset() const { return offset_; }
  bool is_piecewise_linear() const { return kind_ != Kind::smooth_tanh; }

  double value(double z) const {
    if (kind_ == Kind::smooth_tanh) {
      return std::tanh(z);
    }
    double v = offset_ + slopes_.front() * z;
    for (std::size_t k = 0; k < kinks_.size(); ++k) {
      v += jump(k) * std::max(0.0, z - kinks_[k]);
    }
    return v;
  }

  /// f'(z; dz). Arguments within kink_band of a kink are treated as sitting
  /// on it; the one-sided slope is picked by the sign of dz.
  double dir_derivative(double z, double dz, double kink_band = 0.0) const {
    if (kind_ == Kind::smooth_tanh) {
      const double t = std::tanh(z);
      return (1.0 - t * t) * dz;
    }
    if (const auto k = kink_near(z, kink_band); k >= 0) {
      const auto ku = static_cast<std::size_t>(k);
      return dz >= 0.0 ? slopes_[ku + 1] * dz : slopes_[ku] * dz;
    }
    return slope_at(z) * dz;
  }

  OneSided one_sided(double z, double kink_band = 0.0) const {
    return {-dir_derivative(z, -1.0, kink_band), dir_derivative(z, 1.0, kink_band)};
  }

  /// Index of a kink with |z - kink| <= band, or -1.
  int kink_near(double z, double band) const {
    for (std::size_t k = 0; k < kinks_.size(); ++k) {
      if (std::abs(z - kinks_[k]) <= band) {
        return static_cast<int>(k);
      }
    }
    return -1;
  }

  /// Classical derivative away from the kinks.
  double slope_at(double z) const {
    if (kind_ == Kind::smooth_tanh) {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    const auto it = std::upper_bound(kinks_.begin(), kinks_.end(), z);
    return slopes_[static_cast<std::size_t>(it - kinks_.begin())];
  }

  Vec value(const Vec& z) const { return z.unaryExpr([this](double x) { return value(x); }); }

  Vec dir_derivative(const Vec& z, const Vec& dz, double kink_band = 0.0) const {
    Vec out(z.size());
    for (Index i = 0; i < z.size(); ++i) {
      out(i) = dir_derivative(z(i), dz(i), kink_band);
    }
    return out;
  }

  /// Build from a CLI name: relu, abs, identity, smooth_tanh, max_shift,
  /// leaky_relu (param is c resp. alpha).
  static Activation from_name(std::string_view name, double param = 0.0) {
    if (name == "relu") return relu();
    if (name == "abs") return abs();
    if (name == "identity") return identity();
    if (name == "smooth_tanh") return smooth_tanh();
    if (name == "max_shift") return max_shift(param);
    if (name == "leaky_relu") return leaky_relu(param);
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
  }

 private:
  double jump(std::size_t k) const { return slopes_[k + 1] - slopes_[k]; }

  Kind kind_ = Kind::piecewise_linear;
  std::string name_;
  std::vector<double> kinks_;
  std::vector<double> slopes_{1.0};
  double offset_ = 0.0;
  double shift_ = 0.0;
  double lipschitz_ = 1.0;
};

/// The bump phi(s) = 15/16 (1 - s^2)^2 on [-1, 1] and the integrals needed for
/// closed-form convolutions with piecewise-linear functions.
namespace mollifier {

inline double density(double s) {
  if (s <= -1.0 || s >= 1.0) return 0.0;
  const double q = 1.0 - s * s;
  return 15.0 / 16.0 * q * q;
}

/// int_{-1}^x phi
inline double mass_below(double x) {
  if (x <= -1.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return 0.5 + 15.0 / 16.0 * (x - 2.0 * x * x * x / 3.0 + x * x * x * x * x / 5.0);
}

/// int_{-1}^x s phi(s) ds = -(5/32)(1 - x^2)^3
inline double first_moment_below(double x) {
  if (x <= -1.0 || x >= 1.0) return 0.0;
  const double q = 1.0 - x * x;
  return -5.0 / 32.0 * q * q * q;
}

/// (max(0, .) * phi)(u) = int max(0, u - s) phi(s) ds
inline double smoothed_ramp(double u) {
  if (u <= -1.0) return 0.0;
  if (u >= 1.0) return u;
  return u * mass_below(u) - first_moment_below(u);
}

/// derivative of smoothed_ramp
inline double smoothed_ramp_slope(double u) { return mass_below(u); }

}  // namespace mollifier

/// f_eps(z) = int f(z - eps s) phi(s) ds. C^1 with |f_eps'| <= L, equal to f
/// at distance >= eps from every kink of a piecewise-linear f.
class MollifiedActivation {
 public:
  MollifiedActivation(Activation base, double eps) : base_(std::move(base)), eps_(eps) {
    if (!(eps > 0.0) || !std::isfinite(eps)) {
      throw std::invalid_argument("mollification width must be positive");
    }
  }

  const Activation& base() const { return base_; }
  double eps() const { return eps_; }
  double lipschitz() const { return base_.lipschitz(); }

  double value(double z) const {
    if (base_.is_piecewise_linear()) {
      const auto kinks = base_.kinks();
      const auto slopes = base_.slopes();
      // phi is even, so the linear part is reproduced exactly
      double v = base_.offset() + slopes.front() * z;
      for (std::size_t k = 0; k < kinks.size(); ++k) {
        v += (slopes[k + 1] - slopes[k]) * eps_ * mollifier::smoothed_ramp((z - kinks[k]) / eps_);
      }
      return v;
    }
    return integrate([&](double s) { return base_.value(z - eps_ * s) * mollifier::density(s); });
  }

  double derivative(double z) const {
    if (base_.is_piecewise_linear()) {
      const auto kinks = base_.kinks();
      const auto slopes = base_.slopes();
      double d = slopes.front();
      for (std::size_t k = 0; k < kinks.size(); ++k) {
        d += (slopes[k + 1] - slopes[k]) * mollifier::smoothed_ramp_slope((z - kinks[k]) / eps_);
      }
      return d;
    }
    return integrate(
        [&](double s) { return base_.slope_at(z - eps_ * s) * mollifier::density(s); });
  }

  double dir_derivative(double z, double dz, double /*kink_band*/ = 0.0) const {
    return derivative(z) * dz;
  }

  Vec value(const Vec& z) const { return z.unaryExpr([this](double x) { return value(x); }); }
  Vec derivative(const Vec& z) const {
    return z.unaryExpr([this](double x) { return derivative(x); });
  }

 private:
  template <class F>
  static double integrate(F&& integrand) {
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, -1.0, 1.0,
                                                                          15, 1e-12);
  }

  Activation base_;
  double eps_;
};

/// Anything the state and sensitivity solvers can step with.
template <class F>
concept Nonlinearity = requires(const F& f, double z, double dz) {
  { f.value(z) } -> std::convertible_to<double>;
  { f.dir_derivative(z, dz, 0.0) } -> std::convertible_to<double>;
  { f.lipschitz() } -> std::convertible_to<double>;
};

/// Nonlinearities with a classical derivative (the mollified family).
template <class F>
concept SmoothNonlinearity = Nonlinearity<F> && requires(const F& f, double z) {
  { f.derivative(z) } -> std::convertible_to<double>;
};

}  // namespace fracctl
