#pragma once

/// \file
/// Audit of a candidate optimum (a, l, y) with adjoint data (p, lambda):
/// constraint qualification, the strong-stationarity system
///   p        = (T-t)^(gamma-1)/Gamma(gamma) grad_g + I_{T-}^gamma [a^T lambda],
///   lambda_i in [p_i f'_-(z_i), p_i f'_+(z_i)],
///   (a, da)_{H^1} + <lambda, da y> = 0         for all da,
///   (l, dl)_{H^1} + <lambda, dl>  >= 0         for dl in cone(K - l),
/// and sampled B-stationarity
///   grad_g . S'(u; du)(T) + (a, da)_{H^1} + (l, dl)_{H^1} >= 0.
///
/// Arguments within kink_band of a kink are treated as sitting on it; the
/// audit pipeline ties the band to the last homotopy eps.

#include <fracctl/optimizer.hpp>

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>

namespace fracctl {

struct CqResult {
  bool satisfied = false;
  int index = -1;                  // first component bounded away from zero
  std::vector<double> min_abs;     // min_j |y_i(t_j)| per component
};

inline CqResult check_cq(const GridFunction& y, double tol = 1e-8) {
  CqResult out;
  for (Index i = 0; i < y.dim(); ++i) {
    const double m = y.values.row(i).cwiseAbs().minCoeff();
    out.min_abs.push_back(m);
    if (!out.satisfied && m > tol) {
      out.satisfied = true;
      out.index = static_cast<int>(i);
    }
  }
  return out;
}

struct InclusionResult {
  double violation = 0.0;       // max distance of lambda to the sorted interval
  double relative = 0.0;        // violation / max |p|
  double sign_violation = 0.0;  // max of p f'_- - p f'_+ over kink nodes, clipped at 0
  double kkt_fraction = 1.0;    // off-kink panels where lambda = p f' holds
  int kink_panels = 0;          // component-panels treated as sitting on a kink
};

/// lambda_m pairs with the argument z at t_{m+1}.
inline InclusionResult check_inclusion(const Activation& f, const GridFunction& y,
                                       const ControlPair& u, const AdjointPair& adj,
                                       double kink_band = 0.0, double kkt_tol = 1e-8) {
  InclusionResult out;
  const Index n = u.dim();
  const Index panels = adj.lambda.count();
  const double p_scale = std::max(adj.p.values.cwiseAbs().maxCoeff(), 1e-300);
  int off_kink = 0, off_kink_ok = 0;
  for (Index m = 0; m < panels; ++m) {
    const Vec z = detail::argument_at(u, y.values, m + 1);
    for (Index i = 0; i < n; ++i) {
      const double p = adj.p.values(i, m);
      const double lam = adj.lambda.values(i, m);
      const OneSided d = f.one_sided(z(i), kink_band);
      const double lo = std::min(p * d.minus, p * d.plus);
      const double hi = std::max(p * d.minus, p * d.plus);
      out.violation = std::max(out.violation, std::max({lo - lam, lam - hi, 0.0}));
      if (f.kink_near(z(i), kink_band) >= 0) {
        ++out.kink_panels;
        out.sign_violation = std::max(out.sign_violation, p * d.minus - p * d.plus);
      } else {
        ++off_kink;
        if (std::abs(lam - p * d.plus) <= kkt_tol * std::max(1.0, std::abs(p))) ++off_kink_ok;
      }
    }
  }
  out.relative = out.violation / p_scale;
  out.kkt_fraction = off_kink > 0 ? static_cast<double>(off_kink_ok) / off_kink : 1.0;
  return out;
}

struct GradientSystemResult {
  double grad_a_residual = 0.0;
  double grad_a_relative = 0.0;
  double vi_violation = 0.0;  // min over sampled cone directions, normalized by ||dl||_{H^1}
  int vi_worst_sample = -1;
};

inline GradientSystemResult check_gradient_system(const ControlPair& u, const GridFunction& y,
                                                  const GridFunction& lambda,
                                                  const BoxConstraint& box, const TimeGrid& grid,
                                                  int samples = 200, std::uint64_t seed = 0) {
  GradientSystemResult out;
  const Mat lifted = riesz_lift(matrix_density(lambda, y), grid);
  out.grad_a_residual = h1_norm(u.a + lifted, grid);
  const double scale = std::max(h1_norm(u.a, grid), h1_norm(lifted, grid));
  out.grad_a_relative = scale > 0.0 ? out.grad_a_residual / scale : out.grad_a_residual;
  out.vi_violation = std::numeric_limits<double>::infinity();
  const auto dirs = cone_directions(u.ell, box, samples, seed);
  for (std::size_t s = 0; s < dirs.size(); ++s) {
    const double norm = h1_norm(dirs[s], grid);
    if (norm == 0.0) continue;
    const double v =
        (h1_inner(u.ell, dirs[s], grid) + multiplier_pairing(lambda, dirs[s], grid)) / norm;
    if (v < out.vi_violation) {
      out.vi_violation = v;
      out.vi_worst_sample = static_cast<int>(s);
    }
  }
  if (out.vi_worst_sample < 0) out.vi_violation = 0.0;  // cone is {0}
  return out;
}

/// Left side of the B-stationarity inequality in one direction.
inline double b_stationarity_value(const Activation& f, const ControlPair& u,
                                   const GridFunction& y, const ControlPair& du,
                                   const ControlProblem& prob, double kink_band = 0.0) {
  const GridFunction dy = solve_sensitivity(f, y, u, du, prob.grid, kink_band);
  const int N = prob.grid.steps();
  return prob.cost.gradient(y.at(N)).dot(dy.at(N)) + h1_inner(u, du, prob.grid);
}

struct BStationarityResult {
  double min_value = 0.0;  // normalized by ||(da, dl)||_{H^1}
  int worst_sample = -1;
  int samples = 0;
  std::uint64_t seed = 0;
};

/// Sampled directions: da Gaussian nodal, dl from cone_directions.
inline std::vector<ControlPair> b_stationarity_directions(const ControlPair& u,
                                                          const BoxConstraint& box, int samples,
                                                          std::uint64_t seed) {
  const auto dls = cone_directions(u.ell, box, samples, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ControlPair> dirs;
  dirs.reserve(dls.size());
  for (const auto& dl : dls) {
    ControlPair d{Mat(u.a.rows(), u.a.cols()), dl};
    for (Index k = 0; k < d.a.size(); ++k) d.a(k) = normal(rng);
    dirs.push_back(std::move(d));
  }
  return dirs;
}

inline BStationarityResult check_b_stationarity(const Activation& f, const ControlPair& u,
                                                const ControlProblem& prob, int samples,
                                                std::uint64_t seed, double kink_band = 0.0,
                                                int threads = 1) {
  const GridFunction y = solve_state(f, u, prob.y0, prob.grid);
  const auto dirs = b_stationarity_directions(u, prob.box, samples, seed);
  std::vector<double> values(dirs.size(), 0.0);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t s; (s = next++) < dirs.size();) {
      try {
        values[s] = b_stationarity_value(f, u, y, dirs[s], prob, kink_band) /
                    h1_norm(dirs[s], prob.grid);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int t = std::max(1, std::min<int>(threads, static_cast<int>(dirs.size())));
  std::vector<std::thread> pool;
  for (int k = 1; k < t; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  BStationarityResult out;
  out.samples = static_cast<int>(dirs.size());
  out.seed = seed;
  out.min_value = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < values.size(); ++s) {
    if (values[s] < out.min_value) {
      out.min_value = values[s];
      out.worst_sample = static_cast<int>(s);
    }
  }
  if (values.empty()) out.min_value = 0.0;
  return out;
}

struct CertifyTolerances {
  double adjoint_relative = 1e-6;
  double grad_a = 1e-6;  // relative
  double inclusion = 1e-6;  // relative to max |p|
  double sign = 0.0;
  double vi = -1e-6;
  double b_stationarity = -1e-5;
  int samples = 200;
  double kappa = 2.0;
  std::uint64_t seed = 0;
  double lr_exponent = 0.0;  // 0: default for gamma
};

struct StationarityReport {
  CqResult cq;
  Residual adjoint;
  InclusionResult inclusion;
  GradientSystemResult gradient;
  BStationarityResult b_stationarity;
  bool compatible = false;
  double eps = 0.0;
  double kink_band = 0.0;
  double lr_exponent = 2.0;
  double a_norm = 0.0;
  double lambda_norm = 0.0;
  CertifyTolerances tol;

  bool strong_ok() const {
    return cq.satisfied && adjoint.relative <= tol.adjoint_relative &&
           gradient.grad_a_relative <= tol.grad_a && inclusion.relative <= tol.inclusion &&
           inclusion.sign_violation <= tol.sign && gradient.vi_violation >= tol.vi;
  }
  bool b_ok() const { return b_stationarity.min_value >= tol.b_stationarity; }
  bool passed() const { return strong_ok() && b_ok(); }
};

/// Full audit of controls u for the non-smooth problem. The multiplier is
/// the mollified adjoint at the final eps; the state, terminal gradient and
/// directional derivatives are those of the non-smooth problem.
inline StationarityReport certify(const Activation& f, const ControlPair& u,
                                  const ControlProblem& prob, double eps,
                                  const CertifyTolerances& tol = {}, int threads = 1) {
  const TimeGrid& grid = prob.grid;
  StationarityReport rep;
  rep.tol = tol;
  rep.eps = eps;
  rep.kink_band = tol.kappa * eps;
  rep.lr_exponent = tol.lr_exponent > 0.0 ? tol.lr_exponent : default_lr_exponent(grid.gamma());

  const MollifiedActivation fe(f, eps);
  const GridFunction y_eps = solve_state(fe, u, prob.y0, grid);
  const GridFunction y = solve_state(f, u, prob.y0, grid);
  const Vec grad_g = prob.cost.gradient(y.at(grid.steps()));
  const AdjointPair adj =
      solve_adjoint_smoothed(fe, y_eps, u, prob.cost.gradient(y_eps.at(grid.steps())), grid);

  rep.cq = check_cq(y);
  rep.compatible = compatibility_check(f, u, prob.y0);
  rep.adjoint = certificate_adjoint(adj, u, grad_g, grid, rep.lr_exponent);
  rep.inclusion = check_inclusion(f, y, u, adj, rep.kink_band);
  rep.gradient = check_gradient_system(u, y, adj.lambda, prob.box, grid, tol.samples, tol.seed);
  rep.b_stationarity =
      check_b_stationarity(f, u, prob, tol.samples, tol.seed, rep.kink_band, threads);
  rep.a_norm = h1_norm(u.a, grid);
  rep.lambda_norm = panel_lr_norm(adj.lambda.values, grid.step(), rep.lr_exponent);
  return rep;
}

inline nlohmann::json to_json(const StationarityReport& r) {
  using nlohmann::json;
  json j;
  j["cq"] = {{"satisfied", r.cq.satisfied}, {"index", r.cq.index}, {"min_abs", r.cq.min_abs}};
  j["adjoint_residual"] = {{"absolute", r.adjoint.absolute}, {"relative", r.adjoint.relative}};
  j["inclusion_violation"] = {{"absolute", r.inclusion.violation},
                              {"relative", r.inclusion.relative}};
  j["sign_condition"] = r.inclusion.sign_violation;
  j["kkt_consistent"] = r.inclusion.kkt_fraction;
  j["kink_panels"] = r.inclusion.kink_panels;
  j["grad_a_residual"] = {{"absolute", r.gradient.grad_a_residual},
                          {"relative", r.gradient.grad_a_relative}};
  j["vi_violation"] = {{"value", r.gradient.vi_violation},
                       {"worst_sample", r.gradient.vi_worst_sample}};
  j["b_stationarity_min"] = {{"value", r.b_stationarity.min_value},
                             {"worst_sample", r.b_stationarity.worst_sample},
                             {"samples", r.b_stationarity.samples},
                             {"seed", r.b_stationarity.seed}};
  j["compatible"] = r.compatible;
  j["eps"] = r.eps;
  j["kink_band"] = r.kink_band;
  j["lr_exponent"] = r.lr_exponent;
  j["norms"] = {{"a_h1", r.a_norm}, {"lambda_lr", r.lambda_norm}};
  j["tolerances"] = {{"adjoint_relative", r.tol.adjoint_relative},
                     {"grad_a", r.tol.grad_a},
                     {"inclusion", r.tol.inclusion},
                     {"sign", r.tol.sign},
                     {"vi", r.tol.vi},
                     {"b_stationarity", r.tol.b_stationarity}};
  j["strong_stationary"] = r.strong_ok();
  j["b_stationary"] = r.b_ok();
  j["passed"] = r.passed();
  return j;
}

}  // namespace fracctl
