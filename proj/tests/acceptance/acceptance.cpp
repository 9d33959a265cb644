// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <fracctl/fracctl.hpp>

#include "../oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

using namespace fracctl;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (budget_s > 0 && secs > budget_s) {
    o.pass = false;
    o.detail += " (over time budget)";
  }
  if (!o.pass) ++failures;
  std::printf("%s criterion %d: %s [%.2fs] %s\n", o.pass ? "PASS" : "FAIL", id, title, secs,
              o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double fitted_order(const std::vector<double>& hs, const std::vector<double>& errs) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    mx += std::log(hs[i]);
    my += std::log(errs[i]);
  }
  mx /= hs.size();
  my /= hs.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    sxy += (std::log(hs[i]) - mx) * (std::log(errs[i]) - my);
    sxx += (std::log(hs[i]) - mx) * (std::log(hs[i]) - mx);
  }
  return sxy / sxx;
}

ControlPair scalar_controls(const TimeGrid& g, double a, double l) {
  return ControlPair::constant(Mat::Constant(1, 1, a), Vec::Constant(1, l), g.nodes());
}

ControlPair random_controls(Index n, const TimeGrid& g, std::mt19937_64& rng, double sa,
                            double sl, double ml = 0.0) {
  std::normal_distribution<double> nd(0.0, 1.0);
  ControlPair u = ControlPair::zeros(n, g.nodes());
  for (Index k = 0; k < u.a.size(); ++k) u.a(k) = sa * nd(rng);
  for (Index k = 0; k < u.ell.size(); ++k) u.ell(k) = ml + sl * nd(rng);
  return u;
}

ControlProblem benchmark(int N = 128) {
  const TimeGrid g(1.0, N, 0.5);
  return {g, Vec::Ones(2), QuadraticTerminalCost::uniform((Vec(2) << 2.0, 0.5).finished()),
          BoxConstraint::constant(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0), g.nodes())};
}

// Shared by criteria 6-8.
HomotopyResult& homotopy() {
  static HomotopyResult res = [] {
    const ControlProblem prob = benchmark();
    return run_homotopy(Activation::relu(), initial_controls(prob), prob, HomotopyConfig{});
  }();
  return res;
}

}  // namespace

int main() {
  report(1, "power rule and weight sums", 1.0, [] {
    double worst_rel = 0.0, worst_sum = 0.0;
    for (double gm : {0.3, 0.5, 0.7}) {
      const TimeGrid g(1.0, 512, gm);
      for (int k : {0, 1}) {
        GridFunction phi = GridFunction::zeros(1, g.nodes(), Role::state);
        for (int j = 0; j <= 512; ++j) phi.values(0, j) = std::pow(g.node(j), k);
        const auto r = left_frac_integral(phi, g);
        const double c = std::tgamma(k + 1.0) / std::tgamma(k + 1.0 + gm);
        double err = 0.0, scale = 0.0;
        for (int j = 0; j <= 512; ++j) {
          const double exact = c * std::pow(g.node(j), k + gm);
          err = std::max(err, std::abs(r.values(0, j) - exact));
          scale = std::max(scale, std::abs(exact));
        }
        worst_rel = std::max(worst_rel, err / scale);
      }
      for (int j = 1; j <= 512; ++j) {
        double s = 0.0;
        for (int k = 0; k < j; ++k) s += g.weight(j, k);
        worst_sum = std::max(worst_sum, std::abs(s - g.kernel_mass(j)));
      }
    }
    return Outcome{worst_rel <= 2e-3 && worst_sum <= 1e-12,
                   fmt("max relative error %.3g, weight-sum error %.3g", worst_rel, worst_sum)};
  });

  report(2, "Mittag-Leffler benchmark convergence", 5.0, [] {
    bool ok = true;
    std::string detail;
    for (double gm : {0.3, 0.5, 0.7}) {
      std::vector<double> hs, errs;
      for (int N : {64, 128, 256, 512, 1024}) {
        const TimeGrid g(1.0, N, gm);
        const auto y = solve_state(Activation::identity(), scalar_controls(g, 1.0, 0.0), Vec::Ones(1), g);
        double err = 0.0;
        for (int j = 0; j <= N; ++j) {
          err = std::max(err, std::abs(y.values(0, j) - mittag_leffler(gm, std::pow(g.node(j), gm))));
        }
        if (!errs.empty() && err >= errs.back()) ok = false;
        hs.push_back(g.step());
        errs.push_back(err);
      }
      const double order = fitted_order(hs, errs);
      ok = ok && order >= 0.9 * gm;
      detail += fmt("gamma %.1f order %.3f; ", gm, order);
    }
    return Outcome{ok, detail};
  });

  report(3, "gamma = 1 limit", 0.0, [] {
    const TimeGrid g(1.0, 1024, 1.0);
    const auto y = solve_state(Activation::identity(), scalar_controls(g, 1.0, 0.0), Vec::Ones(1), g);
    double ie = 1.0;
    for (int j = 1; j <= 1024; ++j) ie /= (1.0 - g.step());
    const double e1 = std::abs(y.values(0, 1024) - std::exp(1.0));
    const double e2 = std::abs(y.values(0, 1024) - ie);
    return Outcome{e1 <= 1e-2 && e2 <= 1e-10,
                   fmt("|y - e| = %.3g, |y - implicit Euler| = %.3g", e1, e2)};
  });

  report(4, "directional derivative of the ReLU solution map", 0.0, [] {
    std::mt19937_64 rng(404);
    bool ok = true;
    double worst = 0.0;
    for (int p = 0; p < 5; ++p) {
      const TimeGrid g(1.0, 256, 0.5);
      ControlPair u = random_controls(3, g, rng, 0.1, 0.2, 1.0);
      u.a = u.a.cwiseAbs();
      u.ell = u.ell.cwiseAbs() + Mat::Constant(3, g.nodes(), 0.5);
      const ControlPair du = random_controls(3, g, rng, 1.0, 1.0);
      const Vec y0 = Vec::Ones(3);
      const auto f = Activation::relu();
      const auto y = solve_state(f, u, y0, g);
      // off-kink check: every argument strictly positive
      for (Index j = 1; j < g.nodes(); ++j) {
        if (detail::argument_at(u, y.values, j).minCoeff() <= 0.0) ok = false;
      }
      const auto dy = solve_sensitivity(f, y, u, du, g);
      double prev = 1e300;
      for (double tau : {1e-2, 1e-3, 1e-4}) {
        const auto yt = solve_state(f, u + tau * du, y0, g);
        const double err = sup_norm((yt.values - y.values) / tau - dy.values);
        if (!(err < prev)) ok = false;
        prev = err;
      }
      worst = std::max(worst, prev);
    }
    return Outcome{ok && worst <= 1e-3, fmt("worst error at tau=1e-4: %.3g", worst)};
  });

  report(5, "adjoint duality and reduced gradient", 10.0, [] {
    std::mt19937_64 rng(505);
    double worst_dual = 0.0, worst_grad = 0.0;
    bool ok = true;
    for (int p = 0; p < 3; ++p) {
      const TimeGrid g(1.0, 128, 0.3 + 0.2 * p);
      const MollifiedActivation fe(p == 1 ? Activation::abs() : Activation::relu(), 0.3);
      const Vec y0 = Vec::Constant(2, 0.5);
      const ControlProblem prob{g, y0,
                                QuadraticTerminalCost::uniform((Vec(2) << 1.0, -0.5).finished()),
                                BoxConstraint::unbounded(2, g.nodes())};
      const ControlPair u = random_controls(2, g, rng, 0.4, 0.4);
      const auto y = solve_state(fe, u, y0, g);
      const Vec grad = prob.cost.gradient(y.at(g.steps()));
      const auto adj = solve_adjoint_smoothed(fe, y, u, grad, g);
      const ControlPair G = reduced_gradient(fe, u, prob);
      for (int k = 0; k < 5; ++k) {
        const ControlPair d = random_controls(2, g, rng, 1.0, 1.0);
        const auto dy = smoothed_sensitivity(fe, y, u, d, g);
        Mat forcing(2, g.nodes());
        for (Index j = 0; j < g.nodes(); ++j) forcing.col(j) = d.a_at(j) * y.at(j) + d.ell.col(j);
        const double dual = std::abs(multiplier_pairing(adj.lambda, forcing, g) - grad.dot(dy.at(g.steps())));
        const double norms = (1.0 + grad.norm()) * (1.0 + sup_norm(forcing)) * (1.0 + sup_norm(dy.values));
        worst_dual = std::max(worst_dual, dual / norms);
        if (dual > 5.0 * g.step() * norms) ok = false;
        const double tau = 1e-5;
        const double fd =
            (reduced_objective(fe, u + tau * d, prob) - reduced_objective(fe, u - tau * d, prob)) / (2 * tau);
        const double rel = std::abs(h1_inner(G, d, g) - fd) / std::max(std::abs(fd), 1e-12);
        worst_grad = std::max(worst_grad, rel);
        if (rel > 1e-4) ok = false;
      }
    }
    return Outcome{ok, fmt("duality residual / norms %.3g, gradient relative error %.3g", worst_dual,
                           worst_grad)};
  });

  report(6, "homotopy drift and multiplier bound", 60.0, [] {
    const auto& h = homotopy().history;
    const std::size_t K = h.size();
    const bool drift_ok = K >= 4 && h[K - 1].drift < h[K - 2].drift && h[K - 2].drift < h[K - 3].drift;
    double ratio = 0.0;
    for (const auto& r : h) ratio = std::max(ratio, r.lambda_norm / h[0].lambda_norm);
    return Outcome{drift_ok && ratio <= 10.0,
                   fmt("final drifts %.3g > %.3g > %.3g", h[K - 3].drift, h[K - 2].drift, h[K - 1].drift) +
                       fmt(", max lambda-norm ratio %.3g", ratio)};
  });

  report(7, "strong-stationarity certificate", 0.0, [] {
    const auto& res = homotopy();
    const auto rep = certify(Activation::relu(), res.controls, benchmark(), res.final_eps);
    const bool ok = rep.cq.satisfied && rep.adjoint.relative <= 1e-6 &&
                    rep.gradient.grad_a_relative <= 1e-6 && rep.inclusion.relative <= 1e-6 &&
                    rep.inclusion.sign_violation == 0.0 && rep.gradient.vi_violation >= -1e-6;
    return Outcome{ok, fmt("adjoint %.3g, grad_a %.3g, inclusion %.3g", rep.adjoint.relative,
                           rep.gradient.grad_a_relative, rep.inclusion.relative) +
                           fmt(", sign %.3g, vi %.3g, cq index %.0f", rep.inclusion.sign_violation,
                               rep.gradient.vi_violation, rep.cq.index)};
  });

  report(8, "strong implies B-stationarity", 0.0, [] {
    const auto& res = homotopy();
    const ControlProblem prob = benchmark();
    const double band = 2.0 * res.final_eps;
    const auto good = check_b_stationarity(Activation::relu(), res.controls, prob, 200, 8, band);
    ControlPair moved = res.controls;
    moved.ell.row(1).array() += 0.3;
    const auto bad = check_b_stationarity(Activation::relu(), moved, prob, 200, 8, band);
    return Outcome{good.min_value >= -1e-5 && bad.min_value < 0.0,
                   fmt("certified min %.3g, perturbed min %.3g", good.min_value, bad.min_value)};
  });

  report(9, "difference-quotient regularity diagnostic", 0.0, [] {
    // benchmark state for the computed controls, resampled on finer grids
    const auto& res = homotopy();
    const TimeGrid coarse(1.0, 128, 0.5);
    std::vector<double> bounded, witness;
    const double zeta_low = 1.5, zeta_high = 2.5;  // 1/(1-gamma) = 2
    for (int N : {128, 256, 512, 1024}) {
      const TimeGrid g(1.0, N, 0.5);
      ControlPair u = ControlPair::zeros(2, g.nodes());
      const int r = N / 128;
      for (int j = 0; j <= N; ++j) {
        const int k = std::min(j / r, 127);
        const double w = static_cast<double>(j - k * r) / r;
        u.a.col(j) = (1 - w) * res.controls.a.col(k) + w * res.controls.a.col(k + 1);
        u.ell.col(j) = (1 - w) * res.controls.ell.col(k) + w * res.controls.ell.col(k + 1);
      }
      const auto y = solve_state(Activation::relu(), u, Vec::Ones(2), g);
      bounded.push_back(difference_quotient_diagnostic(y, zeta_low, g));
      GridFunction t_gamma = GridFunction::zeros(1, g.nodes(), Role::state);
      for (int j = 0; j <= N; ++j) t_gamma.values(0, j) = std::sqrt(g.node(j));
      witness.push_back(difference_quotient_diagnostic(t_gamma, zeta_high, g));
    }
    (void)coarse;
    bool ok = true;
    // bounded: the increments of B^zeta shrink under refinement
    for (std::size_t k = 2; k < bounded.size(); ++k) {
      const double d1 = std::pow(bounded[k - 1], zeta_low) - std::pow(bounded[k - 2], zeta_low);
      const double d2 = std::pow(bounded[k], zeta_low) - std::pow(bounded[k - 1], zeta_low);
      if (!(std::abs(d2) < std::abs(d1))) ok = false;
    }
    for (std::size_t k = 1; k < witness.size(); ++k) {
      if (!(witness[k] > witness[k - 1])) ok = false;
    }
    ok = ok && witness.back() / witness.front() >= 1.1;
    return Outcome{ok, fmt("B(zeta=1.5): %.4g .. %.4g", bounded.front(), bounded.back()) +
                           fmt(", witness B(zeta=2.5): %.4g .. %.4g", witness.front(), witness.back())};
  });

  report(10, "H1 box projection", 0.0, [] {
    std::mt19937_64 rng(1010);
    std::uniform_int_distribution<int> steps(2, 8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd(0.0, 1.5);
    double worst = 0.0, worst_idem = 0.0, worst_vi = -1e300;
    for (int trial = 0; trial < 100; ++trial) {
      const TimeGrid g(1.0, steps(rng), 0.5);
      const Index nodes = g.nodes();
      Mat lo(1, nodes), hi(1, nodes), w(1, nodes);
      for (Index j = 0; j < nodes; ++j) {
        lo(0, j) = -0.5 - u(rng);
        hi(0, j) = lo(0, j) + 2.0 * u(rng);
        w(0, j) = nd(rng);
      }
      const BoxConstraint box{lo, hi};
      const Mat p = project_K(w, box, g);
      const Vec ref = oracle::brute_force_projection(oracle::dense_h1_gram(nodes, g.step()),
                                                     w.row(0).transpose(), lo.row(0).transpose(),
                                                     hi.row(0).transpose());
      worst = std::max(worst, (p.row(0).transpose() - ref).cwiseAbs().maxCoeff());
      worst_idem = std::max(worst_idem, (project_K(p, box, g) - p).cwiseAbs().maxCoeff());
      for (int k = 0; k < 20; ++k) {
        Mat v(1, nodes);
        for (Index j = 0; j < nodes; ++j) v(0, j) = lo(0, j) + u(rng) * (hi(0, j) - lo(0, j));
        worst_vi = std::max(worst_vi, h1_inner(w - p, v - p, g));
      }
    }
    return Outcome{worst <= 1e-9 && worst_idem <= 1e-12 && worst_vi <= 1e-10,
                   fmt("oracle gap %.3g, idempotence %.3g, max VI value %.3g", worst, worst_idem,
                       worst_vi)};
  });

  std::printf("%s: %d criterion failure(s)\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
