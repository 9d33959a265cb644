#pragma once

/// \file
/// Smoothing homotopy for
///   min g(y(T)) + 1/2 ||a||^2_{H^1} + 1/2 ||l||^2_{H^1},  l in K,
/// where y solves the state equation with the non-smooth f. Each stage
/// replaces f by f_eps and runs projected gradient in the H^1 metric,
/// warm-started from the previous stage.

#include <fracctl/adjoint.hpp>
#include <fracctl/csv.hpp>

#include <algorithm>
#include <limits>
#include <optional>
#include <ostream>

namespace fracctl {

/// g(y) = 1/2 sum_i w_i (y_i - target_i)^2
struct QuadraticTerminalCost {
  Vec target;
  Vec weight;

  static QuadraticTerminalCost uniform(Vec target) {
    Vec w = Vec::Ones(target.size());
    return {std::move(target), std::move(w)};
  }

  double value(const Vec& y) const {
    return 0.5 * (weight.array() * (y - target).array().square()).sum();
  }
  Vec gradient(const Vec& y) const { return weight.cwiseProduct(y - target); }
};

struct ControlProblem {
  TimeGrid grid;
  Vec y0;
  QuadraticTerminalCost cost;
  BoxConstraint box;
};

struct ArmijoRule {
  double c = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 40;
};

/// The eps schedule eps_k = eps0 * eps_factor^k is a heuristic; no rate for
/// eps -> 0 is known.
struct HomotopyConfig {
  double eps0 = 1.0;
  double eps_factor = 0.5;
  int stages = 12;
  std::optional<ControlPair> prox_anchor;
  ArmijoRule armijo;
  double stage_tolerance = 1e-7;  // H^1 norm of the projected-gradient residual
  int max_iterations = 5000;
  double lr_exponent = 0.0;  // 0: default_lr_exponent(gamma)

  void validate() const {
    if (!(eps0 > 0.0)) throw std::invalid_argument("homotopy: eps0 must be positive");
    if (!(eps_factor > 0.0 && eps_factor < 1.0)) {
      throw std::invalid_argument("homotopy: eps_factor must lie in (0, 1)");
    }
    if (stages < 1) throw std::invalid_argument("homotopy: need at least one stage");
  }

  double eps_at(int stage) const { return eps0 * std::pow(eps_factor, stage); }
  double final_eps() const { return eps_at(stages - 1); }
};

/// Objective, state, adjoint and H^1 gradient at one control.
struct Evaluation {
  double objective = 0.0;
  GridFunction state;
  AdjointPair adjoint;
  ControlPair gradient;
};

/// Reduced objective of the mollified problem (plus the proximal term when
/// an anchor is given).
inline double reduced_objective(const MollifiedActivation& fe, const ControlPair& u,
                                const ControlProblem& prob,
                                const ControlPair* anchor = nullptr) {
  const GridFunction y = solve_state(fe, u, prob.y0, prob.grid);
  double j = prob.cost.value(y.at(prob.grid.steps())) + 0.5 * h1_inner(u, u, prob.grid);
  if (anchor != nullptr) {
    const ControlPair d = u - *anchor;
    j += 0.5 * h1_inner(d, d, prob.grid);
  }
  return j;
}

/// Objective with its H^1-Riesz gradient:
///   grad_a = a + lift(lambda y^T),  grad_l = l + lift(lambda)
/// (+ u - anchor with a proximal term).
inline Evaluation evaluate(const MollifiedActivation& fe, const ControlPair& u,
                           const ControlProblem& prob, const ControlPair* anchor = nullptr) {
  const TimeGrid& grid = prob.grid;
  Evaluation ev;
  ev.state = solve_state(fe, u, prob.y0, grid);
  const Vec y_final = ev.state.at(grid.steps());
  ev.objective = prob.cost.value(y_final) + 0.5 * h1_inner(u, u, grid);
  ev.adjoint = solve_adjoint_smoothed(fe, ev.state, u, prob.cost.gradient(y_final), grid);
  ev.gradient.a = u.a + riesz_lift(matrix_density(ev.adjoint.lambda, ev.state), grid);
  ev.gradient.ell = u.ell + riesz_lift(nodal_density(ev.adjoint.lambda), grid);
  if (anchor != nullptr) {
    const ControlPair d = u - *anchor;
    ev.objective += 0.5 * h1_inner(d, d, grid);
    ev.gradient += d;
  }
  return ev;
}

inline ControlPair reduced_gradient(const MollifiedActivation& fe, const ControlPair& u,
                                    const ControlProblem& prob,
                                    const ControlPair* anchor = nullptr) {
  return evaluate(fe, u, prob, anchor).gradient;
}

/// u - P(u - G): a is unconstrained, l is projected onto K in the H^1 metric.
inline ControlPair projected_step(const ControlPair& u, const ControlPair& grad, double step,
                                  const ControlProblem& prob) {
  ControlPair next;
  next.a = u.a - step * grad.a;
  next.ell = project_K(u.ell - step * grad.ell, prob.box, prob.grid);
  return next;
}

inline double projected_gradient_residual(const ControlPair& u, const ControlPair& grad,
                                          const ControlProblem& prob) {
  return h1_norm(u - projected_step(u, grad, 1.0, prob), prob.grid);
}

struct StageResult {
  ControlPair controls;
  Evaluation eval;
  double residual = 0.0;
  int iterations = 0;
  bool rounding_floor = false;  // stopped because Armijo could no longer resolve descent
  std::vector<double> objective_trace;
};

/// Projected gradient with Armijo backtracking in the H^1 metric. Trial
/// steps start from the Barzilai-Borwein length; every accepted step
/// satisfies J(u+) <= J(u) + c (G, u+ - u)_{H^1}.
inline StageResult solve_stage(const MollifiedActivation& fe, const ControlPair& start,
                               const ControlProblem& prob, const HomotopyConfig& cfg) {
  const TimeGrid& grid = prob.grid;
  const ControlPair* anchor = cfg.prox_anchor ? &*cfg.prox_anchor : nullptr;
  StageResult res;
  res.controls = start;
  res.controls.ell = project_K(start.ell, prob.box, grid);
  res.eval = evaluate(fe, res.controls, prob, anchor);
  res.objective_trace.push_back(res.eval.objective);
  double step = 1.0;
  std::optional<ControlPair> prev_u, prev_g;
  for (res.iterations = 0;; ++res.iterations) {
    res.residual = projected_gradient_residual(res.controls, res.eval.gradient, prob);
    if (res.residual <= cfg.stage_tolerance || res.iterations >= cfg.max_iterations) break;
    if (prev_u) {
      const ControlPair du = res.controls - *prev_u;
      const ControlPair dg = res.eval.gradient - *prev_g;
      const double curv = h1_inner(du, dg, grid);
      step = curv > 0.0 ? std::clamp(h1_inner(du, du, grid) / curv, 1e-6, 1e6) : 1.0;
    }
    bool accepted = false;
    for (int bt = 0; bt <= cfg.armijo.max_backtracks; ++bt, step *= cfg.armijo.backtrack) {
      ControlPair trial = projected_step(res.controls, res.eval.gradient, step, prob);
      const double decrease = h1_inner(res.eval.gradient, trial - res.controls, grid);
      Evaluation ev;
      try {
        ev = evaluate(fe, trial, prob, anchor);
      } catch (const ContractionFailure&) {
        continue;  // step left the region where the grid resolves the dynamics
      }
      if (ev.objective <= res.eval.objective + cfg.armijo.c * decrease) {
        prev_u = res.controls;
        prev_g = res.eval.gradient;
        res.controls = std::move(trial);
        res.eval = std::move(ev);
        res.objective_trace.push_back(res.eval.objective);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Descent below rounding of the objective cannot be certified by
      // Armijo; accept the point when the residual is already at that floor.
      const double floor = 10.0 * std::sqrt(std::numeric_limits<double>::epsilon()) *
                           std::max(1.0, std::abs(res.eval.objective));
      if (res.residual <= floor) {
        res.rounding_floor = true;
        break;
      }
      throw LineSearchFailure("solve_stage: Armijo backtracking exhausted at residual " +
                              std::to_string(res.residual));
    }
  }
  return res;
}

struct StageRecord {
  int stage = 0;
  double eps = 0.0;
  double objective = 0.0;
  double residual = 0.0;
  double lambda_norm = 0.0;
  double drift = 0.0;  // H^1 distance to the previous stage's controls
  int iterations = 0;
};

struct HomotopyResult {
  ControlPair controls;
  GridFunction state;  // mollified state of the last stage
  AdjointPair adjoint;
  std::vector<StageRecord> history;
  double final_eps = 0.0;
};

/// a = 0, l = midpoint of the box (0 where unbounded).
inline ControlPair initial_controls(const ControlProblem& prob) {
  ControlPair u = ControlPair::zeros(prob.y0.size(), prob.grid.nodes());
  u.ell = prob.box.midpoint();
  return u;
}

inline HomotopyResult run_homotopy(const Activation& f, const ControlPair& start,
                                   const ControlProblem& prob, const HomotopyConfig& cfg) {
  cfg.validate();
  const double r = cfg.lr_exponent > 0.0 ? cfg.lr_exponent : default_lr_exponent(prob.grid.gamma());
  HomotopyResult out;
  ControlPair current = start;
  for (int k = 0; k < cfg.stages; ++k) {
    const MollifiedActivation fe(f, cfg.eps_at(k));
    StageResult st = solve_stage(fe, current, prob, cfg);
    StageRecord rec;
    rec.stage = k;
    rec.eps = fe.eps();
    rec.objective = st.eval.objective;
    rec.residual = st.residual;
    rec.lambda_norm = panel_lr_norm(st.eval.adjoint.lambda.values, prob.grid.step(), r);
    rec.drift = k == 0 ? h1_norm(st.controls - start, prob.grid)
                       : h1_norm(st.controls - current, prob.grid);
    rec.iterations = st.iterations;
    out.history.push_back(rec);
    current = std::move(st.controls);
    out.state = std::move(st.eval.state);
    out.adjoint = std::move(st.eval.adjoint);
    out.final_eps = fe.eps();
  }
  out.controls = std::move(current);
  return out;
}

inline void write_history_csv(std::ostream& os, const std::vector<StageRecord>& history) {
  os << "stage,eps,objective,residual,lambda_norm,drift,iterations\n";
  for (const auto& r : history) {
    os << r.stage << ',' << csv::num(r.eps) << ',' << csv::num(r.objective) << ','
       << csv::num(r.residual) << ',' << csv::num(r.lambda_norm) << ',' << csv::num(r.drift)
       << ',' << r.iterations << '\n';
  }
}

}  // namespace fracctl
