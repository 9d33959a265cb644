// fracctl: command-line front end for the fractional control library.
//
//   fracctl solve        --config C --out DIR [--controls DIR]
//   fracctl optimize     --config C --out DIR [--seed S] [--threads T]
//   fracctl certify      --config C --controls DIR --out DIR [--seed S] [--threads T]
//   fracctl convergence  --config C --out DIR
//
// Exit codes: 0 success, 2 configuration error, 3 solver failure,
// 4 certificate failure.

#include <fracctl/config.hpp>
#include <fracctl/fracctl.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace fracctl;

namespace {

constexpr int kConfigError = 2;
constexpr int kSolverError = 3;
constexpr int kCertificateError = 4;

struct Options {
  std::string config;
  std::string out = ".";
  std::string controls;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

Config read_config(const Options& opt) {
  Config c = opt.config.empty() ? config_from_json(nlohmann::json::object()) : load_config(opt.config);
  if (opt.seed) c.certify.seed = *opt.seed;
  return c;
}

std::ofstream open_out(const Options& opt, const std::string& name) {
  fs::create_directories(opt.out);
  std::ofstream os(fs::path(opt.out) / name);
  if (!os) throw std::runtime_error("cannot write " + (fs::path(opt.out) / name).string());
  return os;
}

nlohmann::json meta(const Config& c) {
  return {{"final_time", c.final_time},
          {"steps", c.steps},
          {"gamma", c.gamma},
          {"dim", c.dim()},
          {"activation", c.activation},
          {"activation_param", c.activation_param}};
}

ControlPair load_controls(const std::string& dir, const Config& c) {
  ControlPair u{csv::read_nodal_file((fs::path(dir) / "a.csv").string()),
                csv::read_nodal_file((fs::path(dir) / "ell.csv").string())};
  const Index n = c.dim();
  if (u.a.rows() != n * n || u.ell.rows() != n || u.a.cols() != c.steps + 1 ||
      u.ell.cols() != c.steps + 1) {
    throw ConfigError("controls in " + dir + " do not match the configured grid and dimension");
  }
  return u;
}

void write_controls(const Options& opt, const Config& c, const ControlPair& u) {
  const TimeGrid grid = c.grid();
  auto a = open_out(opt, "a.csv");
  csv::write_nodal(a, grid, u.a, "a");
  auto l = open_out(opt, "ell.csv");
  csv::write_nodal(l, grid, u.ell, "ell");
}

void write_state(const Options& opt, const Config& c, const GridFunction& y) {
  auto os = open_out(opt, "state.csv");
  csv::write_nodal(os, c.grid(), y.values, "y");
}

int report_out(const Options& opt, const StationarityReport& rep) {
  auto os = open_out(opt, "report.json");
  os << to_json(rep).dump(2) << '\n';
  std::cout << "strong stationarity: " << (rep.strong_ok() ? "ok" : "FAILED")
            << ", B-stationarity: " << (rep.b_ok() ? "ok" : "FAILED") << '\n';
  return rep.passed() ? 0 : kCertificateError;
}

int cmd_solve(const Options& opt) {
  const Config c = read_config(opt);
  const ControlProblem prob = c.problem();
  const ControlPair u = opt.controls.empty() ? initial_controls(prob) : load_controls(opt.controls, c);
  const GridFunction y = solve_state(c.make_activation(), u, prob.y0, prob.grid);
  write_state(opt, c, y);
  auto os = open_out(opt, "state_meta.json");
  nlohmann::json m = meta(c);
  m["compatible"] = compatibility_check(c.make_activation(), u, prob.y0);
  os << m.dump(2) << '\n';
  return 0;
}

int cmd_optimize(const Options& opt) {
  const Config c = read_config(opt);
  const ControlProblem prob = c.problem();
  const Activation f = c.make_activation();
  const HomotopyResult res = run_homotopy(f, initial_controls(prob), prob, c.homotopy);
  write_controls(opt, c, res.controls);
  write_state(opt, c, solve_state(f, res.controls, prob.y0, prob.grid));
  {
    auto os = open_out(opt, "history.csv");
    write_history_csv(os, res.history);
  }
  return report_out(opt, certify(f, res.controls, prob, res.final_eps, c.certify, opt.threads));
}

int cmd_certify(const Options& opt) {
  if (opt.controls.empty()) throw ConfigError("certify needs --controls DIR");
  const Config c = read_config(opt);
  const ControlProblem prob = c.problem();
  const ControlPair u = load_controls(opt.controls, c);
  return report_out(opt, certify(c.make_activation(), u, prob, c.homotopy.final_eps(),
                                 c.certify, opt.threads));
}

// Linear benchmark d^gamma y = y, y(0) = 1 with exact solution E_gamma(t^gamma).
int cmd_convergence(const Options& opt) {
  const Config c = read_config(opt);
  const Activation id = Activation::identity();
  const Vec y0 = Vec::Ones(1);
  std::vector<double> hs, errs;
  auto os = open_out(opt, "convergence.csv");
  os << "N,h,error\n";
  for (int N : {64, 128, 256, 512, 1024}) {
    const TimeGrid grid(c.final_time, N, c.gamma);
    const ControlPair u = ControlPair::constant(Mat::Ones(1, 1), Vec::Zero(1), grid.nodes());
    const GridFunction y = solve_state(id, u, y0, grid);
    double err = 0.0;
    for (int j = 0; j <= N; ++j) {
      const double exact = mittag_leffler(c.gamma, std::pow(grid.node(j), c.gamma));
      err = std::max(err, std::abs(y.values(0, j) - exact));
    }
    hs.push_back(grid.step());
    errs.push_back(err);
    os << N << ',' << csv::num(grid.step()) << ',' << csv::num(err) << '\n';
  }
  // least-squares slope of log(err) against log(h)
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
  const double order = sxy / sxx;
  auto summary = open_out(opt, "convergence_summary.json");
  summary << nlohmann::json{{"gamma", c.gamma},
                            {"final_time", c.final_time},
                            {"fitted_order", order},
                            {"required_order", 0.9 * c.gamma}}
                 .dump(2)
          << '\n';
  std::cout << "fitted order " << order << " (gamma " << c.gamma << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-smooth fractional optimal control: solve, optimize, certify"};
  app.require_subcommand(1);
  Options opt;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--seed", opt.seed, "seed for sampled directions");
    sub->add_option("--threads", opt.threads, "worker threads for direction sampling")
        ->check(CLI::PositiveNumber);
  };
  auto* solve = app.add_subcommand("solve", "solve the state equation");
  common(solve);
  solve->add_option("--controls", opt.controls, "directory with a.csv and ell.csv");
  auto* optimize = app.add_subcommand("optimize", "run the smoothing homotopy and certify");
  common(optimize);
  auto* cert = app.add_subcommand("certify", "audit stored controls");
  common(cert);
  cert->add_option("--controls", opt.controls, "directory with a.csv and ell.csv")->required();
  auto* conv = app.add_subcommand("convergence", "grid refinement study");
  common(conv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*solve) return cmd_solve(opt);
    if (*optimize) return cmd_optimize(opt);
    if (*cert) return cmd_certify(opt);
    if (*conv) return cmd_convergence(opt);
  } catch (const ConfigError& e) {
    std::cerr << "fracctl: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "fracctl: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "fracctl: " << e.what() << '\n';
    return kSolverError;
  }
  return 0;
}
