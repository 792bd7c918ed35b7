#include "moreau/moreau.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using moreau::ExperimentConfig;
using nlohmann::json;

constexpr int kConfigError = 2;
constexpr int kNonConvergence = 3;

struct ConfigFlags {
  std::string config_path;
  std::string preset;
  std::optional<int> n, d, trials;
  std::optional<std::uint64_t> seed;
  std::optional<double> delta;
  bool paper_scale = false;
  bool noise_is_std = false;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--preset", preset, "named preset (see `preset list`)");
    app->add_option("--n", n, "sample size");
    app->add_option("--d", d, "dimension");
    app->add_option("--trials", trials, "number of trials");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--delta", delta, "confidence parameter");
    app->add_flag("--paper-scale", paper_scale, "use the full-size preset dimensions");
    app->add_flag("--noise-is-std", noise_is_std, "read noise_var as a standard deviation");
    app->add_option("--out", out, "output path (file or directory, depending on the command)");
  }

  ExperimentConfig resolve() const {
    json j = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw moreau::DomainError(std::string("config: ") + e.what());
      }
    }
    if (!preset.empty()) j["preset"] = preset;
    ExperimentConfig c = moreau::config_from_json(j, paper_scale);
    if (n) c.n = *n;
    if (d) c.d = *d;
    if (trials) c.trials = *trials;
    if (seed) c.seed = *seed;
    if (delta) c.delta = *delta;
    if (!out.empty()) c.out = out;
    if (noise_is_std) c.noise_is_std = true;
    if (c.preset == "sharpness-l1") c.d = static_cast<int>(c.dj_factor * c.n) + 1;
    return c;
  }
};

// Writes to the named file, or stdout when the name is empty.
template <class F>
void emit(const std::string& path, F&& write) {
  if (path.empty()) {
    write(std::cout);
    return;
  }
  std::ofstream os(path);
  if (!os) throw moreau::DomainError("cannot open for writing: " + path);
  write(os);
}

int cmd_generate(const ConfigFlags& flags) {
  auto cfg = flags.resolve();
  cfg.validate();
  const auto model = moreau::make_data_model(cfg);
  const auto ds = moreau::sample_dataset(model, cfg.n, cfg.seed);
  emit(cfg.out, [&](std::ostream& os) { moreau::write_dataset_csv(os, ds); });
  return 0;
}

int cmd_fit(const ConfigFlags& flags) {
  auto cfg = flags.resolve();
  cfg.validate();
  cfg.trials = 1;
  const auto ctx = moreau::detail::make_context(cfg);
  const auto ds = moreau::sample_dataset(ctx.model, cfg.n, moreau::derive_seed(cfg.seed, 0));
  const auto path = moreau::detail::fit_path(ctx, ds);
  emit(cfg.out, [&](std::ostream& os) {
    os << "path_index,reg_value,train_loss,intercept,norm_l1,norm_l2,iterations,converged\n";
    for (std::size_t i = 0; i < path.size(); ++i)
      os << i << ',' << moreau::detail::fmt(path.reg_values[i]) << ','
         << moreau::detail::fmt(path.train_losses[i]) << ',' << moreau::detail::fmt(path.intercepts[i]) << ','
         << moreau::detail::fmt(path.norms_l1[i]) << ',' << moreau::detail::fmt(path.norms_l2[i]) << ','
         << path.iterations[i] << ',' << (path.converged[i] ? 1 : 0) << '\n';
  });
  const auto bad = std::count(path.converged.begin(), path.converged.end(), false);
  return 2 * bad >= static_cast<long>(path.size()) && bad > 0 ? kNonConvergence : 0;
}

struct BoundFlags {
  std::string kind = "optimistic";
  double train_loss = 0.0, complexity = 0.0, n = 1.0, correction = 1.0;
  double tau = 1.0, h = 1.0, delta = 0.05;
  double norm_w = 0.0, trace_perp = 0.0, op_perp = 0.0, d = 1.0;
  double lipschitz = 1.0, smoothness = 1.0, sigma_sq = 1.0;
};

int cmd_bound(const BoundFlags& f) {
  json out{{"kind", f.kind}};
  if (f.kind == "optimistic") out["value"] = moreau::optimistic_bound(f.train_loss, f.complexity, f.n, f.correction);
  else if (f.kind == "lipschitz") out["value"] = moreau::lipschitz_bound(f.train_loss, f.lipschitz, f.complexity, f.n);
  else if (f.kind == "smooth-interpolator") out["value"] = moreau::smooth_interpolator_bound(f.smoothness, f.complexity, f.n);
  else if (f.kind == "vc-correction") out["value"] = moreau::vc_correction(f.tau, f.h, f.n, f.delta);
  else if (f.kind == "c-simple") out["value"] = moreau::c_simple(f.norm_w, f.trace_perp, f.n);
  else if (f.kind == "c-isotropic") out["value"] = moreau::c_isotropic(f.norm_w, f.d, f.n);
  else if (f.kind == "c-delta-ball") out["value"] = moreau::c_delta_ball(f.norm_w, f.trace_perp, f.op_perp, f.delta);
  else if (f.kind == "ols-psi") out["value"] = moreau::ols_psi_excess(f.sigma_sq, f.d, f.n);
  else throw moreau::DomainError("unknown bound kind: " + f.kind);
  std::cout << out.dump(2) << '\n';
  return 0;
}

moreau::Vector read_vector(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw moreau::DomainError("cannot read coefficients: " + path);
  std::vector<double> v;
  for (double x; in >> x;) v.push_back(x);
  moreau::Vector w(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) w(static_cast<Eigen::Index>(i)) = v[i];
  return w;
}

int cmd_oracle(const ConfigFlags& flags, const std::string& coef_path, double intercept) {
  auto cfg = flags.resolve();
  cfg.validate();
  const auto ctx = moreau::detail::make_context(cfg);
  moreau::SweepResult refs;
  moreau::detail::reference_lines(ctx, refs);
  json out{{"null_risk", refs.null_risk}, {"optimal_risk", refs.optimal_risk}};
  if (!coef_path.empty()) {
    const moreau::Vector w = read_vector(coef_path);
    moreau::require(w.size() == cfg.d, "oracle: coefficient file must hold d numbers");
    out["risk"] = moreau::detail::test_loss(ctx, w, intercept);
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_sweep(const ConfigFlags& flags) {
  const auto cfg = flags.resolve();
  cfg.validate();
  namespace fs = std::filesystem;
  if (!cfg.out.empty()) fs::create_directories(cfg.out);
  auto file = [&](const char* name) { return cfg.out.empty() ? std::string() : (fs::path(cfg.out) / name).string(); };

  if (cfg.preset == "sharpness-l1") {
    const auto recs = moreau::run_sharpness_trials(cfg);
    emit(file("sharpness.csv"), [&](std::ostream& os) { moreau::write_sharpness_csv(os, recs); });
    return 0;
  }
  const auto res = moreau::run_sweep(cfg);
  emit(file("sweep.csv"), [&](std::ostream& os) { moreau::write_sweep_csv(os, res.rows); });
  if (!cfg.out.empty()) {
    emit(file("aggregate.csv"), [&](std::ostream& os) { moreau::write_aggregate_csv(os, res.aggregates); });
    emit(file("summary.json"),
         [&](std::ostream& os) { os << moreau::sweep_summary_json(cfg, res).dump(2) << '\n'; });
  }
  const double bad = res.nonconverged_fraction();
  if (bad >= 0.5) {
    std::cerr << "solver did not converge on " << bad * 100 << "% of rows\n";
    return kNonConvergence;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moreau-envelope generalization toolkit"};
  app.require_subcommand(1);

  ConfigFlags gen_flags, fit_flags, oracle_flags, sweep_flags;
  auto* gen = app.add_subcommand("generate", "sample a dataset and write it as CSV");
  gen_flags.attach(gen);
  auto* fit = app.add_subcommand("fit", "fit one regularization path");
  fit_flags.attach(fit);

  BoundFlags bf;
  auto* bound = app.add_subcommand("bound", "evaluate a bound formula");
  bound->add_option("--kind", bf.kind,
                    "optimistic | lipschitz | smooth-interpolator | vc-correction | c-simple | c-isotropic | "
                    "c-delta-ball | ols-psi");
  bound->add_option("--train-loss", bf.train_loss);
  bound->add_option("--complexity", bf.complexity, "complexity term C");
  bound->add_option("--n", bf.n);
  bound->add_option("--correction", bf.correction);
  bound->add_option("--tau", bf.tau);
  bound->add_option("--vc-dim", bf.h, "VC dimension h");
  bound->add_option("--delta", bf.delta);
  bound->add_option("--norm-w", bf.norm_w);
  bound->add_option("--trace-perp", bf.trace_perp);
  bound->add_option("--op-perp", bf.op_perp);
  bound->add_option("--d", bf.d);
  bound->add_option("--lipschitz", bf.lipschitz);
  bound->add_option("--smoothness", bf.smoothness);
  bound->add_option("--sigma-sq", bf.sigma_sq);

  std::string coef_path;
  double intercept = 0.0;
  auto* oracle = app.add_subcommand("oracle", "population risk reference values, optionally for given coefficients");
  oracle_flags.attach(oracle);
  oracle->add_option("--coef", coef_path, "file with d whitespace-separated coefficients");
  oracle->add_option("--intercept", intercept);

  auto* sweep = app.add_subcommand("sweep", "run a full experiment");
  sweep_flags.attach(sweep);

  auto* preset_cmd = app.add_subcommand("preset", "preset utilities");
  preset_cmd->require_subcommand(1);
  auto* preset_list = preset_cmd->add_subcommand("list", "list preset names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_flags);
    if (fit->parsed()) return cmd_fit(fit_flags);
    if (bound->parsed()) return cmd_bound(bf);
    if (oracle->parsed()) return cmd_oracle(oracle_flags, coef_path, intercept);
    if (sweep->parsed()) return cmd_sweep(sweep_flags);
    if (preset_list->parsed()) {
      for (const auto& name : moreau::preset_names()) std::cout << name << '\n';
      return 0;
    }
  } catch (const moreau::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
