#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace mixfc::cli;
  CLI::App app{"mixfc: mixture forecast scoring, ensembling and fitting"};
  app.require_subcommand(1);

  ValidateOptions vo;
  auto* validate = app.add_subcommand("validate", "check a submission file");
  validate->add_option("submission", vo.submission)->required();
  validate->add_option("--kind", vo.kind, "bin, quantile or mixture")->capture_default_str();

  ScoreOptions so;
  auto* score = app.add_subcommand("score", "score every forecast against truth");
  score->add_option("submission", so.submission)->required();
  score->add_option("--kind", so.kind)->capture_default_str();
  score->add_option("--truth", so.truth)->required();
  score->add_option("--rule", so.rule, "logs, crps, is or wis")->capture_default_str();
  score->add_option("--levels", so.levels, "quantile levels for wis on mixtures")->delimiter(',');
  score->add_option("--alpha", so.alpha, "interval level for is")->capture_default_str();
  score->add_option("--workers", so.workers)->capture_default_str();
  score->add_option("--out", so.out);

  EnsembleOptions eo;
  auto* ensemble = app.add_subcommand("ensemble", "combine several submissions");
  ensemble->add_option("submissions", eo.submissions)->required();
  ensemble->add_option("--kind", eo.kind)->capture_default_str();
  ensemble->add_option("--weights", eo.weights, "equal, pmp, pmp-cdf, crps-min, em or a list like 0.3,0.7")
      ->capture_default_str();
  ensemble->add_option("--method", eo.method, "mean or median (quantile inputs)")->capture_default_str();
  ensemble->add_option("--truth", eo.truth);
  ensemble->add_option("--out", eo.out);
  ensemble->add_option("--report", eo.report, "per-key weight table");

  FitOptions fo;
  auto* fit = app.add_subcommand("fit", "fit shared-sigma normal mixtures to bin or quantile forecasts");
  fit->add_option("submission", fo.submission)->required();
  fit->add_option("--kind", fo.kind)->capture_default_str();
  fit->add_option("--components", fo.components, "C, or 1-C to fit every order with nested starts")
      ->capture_default_str();
  fit->add_option("--rel-tol", fo.rel_tol)->capture_default_str();
  fit->add_option("--max-iter", fo.max_iter)->capture_default_str();
  fit->add_option("--workers", fo.workers)->capture_default_str();
  fit->add_option("--out", fo.out);
  fit->add_option("--report", fo.report);

  GridOptions go;
  std::string location, target, unit;
  auto* grid = app.add_subcommand("grid", "tabulate pdf and cdf of one mixture forecast");
  grid->add_option("submission", go.submission)->required();
  grid->add_option("--location", location);
  grid->add_option("--target", target);
  grid->add_option("--unit", unit);
  grid->add_option("--points", go.points)->capture_default_str();
  grid->add_option("--out", go.out);

  SampleOptions sa;
  auto* sample = app.add_subcommand("sample", "draw from every forecast");
  sample->add_option("submission", sa.submission)->required();
  sample->add_option("--kind", sa.kind)->capture_default_str();
  sample->add_option("-n", sa.n)->capture_default_str();
  sample->add_option("--seed", sa.seed)->capture_default_str();
  sample->add_option("--out", sa.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInvalid;
  }

  if (*validate) return cmd_validate(vo, std::cout, std::cerr);
  if (*score) return cmd_score(so, std::cout, std::cerr);
  if (*ensemble) return cmd_ensemble(eo, std::cout, std::cerr);
  if (*fit) return cmd_fit(fo, std::cout, std::cerr);
  if (*grid) {
    if (!location.empty() || !target.empty() || !unit.empty()) go.key = mixfc::ForecastKey{location, target, unit};
    return cmd_grid(go, std::cout, std::cerr);
  }
  if (*sample) return cmd_sample(sa, std::cout, std::cerr);
  return kInvalid;
}
