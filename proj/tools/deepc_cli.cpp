// Command-line front end: closed-loop runs, the adjoint size table and the sampling oracle.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "deepc/attack.hpp"
#include "deepc/config.hpp"
#include "deepc/experiment.hpp"

namespace fs = std::filesystem;
using namespace deepc;

namespace {

struct Common
{
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void apply_overrides(ExperimentConfig & cfg, const Common & common)
{
  if (common.seed) {
    cfg.offline.seed = *common.seed;
    cfg.attack.seed  = *common.seed;
  }
  if (common.out) { cfg.run.out = *common.out; }
}

std::ofstream open_out(const fs::path & file)
{
  std::ofstream os(file);
  if (!os) { throw std::runtime_error("cannot write " + file.string()); }
  return os;
}

int cmd_run(const std::string & path, const Common & common, bool dump)
{
  ExperimentConfig cfg = load_config(path);
  apply_overrides(cfg, common);
  const fs::path out = cfg.run.out;
  fs::create_directories(out);

  const ExperimentSetup setup = prepare_experiment(cfg);
  if (!setup.persistently_exciting) {
    std::cerr << "warning: input Hankel matrix has rank " << setup.input_rank << ", data is not persistently exciting\n";
  }

  RunHooks hooks;
  if (dump) { hooks.dump_dir = out / "qp"; }

  RunResult result;
  int status = 0;
  try {
    result = run_closed_loop(cfg, setup, hooks);
  } catch (const RunError & e) {
    std::cerr << "error: " << e.what() << " (partial trace written)\n";
    result = e.partial();
    status = 1;
  }

  {
    auto os = open_out(out / "trace.csv");
    write_trace_csv(os, result);
  }
  {
    auto os = open_out(out / "perturbations.csv");
    write_perturbation_header(os, setup.base.perturbation_size());
    for (const auto & r : result.replans) { write_perturbation_row(os, r.k, r.perturbation); }
  }
  {
    auto os = open_out(out / "config.json");
    os << serialize_config(cfg);
  }
  if (status == 0) {
    auto os = open_out(out / "summary.txt");
    write_summary(os, cfg, result);
    std::cout << "rms: ";
    for (Eigen::Index i = 0; i < result.metrics.rms.size(); ++i) { std::cout << (i ? " " : "") << result.metrics.rms(i); }
    std::cout << "\nwrote " << (out / "trace.csv").string() << " and " << (out / "summary.txt").string() << '\n';
  }
  return status;
}

int cmd_report_sizes()
{
  const auto rows = report_lsq_sizes(default_size_geometries());
  write_size_table(std::cout, rows);
  for (const auto & r : rows) {
    if (r.formula != r.measured) { return 1; }
  }
  return 0;
}

int cmd_oracle(const std::string & path, const Common & common, std::optional<long> at_step, std::optional<int> samples)
{
  ExperimentConfig cfg = load_config(path);
  apply_overrides(cfg, common);
  const long k = at_step.value_or(cfg.dpc.sigma);
  if (k < cfg.dpc.sigma || (k - cfg.dpc.sigma) % cfg.run.replan_interval != 0) {
    throw std::invalid_argument("--at-step must be a replanning instant (sigma + j * replan_interval)");
  }

  // Drive the unattacked loop up to step k and capture the problem there.
  ExperimentConfig nominal = cfg;
  nominal.attack.mode      = "none";
  nominal.run.steps        = static_cast<int>(k + 1);
  nominal.run.metric_begin = 0;
  nominal.run.metric_end   = -1;
  std::optional<DpcProblem> prob;
  RunHooks hooks;
  hooks.on_replan = [&](const ReplanContext & ctx) {
    if (ctx.k == k) { prob = ctx.problem; }
  };
  run_closed_loop(nominal, hooks);
  if (!prob) { throw std::runtime_error("no replanning instant at the requested step"); }

  const AttackSpec spec = attack_spec_at(cfg, k, prob->nu(), prob->ell());
  OracleOptions oo;
  oo.solver      = solver_options(cfg.run);
  const auto res = attack_oracle(*prob, spec, samples.value_or(cfg.attack.oracle_samples), cfg.attack.seed, oo);

  const fs::path out = cfg.run.out;
  fs::create_directories(out);
  auto os = open_out(out / "oracle.csv");
  os.precision(17);
  os << "index,provenance,norm,psi,ok\n";
  for (std::size_t i = 0; i < res.values.size(); ++i) {
    const auto & v = res.values[i];
    os << i << ',' << to_string(v.provenance) << ',' << v.p.norm() << ',' << v.psi << ',' << (v.ok ? 1 : 0) << '\n';
  }

  double alg = 0.0;
  int better = 0, total = 0;
  for (const auto & v : res.values) {
    if (v.provenance == Provenance::Algorithm1) { alg = v.psi; }
  }
  for (const auto & v : res.values) {
    if (v.provenance != Provenance::Oracle || !v.ok) { continue; }
    ++total;
    if (v.psi < alg) { ++better; }
  }
  std::cout << "step " << k << ": psi(nominal) " << res.algorithm1.psi_nominal << ", psi(algorithm1) " << alg
            << ", best " << res.best_value << " (" << to_string(res.best_provenance) << "), " << better << " of "
            << total << " samples beat algorithm1, " << res.failed << " failed\n";
  std::cout << "wrote " << (out / "oracle.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"DeePC trajectory optimization under output-data poisoning"};
  app.require_subcommand(1);

  Common common;
  bool dump = false;
  std::string config;
  std::optional<long> at_step;
  std::optional<int> samples;

  auto * run = app.add_subcommand("run", "closed-loop experiment; writes <out>/trace.csv and <out>/summary.txt");
  run->add_option("config", config, "JSON config file")->required();
  run->add_option("--seed", common.seed, "seed for the offline data and the perturbation draws");
  run->add_option("--out", common.out, "output directory");
  run->add_flag("--dump-qp", dump, "write the first replan's QP (and J, K, eta under algorithm1) as CSV into <out>/qp");

  auto * sizes = app.add_subcommand("report-sizes", "adjoint least-squares sizes, formula vs. runtime");

  auto * oracle = app.add_subcommand("oracle", "sampling oracle at one replanning instant; writes <out>/oracle.csv");
  oracle->add_option("config", config, "JSON config file")->required();
  oracle->add_option("--seed", common.seed, "seed for the offline data and the sphere samples");
  oracle->add_option("--out", common.out, "output directory");
  oracle->add_option("--at-step", at_step, "replanning instant (default: the first)");
  oracle->add_option("--samples", samples, "sphere samples (default: attack.oracle_samples)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) { return cmd_run(config, common, dump); }
    if (*sizes) { return cmd_report_sizes(); }
    if (*oracle) { return cmd_oracle(config, common, at_step, samples); }
  } catch (const ParseError & e) {
    std::cerr << "error: config parse failed at " << e.what() << '\n';
    return 2;
  } catch (const ValidationError & e) {
    std::cerr << "error: invalid config: " << e.what() << '\n';
    return 2;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
