#include "deepc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "deepc/sensitivity.hpp"

namespace deepc {

namespace {

Eigen::MatrixXd to_eigen(const RowMatrix & m)
{
  const Eigen::Index rows = static_cast<Eigen::Index>(m.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(m.front().size()) : 0;
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) { out(i, j) = m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]; }
  }
  return out;
}

// Broadcasts a length-1 list to n channels.
Eigen::VectorXd expand(const std::vector<double> & v, Eigen::Index n)
{
  if (v.size() == 1) { return Eigen::VectorXd::Constant(n, v.front()); }
  if (static_cast<Eigen::Index>(v.size()) != n) { throw std::invalid_argument("channel list has the wrong length"); }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

Eigen::MatrixXd repeat_diagonal(const Eigen::VectorXd & w, int times)
{
  return w.replicate(times, 1).asDiagonal();
}

Box repeat_box(const Eigen::VectorXd & lo, const Eigen::VectorXd & hi, int times)
{
  return Box{lo.replicate(times, 1), hi.replicate(times, 1)};
}

std::string join(const Eigen::VectorXd & v)
{
  std::ostringstream os;
  os << std::setprecision(6);
  for (Eigen::Index i = 0; i < v.size(); ++i) { os << (i ? " " : "") << v(i); }
  return os.str();
}

void write_matrix_csv(const std::filesystem::path & file, const Eigen::MatrixXd & A)
{
  std::ofstream os(file);
  if (!os) { throw std::runtime_error("cannot write " + file.string()); }
  const Eigen::IOFormat fmt(Eigen::FullPrecision, Eigen::DontAlignCols, ",", "\n");
  os << A.format(fmt) << '\n';
}

}  // namespace

DiscreteLti make_plant(const PlantSpec & spec)
{
  if (spec.type == "masses") { return discretize(oscillating_masses(spec.delta)); }
  if (spec.type == "continuous") {
    return discretize(ContinuousLti{to_eigen(spec.A), to_eigen(spec.B), to_eigen(spec.C), spec.delta});
  }
  if (spec.type == "discrete") {
    DiscreteLti sys{to_eigen(spec.A), to_eigen(spec.B), to_eigen(spec.C)};
    sys.validate();
    return sys;
  }
  throw std::invalid_argument("unknown plant type " + spec.type);
}

ExperimentSetup prepare_experiment(const ExperimentConfig & cfg)
{
  validate_config(cfg);
  const auto & d = cfg.dpc;
  ExperimentSetup setup;
  setup.plant          = make_plant(cfg.plant);
  const auto nu        = setup.plant.inputs();
  const auto ny        = setup.plant.outputs();
  setup.x0             = cfg.run.x0.empty() ? Eigen::VectorXd::Zero(setup.plant.states())
                                            : Eigen::VectorXd(expand(cfg.run.x0, setup.plant.states()));

  const IoLog log      = collect_excitation(setup.plant, d.sigma + d.ell + d.ng - 1, cfg.offline.seed, cfg.offline.amplitude);
  auto & prob          = setup.base;
  prob.hankel          = build_hankel(log, d.sigma, d.ell);
  setup.input_rank     = input_hankel_rank(prob.hankel);
  setup.persistently_exciting = setup.input_rank == Eigen::Index{d.sigma + d.ell} * nu;

  prob.Q        = repeat_diagonal(expand(d.q_weights, ny), d.ell);
  prob.R        = repeat_diagonal(expand(d.r_weights, nu), d.ell);
  prob.lambda_g = d.lambda_g;
  prob.lambda_s = d.lambda_s;
  prob.M        = compute_regularizer(prob.hankel);
  prob.u_box    = repeat_box(expand(d.u_lower, nu), expand(d.u_upper, nu), d.ell);
  prob.y_box    = repeat_box(expand(d.y_lower, ny), expand(d.y_upper, ny), d.ell);
  prob.u_ini    = Eigen::VectorXd::Zero(Eigen::Index{d.sigma} * nu);
  prob.y_ini    = Eigen::VectorXd::Zero(Eigen::Index{d.sigma} * ny);
  prob.u_ref    = Eigen::VectorXd::Zero(Eigen::Index{d.ell} * nu);
  prob.y_ref    = Eigen::VectorXd::Zero(Eigen::Index{d.ell} * ny);
  return setup;
}

Eigen::VectorXd reference_output(const ExperimentConfig & cfg, long k, Eigen::Index ny)
{
  Eigen::VectorXd y = expand(cfg.reference.offset, ny);
  if (cfg.reference.type == "sinusoid") {
    const double t = static_cast<double>(k) * cfg.plant.delta;
    const Eigen::VectorXd amp = expand(cfg.reference.amplitude, ny), ph = expand(cfg.reference.phase, ny);
    for (Eigen::Index i = 0; i < ny; ++i) { y(i) += amp(i) * std::sin(cfg.reference.omega * t + ph(i)); }
  }
  return y;
}

Eigen::VectorXd reference_input(const ExperimentConfig & cfg, const DiscreteLti & plant)
{
  if (!cfg.reference.u_equilibrium) { return expand(cfg.reference.u, plant.inputs()); }
  const Eigen::VectorXd y = expand(cfg.reference.offset, plant.outputs());
  return output_equilibrium(plant, y).input;
}

Eigen::VectorXd target_input(const ExperimentConfig & cfg, long k, Eigen::Index nu)
{
  const double t            = static_cast<double>(k) * cfg.plant.delta;
  const Eigen::VectorXd amp = expand(cfg.attack.target_amplitude, nu), ph = expand(cfg.attack.target_phase, nu);
  Eigen::VectorXd u(nu);
  for (Eigen::Index i = 0; i < nu; ++i) { u(i) = amp(i) * std::sin(cfg.attack.target_omega * t + ph(i)); }
  return u;
}

void set_replan_data(
  DpcProblem & prob,
  const ExperimentConfig & cfg,
  const Eigen::VectorXd & u_ref,
  const std::vector<Eigen::VectorXd> & inputs,
  const std::vector<Eigen::VectorXd> & outputs,
  long k)
{
  const int s = prob.sigma(), l = prob.ell(), nu = prob.nu(), ny = prob.ny();
  if (k < s || static_cast<long>(inputs.size()) < k || static_cast<long>(outputs.size()) < k) {
    throw std::invalid_argument("not enough history for the online window");
  }
  for (int j = 0; j < s; ++j) {
    const auto idx = static_cast<std::size_t>(k - s + j);
    prob.u_ini.segment(Eigen::Index{j} * nu, nu) = inputs[idx];
    prob.y_ini.segment(Eigen::Index{j} * ny, ny) = outputs[idx];
  }
  for (int j = 0; j < l; ++j) {
    prob.y_ref.segment(Eigen::Index{j} * ny, ny) = reference_output(cfg, k + j, ny);
    prob.u_ref.segment(Eigen::Index{j} * nu, nu) = u_ref;
  }
}

AttackSpec attack_spec_at(const ExperimentConfig & cfg, long k, Eigen::Index nu, int ell)
{
  AttackSpec spec;
  spec.rho = cfg.attack.rho;
  spec.u_target.resize(nu * ell);
  for (int j = 0; j < ell; ++j) { spec.u_target.segment(Eigen::Index{j} * nu, nu) = target_input(cfg, k + j, nu); }
  return spec;
}

SolverOptions solver_options(const RunSpec & run)
{
  SolverOptions opts;
  opts.tol      = run.tol;
  opts.max_iter = run.max_iter;
  opts.method   = run.solver == "pipg" ? SolverMethod::Pipg : SolverMethod::InteriorPoint;
  return opts;
}

RunResult run_closed_loop(const ExperimentConfig & cfg, const RunHooks & hooks)
{
  return run_closed_loop(cfg, prepare_experiment(cfg), hooks);
}

RunResult run_closed_loop(const ExperimentConfig & cfg, const ExperimentSetup & setup, const RunHooks & hooks)
{
  validate_config(cfg);
  const int sigma = cfg.dpc.sigma, ell = cfg.dpc.ell, N = cfg.run.replan_interval;
  const auto nu   = setup.plant.inputs();
  const auto & mode = cfg.attack.mode;
  const SolverOptions opts = solver_options(cfg.run);
  const Eigen::VectorXd u_ref = reference_input(cfg, setup.plant);

  RunResult result;
  result.steps.reserve(static_cast<std::size_t>(cfg.run.steps));
  LtiPlant plant(setup.plant, setup.x0);
  std::vector<Eigen::VectorXd> inputs, outputs;
  DpcProblem prob = setup.base;

  QpSolver nominal_solver(opts), attack_solver(opts);
  std::optional<SaddlePoint> previous;
  std::mt19937_64 rng(cfg.attack.seed);

  Eigen::VectorXd plan;
  long plan_start   = 0;
  double plan_pnorm = 0.0, plan_residual = 0.0;

  for (long k = 0; k < cfg.run.steps; ++k) {
    StepRecord rec;
    rec.k     = k;
    rec.y     = plant.output();
    rec.y_ref = reference_output(cfg, k, setup.plant.outputs());
    outputs.push_back(rec.y);

    if (k < sigma) {
      rec.u = Eigen::VectorXd::Zero(nu);
    } else {
      if ((k - sigma) % N == 0) {
        try {
          set_replan_data(prob, cfg, u_ref, inputs, outputs, k);
          const AttackSpec spec = attack_spec_at(cfg, k, nu, ell);
          const auto psi = [&spec](const Eigen::VectorXd & u) { return psi_gradient(spec, u); };

          const CompactQp qp0       = assemble_compact(prob);
          const SaddlePoint nominal = nominal_solver.solve(qp0, previous ? &*previous : nullptr);
          previous                  = nominal;

          Perturbation pert;
          std::optional<AttackResult> alg;
          if (mode == "random") {
            pert = attack_random(prob, cfg.attack.rho, rng);
          } else if (mode == "algorithm1") {
            alg  = attack_algorithm1_at(prob, qp0, nominal, cfg.attack.rho, psi, opts);
            pert = alg->perturbation;
          } else if (mode == "oracle") {
            OracleOptions oo;
            oo.solver = opts;
            AttackSpec ospec = spec;
            const auto orc   = attack_oracle(prob, ospec, cfg.attack.oracle_samples, cfg.attack.seed + static_cast<std::uint64_t>(k), oo);
            pert.p           = orc.best_p;
            pert.radius      = attack_radius(prob, cfg.attack.rho);
            pert.provenance  = Provenance::Oracle;
          } else {
            pert.p      = Eigen::VectorXd::Zero(prob.perturbation_size());
            pert.radius = attack_radius(prob, cfg.attack.rho);
          }

          SaddlePoint used = nominal;
          std::optional<CompactQp> qp_attacked;
          if (!pert.p.isZero(0.0)) {
            qp_attacked = assemble_compact(prob, pert.p);
            used        = attack_solver.solve(*qp_attacked, &nominal);
          }

          const auto & sl = qp0.slices;
          ReplanRecord rr;
          rr.k              = k;
          rr.perturbation   = pert;
          rr.psi_nominal    = psi(nominal.z.segment(sl.u_begin, sl.u_size)).value;
          rr.psi_attacked   = psi(used.z.segment(sl.u_begin, sl.u_size)).value;
          rr.nominal_iters  = nominal.iterations;
          rr.attacked_iters = qp_attacked ? used.iterations : 0;
          rr.residual       = used.residual_norm;
          result.replans.push_back(rr);

          plan          = used.z.segment(sl.u_begin, sl.u_size);
          plan_start    = k;
          plan_pnorm    = pert.p.norm();
          plan_residual = used.residual_norm;
          rec.solver_iters = nominal.iterations + rr.attacked_iters;

          if (hooks.on_replan) { hooks.on_replan(ReplanContext{k, prob, nominal, pert, spec}); }
          if (hooks.dump_dir && result.replans.size() == 1) {
            std::filesystem::create_directories(*hooks.dump_dir);
            write_qp_bundle(*hooks.dump_dir, qp_attacked ? *qp_attacked : qp0);
            if (alg) {
              const auto ops = assemble_sensitivity(qp0, nominal, opts);
              write_matrix_csv(*hooks.dump_dir / "J.csv", ops.J);
              write_matrix_csv(*hooks.dump_dir / "K.csv", ops.K);
              // rho = 0 skips the adjoint solve
              if (alg->adjoint.eta.size() > 0) { write_matrix_csv(*hooks.dump_dir / "eta.csv", alg->adjoint.eta); }
            }
          }
        } catch (const std::exception & e) {
          result.metrics = result.steps.empty() ? TrackingMetrics{} : compute_metrics(result.steps, 0);
          throw RunError("step " + std::to_string(k) + ": " + e.what(), k, std::move(result));
        }
      }
      rec.u = plan.segment((k - plan_start) * nu, nu);
      rec.pnorm    = plan_pnorm;
      rec.residual = plan_residual;
    }

    plant.step(rec.u);
    inputs.push_back(rec.u);
    result.steps.push_back(std::move(rec));
  }

  result.metrics = compute_metrics(result.steps, cfg.run.metric_begin, cfg.run.metric_end);
  return result;
}

TrackingMetrics compute_metrics(const std::vector<StepRecord> & steps, long begin, long end)
{
  const long size = static_cast<long>(steps.size());
  if (size == 0) { throw std::invalid_argument("compute_metrics: empty log"); }
  if (end < 0 || end > size) { end = size; }
  begin = std::clamp(begin, 0L, end);
  if (begin >= end) { throw std::invalid_argument("compute_metrics: empty window"); }

  const Eigen::Index ny = steps.front().y.size();
  TrackingMetrics m;
  m.begin = begin;
  m.end   = end;
  m.rms   = Eigen::VectorXd::Zero(ny);
  m.peak  = Eigen::VectorXd::Zero(ny);
  for (long k = begin; k < end; ++k) {
    const auto & s           = steps[static_cast<std::size_t>(k)];
    const Eigen::VectorXd e  = s.y - s.y_ref;
    m.rms                   += e.cwiseAbs2();
    m.peak                   = m.peak.cwiseMax(e.cwiseAbs());
  }
  m.rms = (m.rms / static_cast<double>(end - begin)).cwiseSqrt();
  return m;
}

TrackingMetrics compute_metrics(const RunResult & result, long begin, long end)
{
  return compute_metrics(result.steps, begin, end);
}

Eigen::VectorXd rms_ratio(const TrackingMetrics & a, const TrackingMetrics & b)
{
  if (a.rms.size() != b.rms.size()) { throw std::invalid_argument("rms_ratio: channel count mismatch"); }
  return a.rms.cwiseQuotient(b.rms);
}

void write_trace_csv(std::ostream & os, const RunResult & result)
{
  if (result.steps.empty()) { return; }
  const Eigen::Index nu = result.steps.front().u.size(), ny = result.steps.front().y.size();
  os << "k";
  for (Eigen::Index i = 1; i <= nu; ++i) { os << ",u_" << i; }
  for (Eigen::Index i = 1; i <= ny; ++i) { os << ",y_" << i; }
  for (Eigen::Index i = 1; i <= ny; ++i) { os << ",yref_" << i; }
  os << ",pnorm,solver_iters,residual\n";

  const auto old = os.precision(17);
  for (const auto & s : result.steps) {
    os << s.k;
    for (Eigen::Index i = 0; i < nu; ++i) { os << ',' << s.u(i); }
    for (Eigen::Index i = 0; i < ny; ++i) { os << ',' << s.y(i); }
    for (Eigen::Index i = 0; i < ny; ++i) { os << ',' << s.y_ref(i); }
    os << ',' << s.pnorm << ',' << s.solver_iters << ',' << s.residual << '\n';
  }
  os.precision(old);
}

std::vector<StepRecord> read_trace_csv(std::istream & is)
{
  std::string line;
  if (!std::getline(is, line)) { throw std::runtime_error("trace CSV is empty"); }
  Eigen::Index nu = 0, ny = 0, yref = 0;
  {
    std::istringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.rfind("u_", 0) == 0) { ++nu; }
      else if (col.rfind("yref_", 0) == 0) { ++yref; }
      else if (col.rfind("y_", 0) == 0) { ++ny; }
    }
  }
  if (ny != yref) { throw std::runtime_error("trace CSV header has mismatched y and yref columns"); }

  std::vector<StepRecord> steps;
  while (std::getline(is, line)) {
    if (line.empty()) { continue; }
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ls, cell, ',')) { v.push_back(std::stod(cell)); }
    if (static_cast<Eigen::Index>(v.size()) != 1 + nu + 2 * ny + 3) { throw std::runtime_error("trace CSV row has wrong width"); }
    StepRecord s;
    s.k            = static_cast<long>(v[0]);
    s.u            = Eigen::Map<Eigen::VectorXd>(v.data() + 1, nu);
    s.y            = Eigen::Map<Eigen::VectorXd>(v.data() + 1 + nu, ny);
    s.y_ref        = Eigen::Map<Eigen::VectorXd>(v.data() + 1 + nu + ny, ny);
    s.pnorm        = v[static_cast<std::size_t>(1 + nu + 2 * ny)];
    s.solver_iters = static_cast<int>(v[static_cast<std::size_t>(2 + nu + 2 * ny)]);
    s.residual     = v[static_cast<std::size_t>(3 + nu + 2 * ny)];
    steps.push_back(std::move(s));
  }
  return steps;
}

void write_summary(std::ostream & os, const ExperimentConfig & cfg, const RunResult & result)
{
  const auto & m = result.metrics;
  const auto old = os.precision(10);
  os << "mode: " << cfg.attack.mode << '\n';
  os << "rho: " << cfg.attack.rho << '\n';
  os << "steps: " << result.steps.size() << '\n';
  os << "replans: " << result.replans.size() << '\n';
  os << "metric_window: [" << m.begin << ", " << m.end << ")\n";
  os << "rms: " << join(m.rms) << '\n';
  os << "peak: " << join(m.peak) << '\n';

  double reduction = 0.0;
  for (const auto & r : result.replans) { reduction += r.psi_nominal - r.psi_attacked; }
  if (!result.replans.empty()) { reduction /= static_cast<double>(result.replans.size()); }
  os << "mean_psi_reduction: " << reduction << '\n';
  os << "replan_k,pnorm,radius,psi_nominal,psi_attacked,predicted_gain,provenance\n";
  for (const auto & r : result.replans) {
    os << r.k << ',' << r.perturbation.p.norm() << ',' << r.perturbation.radius << ',' << r.psi_nominal << ','
       << r.psi_attacked << ',' << r.perturbation.predicted_gain << ',' << to_string(r.perturbation.provenance) << '\n';
  }
  os.precision(old);
}

void write_qp_bundle(const std::filesystem::path & dir, const CompactQp & qp)
{
  std::filesystem::create_directories(dir);
  write_matrix_csv(dir / "P.csv", qp.P);
  write_matrix_csv(dir / "q.csv", qp.q);
  write_matrix_csv(dir / "H.csv", qp.H);
  write_matrix_csv(dir / "b.csv", qp.b);
  Eigen::MatrixXd box(qp.n(), 2);
  box << qp.box.lower, qp.box.upper;
  write_matrix_csv(dir / "box.csv", box);
}

Eigen::Index lsq_size_formula(const Geometry & g)
{
  return Eigen::Index{2} * g.ell * (g.nu + g.ny) + Eigen::Index{g.sigma} * g.nu + g.ng;
}

std::vector<SizeRow> report_lsq_sizes(const std::vector<Geometry> & geometries)
{
  std::vector<SizeRow> rows;
  for (const auto & g : geometries) {
    DpcProblem prob;
    prob.hankel.U     = Eigen::MatrixXd::Zero(Eigen::Index{g.sigma + g.ell} * g.nu, g.ng);
    prob.hankel.Y     = Eigen::MatrixXd::Zero(Eigen::Index{g.sigma + g.ell} * g.ny, g.ng);
    prob.hankel.sigma = g.sigma;
    prob.hankel.ell   = g.ell;
    prob.hankel.ng    = g.ng;
    prob.hankel.nu    = g.nu;
    prob.hankel.ny    = g.ny;
    prob.Q            = Eigen::MatrixXd::Identity(Eigen::Index{g.ell} * g.ny, Eigen::Index{g.ell} * g.ny);
    prob.R            = Eigen::MatrixXd::Identity(Eigen::Index{g.ell} * g.nu, Eigen::Index{g.ell} * g.nu);
    prob.M            = compute_regularizer(prob.hankel);
    prob.u_box        = Box::uniform(Eigen::Index{g.ell} * g.nu, -1.0, 1.0);
    prob.y_box        = Box::uniform(Eigen::Index{g.ell} * g.ny, -1.0, 1.0);
    prob.u_ref        = Eigen::VectorXd::Zero(Eigen::Index{g.ell} * g.nu);
    prob.y_ref        = Eigen::VectorXd::Zero(Eigen::Index{g.ell} * g.ny);
    prob.u_ini        = Eigen::VectorXd::Zero(Eigen::Index{g.sigma} * g.nu);
    prob.y_ini        = Eigen::VectorXd::Zero(Eigen::Index{g.sigma} * g.ny);

    // With no data and zero references the origin satisfies F = 0 exactly.
    const CompactQp qp = assemble_compact(prob);
    SaddlePoint xi;
    xi.z             = Eigen::VectorXd::Zero(qp.n());
    xi.w             = Eigen::VectorXd::Zero(qp.m());
    xi.residual_norm = 0.0;
    const auto ops   = assemble_sensitivity(qp, xi);
    const auto adj   = solve_adjoint(ops, Eigen::VectorXd::Zero(qp.slices.u_size));
    rows.push_back(SizeRow{g, lsq_size_formula(g), adj.lsq_dimension});
  }
  return rows;
}

void write_size_table(std::ostream & os, const std::vector<SizeRow> & rows)
{
  os << std::setw(4) << "nu" << std::setw(4) << "ny" << std::setw(7) << "sigma" << std::setw(6) << "ell" << std::setw(6)
     << "ng" << std::setw(10) << "formula" << std::setw(10) << "runtime" << std::setw(7) << "match" << '\n';
  for (const auto & r : rows) {
    os << std::setw(4) << r.geometry.nu << std::setw(4) << r.geometry.ny << std::setw(7) << r.geometry.sigma << std::setw(6)
       << r.geometry.ell << std::setw(6) << r.geometry.ng << std::setw(10) << r.formula << std::setw(10) << r.measured
       << std::setw(7) << (r.formula == r.measured ? "yes" : "NO") << '\n';
  }
}

std::vector<Geometry> default_size_geometries()
{
  std::vector<Geometry> out;
  for (int ell : {25, 50, 100}) { out.push_back(Geometry{2, 4, 6, ell, 500}); }
  for (int ell : {25, 50, 100}) { out.push_back(Geometry{3, 6, 6, ell, 500}); }
  return out;
}

}  // namespace deepc
