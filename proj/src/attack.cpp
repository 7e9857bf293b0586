#include "deepc/attack.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace deepc {

void AttackSpec::validate(Eigen::Index u_size) const
{
  if (!(rho >= 0.0) || !std::isfinite(rho)) { throw std::invalid_argument("rho must be a non-negative finite number"); }
  if (u_target.size() != u_size) { throw std::invalid_argument("attack target has the wrong size"); }
}

std::string to_string(Provenance p)
{
  switch (p) {
    case Provenance::Algorithm1: return "algorithm1";
    case Provenance::Random: return "random";
    case Provenance::Oracle: return "oracle";
    case Provenance::Zero: return "zero";
  }
  return "unknown";
}

PsiEval psi_gradient(const AttackSpec & spec, const Eigen::VectorXd & u)
{
  if (u.size() != spec.u_target.size()) { throw std::invalid_argument("psi_gradient: dimension mismatch"); }
  PsiEval ev;
  ev.grad  = u - spec.u_target;
  ev.value = 0.5 * ev.grad.squaredNorm();
  return ev;
}

Eigen::VectorXd ball_lmo(const Eigen::VectorXd & c, double r)
{
  if (r < 0.0) { throw std::invalid_argument("ball_lmo: negative radius"); }
  const double nrm = c.norm();
  if (nrm == 0.0 || r == 0.0) { return Eigen::VectorXd::Zero(c.size()); }
  return (-r / nrm) * c;
}

double attack_radius(const DpcProblem & prob, double rho) { return rho * prob.y_ini.norm(); }

AttackResult attack_algorithm1_at(
  const DpcProblem & prob,
  const CompactQp & qp,
  const SaddlePoint & nominal,
  double rho,
  const InputObjective & psi,
  const SolverOptions & opts)
{
  if (!(rho >= 0.0)) { throw std::invalid_argument("rho must be non-negative"); }
  const auto & s = qp.slices;

  AttackResult res;
  res.nominal          = nominal;
  const PsiEval ev     = psi(nominal.z.segment(s.u_begin, s.u_size));
  res.psi_nominal      = ev.value;
  Perturbation & pert  = res.perturbation;
  pert.radius          = attack_radius(prob, rho);
  pert.provenance      = Provenance::Algorithm1;
  if (pert.radius == 0.0) {
    // the ball is a point; nothing to differentiate
    pert.p        = Eigen::VectorXd::Zero(prob.perturbation_size());
    res.direction = Eigen::VectorXd::Zero(prob.perturbation_size());
    return res;
  }
  const auto ops       = assemble_sensitivity(qp, nominal, opts);
  res.adjoint          = solve_adjoint(ops, ev.grad);
  res.direction        = ops.K.transpose() * res.adjoint.eta;

  pert.p               = ball_lmo(res.direction, pert.radius);
  pert.predicted_gain  = -res.direction.dot(pert.p);
  return res;
}

AttackResult attack_algorithm1(
  const DpcProblem & prob,
  double rho,
  const InputObjective & psi,
  QpSolver & solver,
  const SaddlePoint * warm)
{
  const CompactQp qp        = assemble_compact(prob);
  const SaddlePoint nominal = solver.solve(qp, warm);
  return attack_algorithm1_at(prob, qp, nominal, rho, psi, solver.options());
}

AttackResult attack_algorithm1(
  const DpcProblem & prob,
  const AttackSpec & spec,
  QpSolver & solver,
  const SaddlePoint * warm)
{
  spec.validate(Eigen::Index{prob.ell()} * prob.nu());
  return attack_algorithm1(
    prob, spec.rho, [&spec](const Eigen::VectorXd & u) { return psi_gradient(spec, u); }, solver, warm);
}

Eigen::VectorXd sample_sphere(Eigen::Index dim, double r, std::mt19937_64 & rng)
{
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  double nrm = 0.0;
  while (dim > 0 && nrm == 0.0) {
    for (Eigen::Index i = 0; i < dim; ++i) { v(i) = normal(rng); }
    nrm = v.norm();
  }
  if (r == 0.0 || dim == 0) { return Eigen::VectorXd::Zero(dim); }
  return (r / nrm) * v;
}

Perturbation attack_random(const DpcProblem & prob, double rho, std::mt19937_64 & rng)
{
  if (!(rho >= 0.0)) { throw std::invalid_argument("rho must be non-negative"); }
  Perturbation pert;
  pert.radius     = attack_radius(prob, rho);
  pert.p          = sample_sphere(prob.perturbation_size(), pert.radius, rng);
  pert.provenance = Provenance::Random;
  return pert;
}

Perturbation attack_random(const DpcProblem & prob, double rho, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  return attack_random(prob, rho, rng);
}

std::vector<CandidateValue> evaluate_candidates(
  const DpcProblem & prob,
  const AttackSpec & spec,
  const std::vector<std::pair<Eigen::VectorXd, Provenance>> & candidates,
  const SaddlePoint & nominal,
  const OracleOptions & opts)
{
  spec.validate(Eigen::Index{prob.ell()} * prob.nu());
  std::vector<CandidateValue> out(candidates.size());
  unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads          = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, candidates.size())));

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    QpSolver solver(opts.solver);
    for (std::size_t i = next++; i < candidates.size(); i = next++) {
      CandidateValue & cv = out[i];
      cv.p                = candidates[i].first;
      cv.provenance       = candidates[i].second;
      try {
        const CompactQp qp   = assemble_compact(prob, cv.p);
        const SaddlePoint sp = solver.solve(qp, &nominal);
        cv.psi = psi_gradient(spec, sp.z.segment(qp.slices.u_begin, qp.slices.u_size)).value;
        cv.ok  = true;
      } catch (const SolverError &) {
        cv.ok = false;
      }
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) { pool.emplace_back(worker); }
  }
  return out;
}

OracleResult attack_oracle(
  const DpcProblem & prob,
  const AttackSpec & spec,
  int samples,
  std::uint64_t seed,
  const OracleOptions & opts)
{
  if (samples < 1) { throw std::invalid_argument("attack_oracle: samples must be at least 1"); }
  spec.validate(Eigen::Index{prob.ell()} * prob.nu());

  OracleResult res;
  QpSolver solver(opts.solver);
  res.algorithm1 = attack_algorithm1(prob, spec, solver);

  const double r = attack_radius(prob, spec.rho);
  std::mt19937_64 rng(seed);
  std::vector<std::pair<Eigen::VectorXd, Provenance>> cand;
  cand.reserve(static_cast<std::size_t>(samples) + 2);
  for (int i = 0; i < samples; ++i) { cand.emplace_back(sample_sphere(prob.perturbation_size(), r, rng), Provenance::Oracle); }
  cand.emplace_back(res.algorithm1.perturbation.p, Provenance::Algorithm1);
  cand.emplace_back(Eigen::VectorXd::Zero(prob.perturbation_size()), Provenance::Zero);

  res.values     = evaluate_candidates(prob, spec, cand, res.algorithm1.nominal, opts);
  res.best_value = std::numeric_limits<double>::infinity();
  for (const auto & cv : res.values) {
    if (!cv.ok) {
      ++res.failed;
      continue;
    }
    if (cv.psi < res.best_value) {
      res.best_value      = cv.psi;
      res.best_p          = cv.p;
      res.best_provenance = cv.provenance;
    }
  }
  if (res.best_p.size() == 0) { throw std::runtime_error("attack_oracle: every candidate solve failed"); }
  return res;
}

void write_perturbation_header(std::ostream & os, Eigen::Index dim)
{
  os << "step";
  for (Eigen::Index i = 1; i <= dim; ++i) { os << ",p_" << i; }
  os << ",norm,provenance,predicted_gain\n";
}

void write_perturbation_row(std::ostream & os, long step, const Perturbation & p)
{
  const auto old = os.precision(17);
  os << step;
  for (Eigen::Index i = 0; i < p.p.size(); ++i) { os << ',' << p.p(i); }
  os << ',' << p.p.norm() << ',' << to_string(p.provenance) << ',' << p.predicted_gain << '\n';
  os.precision(old);
}

}  // namespace deepc
