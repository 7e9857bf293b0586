#pragma once

/**
 * @file
 * @brief Output-data poisoning attacks on the DeePC controller.
 *
 * The attacker adds p to the controller's copy of y_ini, with ||p|| bounded
 * by rho * ||y_ini||, and wants the optimized input u*(p) to minimize psi.
 * attack_algorithm1() linearizes the solution map around p = 0 and takes the
 * ball minimizer of the linear model; attack_random() draws a direction at
 * random; attack_oracle() brute-forces the sphere at desk scale.
 */

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "deepc/problem.hpp"
#include "deepc/sensitivity.hpp"
#include "deepc/solver.hpp"

namespace deepc {

struct AttackSpec
{
  Eigen::VectorXd u_target;  ///< desired input trajectory, ell*nu entries
  double rho = 0.0;          ///< perturbation-to-data ratio

  /// Throws std::invalid_argument when rho < 0 or u_target has the wrong size.
  void validate(Eigen::Index u_size) const;
};

enum class Provenance { Algorithm1, Random, Oracle, Zero };

std::string to_string(Provenance p);

struct Perturbation
{
  Eigen::VectorXd p;
  double radius = 0.0;  ///< rho * ||y_ini||
  Provenance provenance = Provenance::Zero;
  /// Decrease of psi predicted by the linear model, -<K'eta, p>. Zero unless from Algorithm1.
  double predicted_gain = 0.0;
};

struct PsiEval
{
  double value = 0.0;
  Eigen::VectorXd grad;
};

/// Differentiable attacker objective on the planned input trajectory.
using InputObjective = std::function<PsiEval(const Eigen::VectorXd & u)>;

/// 1/2 ||u - u_target||^2 and its gradient.
PsiEval psi_gradient(const AttackSpec & spec, const Eigen::VectorXd & u);

/// Minimizer of <c, x> over ||x|| <= r; zero when c = 0.
Eigen::VectorXd ball_lmo(const Eigen::VectorXd & c, double r);

/// rho * ||y_ini||.
double attack_radius(const DpcProblem & prob, double rho);

struct AttackResult
{
  Perturbation perturbation;
  SaddlePoint nominal;       ///< solution at p = 0
  Eigen::VectorXd direction;  ///< K'eta, the gradient of the linear model
  Adjoint adjoint;
  double psi_nominal = 0.0;
};

/**
 * @brief One-shot linearized attack.
 *
 * Solves at p = 0, builds J and K there, solves the adjoint least-squares
 * problem and returns the ball minimizer of <K'eta, p>. `warm` seeds the
 * nominal solve. Solver failures propagate as SolverError.
 */
AttackResult attack_algorithm1(
  const DpcProblem & prob,
  const AttackSpec & spec,
  QpSolver & solver,
  const SaddlePoint * warm = nullptr);

/// Same with a caller-supplied objective; spec.u_target is ignored.
AttackResult attack_algorithm1(
  const DpcProblem & prob,
  double rho,
  const InputObjective & psi,
  QpSolver & solver,
  const SaddlePoint * warm = nullptr);

/// Variant that reuses an already computed nominal solution instead of solving.
AttackResult attack_algorithm1_at(
  const DpcProblem & prob,
  const CompactQp & qp,
  const SaddlePoint & nominal,
  double rho,
  const InputObjective & psi,
  const SolverOptions & opts);

/// p = rho ||y_ini|| v / ||v|| with v standard Gaussian drawn from `rng`.
Perturbation attack_random(const DpcProblem & prob, double rho, std::mt19937_64 & rng);
Perturbation attack_random(const DpcProblem & prob, double rho, std::uint64_t seed);

/// Uniform point on the sphere of radius r in R^dim.
Eigen::VectorXd sample_sphere(Eigen::Index dim, double r, std::mt19937_64 & rng);

struct OracleOptions
{
  SolverOptions solver;
  /// Worker threads; 0 picks std::thread::hardware_concurrency().
  unsigned threads = 0;
};

struct CandidateValue
{
  Eigen::VectorXd p;
  Provenance provenance = Provenance::Oracle;
  double psi = 0.0;
  bool ok = false;
};

/**
 * @brief psi(u*(p)) for each candidate, each solved warm from `nominal`.
 *
 * Candidates whose solve fails keep ok = false.
 */
std::vector<CandidateValue> evaluate_candidates(
  const DpcProblem & prob,
  const AttackSpec & spec,
  const std::vector<std::pair<Eigen::VectorXd, Provenance>> & candidates,
  const SaddlePoint & nominal,
  const OracleOptions & opts = {});

struct OracleResult
{
  Eigen::VectorXd best_p;
  double best_value = 0.0;
  Provenance best_provenance = Provenance::Zero;
  std::vector<CandidateValue> values;  ///< sphere samples first, then the Algorithm1 point, then p = 0
  int failed = 0;
  AttackResult algorithm1;
};

/// Sphere samples plus the Algorithm1 point and p = 0, all solved exactly.
OracleResult attack_oracle(
  const DpcProblem & prob,
  const AttackSpec & spec,
  int samples,
  std::uint64_t seed,
  const OracleOptions & opts = {});

/// CSV rows `step,p_1..p_k,norm,provenance,predicted_gain`.
void write_perturbation_header(std::ostream & os, Eigen::Index dim);
void write_perturbation_row(std::ostream & os, long step, const Perturbation & p);

}  // namespace deepc
