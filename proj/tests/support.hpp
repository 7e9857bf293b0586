#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.

#include <cstdint>
#include <random>

#include <Eigen/Core>

#include "deepc/config.hpp"
#include "deepc/experiment.hpp"
#include "deepc/problem.hpp"
#include "deepc/sensitivity.hpp"

namespace deepc::fixtures {

/// Default masses experiment (sigma 6, ell 25, ng 500, lambda_s 1e6, lambda_g 100).
ExperimentConfig masses_config();

struct Instance
{
  ExperimentSetup setup;
  DpcProblem prob;
  AttackSpec spec;
  long k = 0;
};

/// Problem at the first replanning instant after a zero-input warmup from x0.
Instance masses_instance(const Eigen::VectorXd & x0, double rho = 0.01, std::uint64_t offline_seed = 1);
Eigen::VectorXd masses_x0();

/**
 * Small random DeePC problem (n <= 60) from a random stable plant. Boxes are
 * tight enough that some input and output coordinates end up active.
 */
DpcProblem small_instance(std::uint64_t seed);

struct GspaceSolution
{
  Eigen::VectorXd g;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

/**
 * Primal-dual interior-point solve of the original problem in g alone:
 * u = Uf g and y = Yf g substituted, box bounds written as general
 * inequalities on Uf g and Yf g, equality Up g = u_ini. Shares no code with
 * the library solver.
 */
GspaceSolution gspace_ipm(const DpcProblem & prob, const Eigen::VectorXd & p);

struct FdReport
{
  double j_error = 0.0;  ///< relative Frobenius error of J against central differences of F
  double k_error = 0.0;  ///< same for K
  int j_columns = 0;     ///< columns of J compared (the rest cross a projection kink)
  int k_columns = 0;
  bool resolve_valid = false;  ///< the active pattern held at both re-solved points
  double resolve_error = 0.0;  ///< relative error of -J^{-1}K dp against re-solved differences of z
  double resolve_u_error = 0.0;  ///< same restricted to the input block (relative to the z step if inputs do not move)
  bool u_moves = false;          ///< the input block of the re-solved difference is not negligible
};

/**
 * Finite-difference check of J, K and the solution derivative at the
 * nominal solution of `prob`. Columns whose +-h evaluation changes the
 * projection pattern are left out; the re-solve check draws a random unit
 * direction from `seed` and solves at +-eps along it.
 */
FdReport fd_sensitivity_check(const DpcProblem & prob, std::uint64_t seed, double h = 1e-6, double eps = 1e-5);

/// Random matrix with entries uniform in [-1, 1].
Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64 & rng);

}  // namespace deepc::fixtures
