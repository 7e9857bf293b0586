#pragma once

/**
 * @file
 * @brief Primal-dual solver for the compact QP.
 *
 * Every solve terminates on the optimality residual F of sensitivity.hpp.
 * Two globalization strategies are available:
 *
 *  - the proportional-integral projected gradient method (PIPG)
 *
 *      z <- proj_D(z - a (Pz + q + H'v))
 *      w <- w + b (Hz - b_eq)
 *      v <- w + b (Hz - b_eq)
 *
 *    whose fixed points are exactly the zeros of F;
 *  - a Mehrotra predictor-corrector interior-point method, which is
 *    insensitive to the stiffness a large lambda_s puts into P.
 *
 * Either is followed by semismooth Newton steps on F (one linear solve with
 * the Jacobian J per step); F is piecewise linear, so on a correctly
 * identified active set a single step lands on the solution. Warm-started
 * solves try Newton first.
 */

#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "deepc/problem.hpp"

namespace deepc {

enum class SolverMethod {
  /// Mehrotra primal-dual interior point to locate the active set, then Newton on F.
  InteriorPoint,
  /// Proportional-integral projected gradient, with Newton on F when `newton` is set.
  Pipg,
};

struct SolverOptions
{
  SolverMethod method = SolverMethod::InteriorPoint;
  /// Stop when ||F|| <= tol * (1 + ||q||).
  double tol = 1e-9;
  /// Budget on PIPG iterations plus Newton steps.
  int max_iter = 200000;
  /// Take semismooth Newton steps on F.
  bool newton = true;
  /// Newton steps per attempt before falling back to PIPG.
  int newton_steps = 30;
  /// PIPG iterations before the first Newton retry; doubles on every retry.
  int pipg_chunk = 200;
  /// Interior-point iteration cap per solve.
  int ipm_max_iter = 100;
};

/// Primal-dual point with diagnostics.
struct SaddlePoint
{
  Eigen::VectorXd z;
  Eigen::VectorXd w;
  double residual_norm = std::numeric_limits<double>::infinity();
  double lagrangian    = 0.0;
  int iterations       = 0;
  int newton_steps     = 0;
};

class SolverError : public std::runtime_error
{
public:
  enum class Kind { MaxIterations, DegenerateSolution };

  SolverError(Kind kind, const std::string & what, SaddlePoint best = {})
      : std::runtime_error(what), kind_(kind), best_(std::move(best))
  {}

  Kind kind() const { return kind_; }
  /// Best point found before giving up.
  const SaddlePoint & best() const { return best_; }

private:
  Kind kind_;
  SaddlePoint best_;
};

/// Absolute residual threshold tol * (1 + ||q||).
double residual_threshold(const CompactQp & qp, const SolverOptions & opts);

/**
 * @brief Solver with a reusable workspace.
 *
 * Keeps the last LU factorization of J keyed on the active pattern and on
 * the (P, H) data, so solves that only change q or b (perturbed problems,
 * successive replanning instants) reuse it. Not thread-safe; use one
 * instance per thread.
 */
class QpSolver
{
public:
  explicit QpSolver(SolverOptions opts = {});
  ~QpSolver();
  QpSolver(QpSolver &&) noexcept;
  QpSolver & operator=(QpSolver &&) noexcept;

  const SolverOptions & options() const { return opts_; }

  /// Throws SolverError(MaxIterations) if the residual threshold is not reached.
  SaddlePoint solve(const CompactQp & qp, const SaddlePoint * warm = nullptr);

private:
  struct Workspace;
  SolverOptions opts_;
  std::unique_ptr<Workspace> ws_;
};

/// One-shot convenience wrapper around QpSolver.
SaddlePoint solve_qp(const CompactQp & qp, const SolverOptions & opts = {}, const SaddlePoint * warm = nullptr);

}  // namespace deepc
