#pragma once

/**
 * @file
 * @brief Optimality residual of the compact QP and its implicit derivatives.
 *
 * A primal-dual pair xi = (z, w) is optimal iff
 *
 *   F(xi, p) = [ z - proj_D(z+) ; Hz - b ] = 0,   z+ = z - Pz - q - H'w.
 *
 * F is piecewise linear in xi. Where proj_D is differentiable at z+, its
 * Jacobians are
 *
 *   J = dF/dxi = [ I - D(I - P),  D H' ]     K = dF/dp = [ D dq/dp ]
 *                [ H,             0    ]                 [ 0       ]
 *
 * with D the 0/1 diagonal Jacobian of the projection, and the solution map
 * has derivative -J^{-1} K.
 */

#include <vector>

#include <Eigen/Core>

#include "deepc/problem.hpp"
#include "deepc/solver.hpp"

namespace deepc {

/// Boundary width used when classifying z+ against box bounds.
inline constexpr double kBoundaryEps = 1e-9;

struct Residual
{
  Eigen::VectorXd value;   ///< F(xi, p), n + m entries
  Eigen::VectorXd z_plus;  ///< pre-projection point z - Pz - q - H'w
};

Residual residual(const CompactQp & qp, const Eigen::VectorXd & z, const Eigen::VectorXd & w);

/**
 * @brief Diagonal of d proj_D(z+) with the clamped convention at kinks.
 *
 * Entry i is 1 when z+_i lies in (lower_i + eps, upper_i - eps) (unbounded
 * sides always count as interior) and 0 otherwise. Coordinates within eps of
 * a finite bound are listed in `boundary`.
 */
struct ProjectionJacobian
{
  Eigen::VectorXd diagonal;
  std::vector<Eigen::Index> boundary;
};

ProjectionJacobian projection_jacobian(const Eigen::VectorXd & z_plus, const Box & box, double eps = kBoundaryEps);

/// J for a given projection-Jacobian diagonal.
Eigen::MatrixXd kkt_jacobian(const CompactQp & qp, const Eigen::VectorXd & proj_diagonal);

struct SensitivityOperators
{
  Eigen::MatrixXd J;  ///< (n+m) x (n+m)
  Eigen::MatrixXd K;  ///< (n+m) x dim(p)
  ProjectionJacobian proj;
  QpSlices slices;
};

/**
 * @brief J and K at a solution.
 *
 * Throws SolverError(DegenerateSolution) when ||F(xi)|| exceeds the
 * tolerance implied by `opts`; a non-solution is never differentiated.
 */
SensitivityOperators assemble_sensitivity(
  const CompactQp & qp,
  const SaddlePoint & xi,
  const SolverOptions & opts = {});

struct Adjoint
{
  Eigen::VectorXd eta;
  double lsq_residual = 0.0;     ///< ||J'eta + T'grad||
  Eigen::Index lsq_dimension = 0;  ///< n + m
  Eigen::Index rank = 0;
};

/// Relative singular value cutoff for the minimum-norm least-squares solves.
inline constexpr double kPinvCutoff = 1e-10;

/**
 * @brief eta = argmin ||J'x + T'grad_u|| (minimum norm), T selecting the u-block.
 *
 * A zero right-hand side returns eta = 0 without factorizing J.
 */
Adjoint solve_adjoint(const SensitivityOperators & ops, const Eigen::VectorXd & grad_psi_u);

/// Minimum-norm least-squares solution of J dxi = -K dp, one column per column of dp.
Eigen::MatrixXd directional_sensitivity(const SensitivityOperators & ops, const Eigen::MatrixXd & dp);

}  // namespace deepc
