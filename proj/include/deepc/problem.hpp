#pragma once

/**
 * @file
 * @brief DeePC trajectory optimization and its compact QP form.
 *
 * The compact form is
 *
 *   minimize  1/2 z'Pz + q'z   subject to  Hz = b,  z in D,
 *
 * with z = (u, y, g) and D = U x Y x R^ng a product of intervals.
 */

#include <limits>
#include <optional>

#include <Eigen/Core>

#include "deepc/plant.hpp"

namespace deepc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Elementwise interval bounds; infinite entries mean unbounded.
struct Box
{
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index size() const { return lower.size(); }

  static Box uniform(Eigen::Index n, double lo, double hi);
  static Box unbounded(Eigen::Index n);

  /// Throws std::invalid_argument when sizes differ or lower > upper somewhere.
  void validate() const;
  bool contains(const Eigen::VectorXd & z, double slack = 0.0) const;
};

/// Closed-form Euclidean projection onto an interval product.
Eigen::VectorXd project_box(const Eigen::VectorXd & z, const Box & box);

/// All data of one DeePC solve: Hankel blocks, weights, bounds, references and the online window.
struct DpcProblem
{
  HankelPair hankel;
  Eigen::MatrixXd Q;  ///< ell*ny square, output tracking weight
  Eigen::MatrixXd R;  ///< ell*nu square, input tracking weight
  double lambda_g = 100.0;
  double lambda_s = 1e6;
  Eigen::MatrixXd M;  ///< ng square regularizer, see compute_regularizer()
  Eigen::VectorXd y_ref;
  Eigen::VectorXd u_ref;
  Box u_box;
  Box y_box;
  Eigen::VectorXd u_ini;
  Eigen::VectorXd y_ini;

  int sigma() const { return hankel.sigma; }
  int ell() const { return hankel.ell; }
  int ng() const { return hankel.ng; }
  int nu() const { return hankel.nu; }
  int ny() const { return hankel.ny; }

  /// Dimension of the output perturbation p (sigma * ny).
  Eigen::Index perturbation_size() const { return Eigen::Index{sigma()} * ny(); }

  /// Checks dimensions, PSD weights, non-negative lambdas and box ordering.
  void validate() const;
};

/**
 * @brief M = I - S^+ S with S = [Up; Yp; Uf].
 *
 * The pseudo-inverse drops singular values below 1e-12 * max(rows, cols) * sigma_max,
 * so M is the orthogonal projector onto the null space of S.
 */
Eigen::MatrixXd compute_regularizer(const HankelPair & hankel);

/// Index ranges of (u, y, g) inside z.
struct QpSlices
{
  Eigen::Index u_begin = 0, u_size = 0;
  Eigen::Index y_begin = 0, y_size = 0;
  Eigen::Index g_begin = 0, g_size = 0;
};

/**
 * @brief Factored form of the g-block curvature: P_gg = L'L and q_g = -L't.
 *
 * Gradients on the g-block are evaluated as L'(Lg - t). With lambda_s in the
 * millions the expanded form P_gg g + q_g loses most of its digits to
 * cancellation; the factored form does not.
 */
struct FactoredBlock
{
  Eigen::MatrixXd L;
  Eigen::VectorXd t;
};

struct CompactQp
{
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd H;
  Eigen::VectorXd b;
  Box box;
  QpSlices slices;

  /// dq/dp, n x dim(p). Empty (n x 0) for problems without a perturbation parameter.
  Eigen::MatrixXd q_sensitivity;

  std::optional<FactoredBlock> g_factor;

  Eigen::Index n() const { return P.rows(); }
  Eigen::Index m() const { return H.rows(); }

  /// P z + q, using the factored g-block when present.
  Eigen::VectorXd gradient(const Eigen::VectorXd & z) const;
  double objective(const Eigen::VectorXd & z) const;
  double lagrangian(const Eigen::VectorXd & z, const Eigen::VectorXd & w) const;

  void validate() const;
};

/// Compact form of the DeePC problem with y_ini replaced by y_ini + p.
CompactQp assemble_compact(const DpcProblem & prob, const Eigen::VectorXd & p);

/// Same as assemble_compact(prob, 0).
CompactQp assemble_compact(const DpcProblem & prob);

/// Objective of the original (u, y, g) formulation, constant terms included.
double deepc_objective(
  const DpcProblem & prob,
  const Eigen::VectorXd & u,
  const Eigen::VectorXd & y,
  const Eigen::VectorXd & g,
  const Eigen::VectorXd & p);

}  // namespace deepc
