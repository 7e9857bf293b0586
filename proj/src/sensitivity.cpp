#include "deepc/sensitivity.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace deepc {

namespace {

// Ruiz scaling: alternately divide rows and columns by the square root of
// their infinity norms until both are close to one.
void equilibrate(const Eigen::MatrixXd & A, Eigen::VectorXd & dr, Eigen::VectorXd & dc)
{
  dr = Eigen::VectorXd::Ones(A.rows());
  dc = Eigen::VectorXd::Ones(A.cols());
  Eigen::MatrixXd S = A;
  for (int it = 0; it < 20; ++it) {
    Eigen::VectorXd r = S.rowwise().lpNorm<Eigen::Infinity>();
    Eigen::VectorXd c = S.colwise().lpNorm<Eigen::Infinity>().transpose();
    r = r.unaryExpr([](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 1.0; });
    c = c.unaryExpr([](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 1.0; });
    S  = r.asDiagonal() * S * c.asDiagonal();
    dr = dr.cwiseProduct(r);
    dc = dc.cwiseProduct(c);
    if ((r.array() - 1.0).abs().maxCoeff() < 1e-3 && (c.array() - 1.0).abs().maxCoeff() < 1e-3) { break; }
  }
}

// Least-squares solution of A X = B computed on the equilibrated system
// (Dr A Dc) Y = Dr B, X = Dc Y, singular values below kPinvCutoff * sigma_max
// of the scaled matrix dropped. Minimum norm in the scaled metric; exact when
// the scaled matrix keeps full rank.
Eigen::MatrixXd min_norm_solve(const Eigen::MatrixXd & A, const Eigen::MatrixXd & B, Eigen::Index * rank = nullptr)
{
  Eigen::VectorXd dr, dc;
  equilibrate(A, dr, dc);
  const Eigen::MatrixXd S = dr.asDiagonal() * A * dc.asDiagonal();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(S, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(kPinvCutoff);
  if (rank) { *rank = svd.rank(); }
  return dc.asDiagonal() * svd.solve(dr.asDiagonal() * B);
}

}  // namespace

Residual residual(const CompactQp & qp, const Eigen::VectorXd & z, const Eigen::VectorXd & w)
{
  if (z.size() != qp.n() || w.size() != qp.m()) { throw std::invalid_argument("residual: dimension mismatch"); }
  Residual r;
  r.z_plus = z - qp.gradient(z);
  r.z_plus.noalias() -= qp.H.transpose() * w;
  r.value.resize(qp.n() + qp.m());
  r.value.head(qp.n()) = z - project_box(r.z_plus, qp.box);
  r.value.tail(qp.m()) = qp.H * z - qp.b;
  return r;
}

ProjectionJacobian projection_jacobian(const Eigen::VectorXd & z_plus, const Box & box, double eps)
{
  if (eps < 0.0) { throw std::invalid_argument("projection_jacobian: eps must be non-negative"); }
  if (z_plus.size() != box.size()) { throw std::invalid_argument("projection_jacobian: dimension mismatch"); }
  ProjectionJacobian pj;
  pj.diagonal = Eigen::VectorXd::Zero(z_plus.size());
  for (Eigen::Index i = 0; i < z_plus.size(); ++i) {
    const double lo = box.lower(i), hi = box.upper(i), v = z_plus(i);
    const bool above_lo = v > lo + eps;
    const bool below_hi = v < hi - eps;
    if (above_lo && below_hi) {
      pj.diagonal(i) = 1.0;
    } else if (std::abs(v - lo) <= eps || std::abs(v - hi) <= eps) {
      pj.boundary.push_back(i);
    }
  }
  return pj;
}

Eigen::MatrixXd kkt_jacobian(const CompactQp & qp, const Eigen::VectorXd & d)
{
  const Eigen::Index n = qp.n(), m = qp.m();
  if (d.size() != n) { throw std::invalid_argument("kkt_jacobian: diagonal has wrong size"); }
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n + m, n + m);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d(i) != 0.0) {
      // row of I - D + DP
      J.row(i).head(n) = d(i) * qp.P.row(i);
      J(i, i) += 1.0 - d(i);
      J.row(i).tail(m) = d(i) * qp.H.col(i).transpose();
    } else {
      J(i, i) = 1.0;
    }
  }
  J.bottomLeftCorner(m, n) = qp.H;
  return J;
}

SensitivityOperators assemble_sensitivity(const CompactQp & qp, const SaddlePoint & xi, const SolverOptions & opts)
{
  const Residual r     = residual(qp, xi.z, xi.w);
  const double fnorm   = r.value.norm();
  const double thresh  = residual_threshold(qp, opts);
  if (!(fnorm <= thresh)) {
    std::ostringstream os;
    os << "refusing to differentiate: ||F|| = " << fnorm << " exceeds " << thresh;
    throw SolverError(SolverError::Kind::DegenerateSolution, os.str(), xi);
  }

  SensitivityOperators ops;
  ops.proj   = projection_jacobian(r.z_plus, qp.box);
  ops.J      = kkt_jacobian(qp, ops.proj.diagonal);
  ops.slices = qp.slices;
  ops.K      = Eigen::MatrixXd::Zero(qp.n() + qp.m(), qp.q_sensitivity.cols());
  if (qp.q_sensitivity.cols() > 0) {
    ops.K.topRows(qp.n()) = ops.proj.diagonal.asDiagonal() * qp.q_sensitivity;
  }
  return ops;
}

Adjoint solve_adjoint(const SensitivityOperators & ops, const Eigen::VectorXd & grad_psi_u)
{
  const Eigen::Index N = ops.J.rows();
  if (grad_psi_u.size() != ops.slices.u_size) { throw std::invalid_argument("solve_adjoint: gradient has wrong size"); }

  Adjoint adj;
  adj.lsq_dimension = N;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
  rhs.segment(ops.slices.u_begin, ops.slices.u_size) = -grad_psi_u;
  if (rhs.isZero(0.0)) {
    adj.eta = Eigen::VectorXd::Zero(N);
    return adj;
  }
  adj.eta          = min_norm_solve(ops.J.transpose(), rhs, &adj.rank);
  adj.lsq_residual = (ops.J.transpose() * adj.eta - rhs).norm();
  return adj;
}

Eigen::MatrixXd directional_sensitivity(const SensitivityOperators & ops, const Eigen::MatrixXd & dp)
{
  if (dp.rows() != ops.K.cols()) { throw std::invalid_argument("directional_sensitivity: dp has wrong size"); }
  const Eigen::MatrixXd rhs = -(ops.K * dp);
  if (rhs.isZero(0.0)) { return Eigen::MatrixXd::Zero(ops.J.rows(), dp.cols()); }
  return min_norm_solve(ops.J, rhs);
}

}  // namespace deepc
