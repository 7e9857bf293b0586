#include "deepc/problem.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace deepc {

namespace {

void require(bool cond, const std::string & what)
{
  if (!cond) { throw std::invalid_argument(what); }
}

void require_psd(const Eigen::MatrixXd & W, const char * name)
{
  require(W.rows() == W.cols(), std::string(name) + " must be square");
  const double scale = std::max(1.0, W.cwiseAbs().maxCoeff());
  require((W - W.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale, std::string(name) + " must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(W, Eigen::EigenvaluesOnly);
  require(eig.eigenvalues().minCoeff() >= -1e-10, std::string(name) + " must be positive semidefinite");
}

}  // namespace

Box Box::uniform(Eigen::Index n, double lo, double hi)
{
  return Box{Eigen::VectorXd::Constant(n, lo), Eigen::VectorXd::Constant(n, hi)};
}

Box Box::unbounded(Eigen::Index n) { return uniform(n, -kInf, kInf); }

void Box::validate() const
{
  require(lower.size() == upper.size(), "box bounds differ in size");
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    require(!std::isnan(lower(i)) && !std::isnan(upper(i)), "box bound is NaN");
    require(lower(i) <= upper(i), "box lower bound exceeds upper bound at index " + std::to_string(i));
  }
}

bool Box::contains(const Eigen::VectorXd & z, double slack) const
{
  if (z.size() != size()) { return false; }
  return ((z - lower).array() >= -slack).all() && ((upper - z).array() >= -slack).all();
}

Eigen::VectorXd project_box(const Eigen::VectorXd & z, const Box & box)
{
  if (z.size() != box.size()) { throw std::invalid_argument("project_box: dimension mismatch"); }
  return z.cwiseMax(box.lower).cwiseMin(box.upper);
}

void DpcProblem::validate() const
{
  const Eigen::Index s = sigma(), l = ell(), g = ng(), u = nu(), y = ny();
  require(hankel.U.rows() == (s + l) * u && hankel.U.cols() == g, "input Hankel matrix has wrong shape");
  require(hankel.Y.rows() == (s + l) * y && hankel.Y.cols() == g, "output Hankel matrix has wrong shape");
  require(Q.rows() == l * y, "Q must be (ell*ny) square");
  require(R.rows() == l * u, "R must be (ell*nu) square");
  require_psd(Q, "Q");
  require_psd(R, "R");
  require(lambda_g >= 0.0, "lambda_g must be non-negative");
  require(lambda_s >= 0.0, "lambda_s must be non-negative");
  require(M.rows() == g && M.cols() == g, "M must be (ng) square");
  require(y_ref.size() == l * y, "y_ref must have ell*ny entries");
  require(u_ref.size() == l * u, "u_ref must have ell*nu entries");
  require(u_box.size() == l * u, "input box must have ell*nu entries");
  require(y_box.size() == l * y, "output box must have ell*ny entries");
  u_box.validate();
  y_box.validate();
  require(u_ini.size() == s * u, "u_ini must have sigma*nu entries");
  require(y_ini.size() == s * y, "y_ini must have sigma*ny entries");
}

Eigen::MatrixXd compute_regularizer(const HankelPair & hankel)
{
  const Eigen::Index ng = hankel.ng;
  Eigen::MatrixXd S(hankel.Up().rows() + hankel.Yp().rows() + hankel.Uf().rows(), ng);
  S << hankel.Up(), hankel.Yp(), hankel.Uf();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(S, Eigen::ComputeThinV);
  const auto & sv = svd.singularValues();
  const double tau = 1e-12 * static_cast<double>(std::max(S.rows(), S.cols()));
  Eigen::Index rank = 0;
  if (sv.size() > 0 && sv(0) > 0.0) {
    while (rank < sv.size() && sv(rank) > tau * sv(0)) { ++rank; }
  }
  // S^+ S = V_r V_r'
  const auto Vr     = svd.matrixV().leftCols(rank);
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(ng, ng);
  M.noalias() -= Vr * Vr.transpose();
  return M;
}

Eigen::VectorXd CompactQp::gradient(const Eigen::VectorXd & z) const
{
  if (!g_factor) { return P * z + q; }
  const auto & s   = slices;
  Eigen::VectorXd grad(z.size());
  const Eigen::Index head = s.g_begin;
  grad.head(head) = P.topLeftCorner(head, head) * z.head(head) + q.head(head);
  const Eigen::VectorXd misfit = g_factor->L * z.segment(s.g_begin, s.g_size) - g_factor->t;
  grad.segment(s.g_begin, s.g_size) = g_factor->L.transpose() * misfit;
  return grad;
}

double CompactQp::objective(const Eigen::VectorXd & z) const { return 0.5 * z.dot(P * z) + q.dot(z); }

double CompactQp::lagrangian(const Eigen::VectorXd & z, const Eigen::VectorXd & w) const
{
  return objective(z) + w.dot(H * z - b);
}

void CompactQp::validate() const
{
  require(P.rows() == P.cols(), "P must be square");
  require(q.size() == n(), "q must have n entries");
  require(H.cols() == n(), "H must have n columns");
  require(b.size() == m(), "b must have m entries");
  require(box.size() == n(), "box must have n entries");
  box.validate();
  require(q_sensitivity.rows() == n() || q_sensitivity.size() == 0, "dq/dp must have n rows");
  if (g_factor) {
    require(slices.g_begin + slices.g_size == n(), "factored block must be the trailing g-block");
    require(g_factor->L.cols() == slices.g_size, "factor columns must match the g-block");
    require(g_factor->t.size() == g_factor->L.rows(), "factor target must match factor rows");
  }
}

CompactQp assemble_compact(const DpcProblem & prob, const Eigen::VectorXd & p)
{
  prob.validate();
  const Eigen::Index s = prob.sigma(), l = prob.ell(), ng = prob.ng(), nu = prob.nu(), ny = prob.ny();
  if (p.size() != s * ny) { throw std::invalid_argument("perturbation must have sigma*ny entries"); }

  const Eigen::Index nu_all = l * nu, ny_all = l * ny;
  const Eigen::Index n      = nu_all + ny_all + ng;
  const Eigen::Index m      = nu_all + ny_all + s * nu;
  const auto & hk           = prob.hankel;

  CompactQp qp;
  qp.slices = QpSlices{0, nu_all, nu_all, ny_all, nu_all + ny_all, ng};

  // g-block curvature 2 lambda_g M'M + 2 lambda_s Yp'Yp, kept as L'L
  FactoredBlock fac;
  const double sg = std::sqrt(2.0 * prob.lambda_g), ss = std::sqrt(2.0 * prob.lambda_s);
  fac.L.resize(ng + s * ny, ng);
  fac.L << sg * prob.M, ss * hk.Yp();
  fac.t = Eigen::VectorXd::Zero(ng + s * ny);
  fac.t.tail(s * ny) = ss * (prob.y_ini + p);

  qp.P = Eigen::MatrixXd::Zero(n, n);
  qp.P.topLeftCorner(nu_all, nu_all)                = prob.R;
  qp.P.block(nu_all, nu_all, ny_all, ny_all)        = prob.Q;
  qp.P.bottomRightCorner(ng, ng).noalias()          = fac.L.transpose() * fac.L;

  qp.q.resize(n);
  qp.q.head(nu_all)          = -(prob.R * prob.u_ref);
  qp.q.segment(nu_all, ny_all) = -(prob.Q * prob.y_ref);
  qp.q.tail(ng)              = -(fac.L.transpose() * fac.t);

  qp.H = Eigen::MatrixXd::Zero(m, n);
  qp.H.block(0, nu_all + ny_all, s * nu, ng)           = hk.Up();
  qp.H.block(s * nu, 0, nu_all, nu_all)                = -Eigen::MatrixXd::Identity(nu_all, nu_all);
  qp.H.block(s * nu, nu_all + ny_all, nu_all, ng)      = hk.Uf();
  qp.H.block(s * nu + nu_all, nu_all, ny_all, ny_all)  = -Eigen::MatrixXd::Identity(ny_all, ny_all);
  qp.H.block(s * nu + nu_all, nu_all + ny_all, ny_all, ng) = hk.Yf();

  qp.b = Eigen::VectorXd::Zero(m);
  qp.b.head(s * nu) = prob.u_ini;

  qp.box.lower.resize(n);
  qp.box.upper.resize(n);
  qp.box.lower << prob.u_box.lower, prob.y_box.lower, Eigen::VectorXd::Constant(ng, -kInf);
  qp.box.upper << prob.u_box.upper, prob.y_box.upper, Eigen::VectorXd::Constant(ng, kInf);

  qp.q_sensitivity = Eigen::MatrixXd::Zero(n, s * ny);
  qp.q_sensitivity.bottomRows(ng) = -2.0 * prob.lambda_s * hk.Yp().transpose();

  qp.g_factor = std::move(fac);
  return qp;
}

CompactQp assemble_compact(const DpcProblem & prob)
{
  return assemble_compact(prob, Eigen::VectorXd::Zero(prob.perturbation_size()));
}

double deepc_objective(
  const DpcProblem & prob,
  const Eigen::VectorXd & u,
  const Eigen::VectorXd & y,
  const Eigen::VectorXd & g,
  const Eigen::VectorXd & p)
{
  const Eigen::VectorXd ey = y - prob.y_ref;
  const Eigen::VectorXd eu = u - prob.u_ref;
  const Eigen::VectorXd es = prob.hankel.Yp() * g - (prob.y_ini + p);
  return 0.5 * ey.dot(prob.Q * ey) + 0.5 * eu.dot(prob.R * eu) + prob.lambda_g * (prob.M * g).squaredNorm()
       + prob.lambda_s * es.squaredNorm();
}

}  // namespace deepc
