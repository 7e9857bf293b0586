#include "deepc/plant.hpp"

#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

namespace deepc {

void DiscreteLti::validate() const
{
  if (Ad.rows() != Ad.cols()) { throw std::invalid_argument("Ad must be square"); }
  if (Bd.rows() != Ad.rows()) { throw std::invalid_argument("Bd rows must match Ad"); }
  if (C.cols() != Ad.rows()) { throw std::invalid_argument("C columns must match Ad"); }
}

DiscreteLti discretize(const ContinuousLti & sys)
{
  if (!(sys.delta > 0.0)) { throw std::invalid_argument("sampling period must be positive"); }
  if (sys.A.rows() != sys.A.cols()) { throw std::invalid_argument("A must be square"); }
  if (sys.B.rows() != sys.A.rows()) { throw std::invalid_argument("B rows must match A"); }
  if (sys.C.cols() != sys.A.rows()) { throw std::invalid_argument("C columns must match A"); }

  const Eigen::Index nx = sys.A.rows();
  const Eigen::Index nu = sys.B.cols();

  // exp(delta [A B; 0 0]) = [Ad Bd; 0 I]
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(nx + nu, nx + nu);
  aug.topLeftCorner(nx, nx)  = sys.A;
  aug.topRightCorner(nx, nu) = sys.B;
  const Eigen::MatrixXd phi  = (sys.delta * aug).exp();

  return DiscreteLti{phi.topLeftCorner(nx, nx), phi.topRightCorner(nx, nu), sys.C};
}

IoLog simulate(const DiscreteLti & sys, const Eigen::VectorXd & x0, std::span<const Eigen::VectorXd> inputs)
{
  sys.validate();
  if (x0.size() != sys.states()) { throw std::invalid_argument("initial state has wrong dimension"); }

  IoLog log;
  log.inputs.reserve(inputs.size());
  log.outputs.reserve(inputs.size());
  Eigen::VectorXd x = x0;
  for (const auto & u : inputs) {
    if (u.size() != sys.inputs()) { throw std::invalid_argument("input has wrong dimension"); }
    log.outputs.push_back(sys.C * x);
    log.inputs.push_back(u);
    x = sys.Ad * x + sys.Bd * u;
  }
  return log;
}

IoLog collect_excitation(const DiscreteLti & sys, int steps, std::uint64_t seed, double amplitude)
{
  if (steps < 0) { throw std::invalid_argument("step count must be non-negative"); }
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);

  std::vector<Eigen::VectorXd> inputs(static_cast<std::size_t>(steps), Eigen::VectorXd(sys.inputs()));
  for (auto & u : inputs) {
    for (Eigen::Index i = 0; i < u.size(); ++i) { u(i) = amplitude * dist(gen); }
  }
  return simulate(sys, Eigen::VectorXd::Zero(sys.states()), inputs);
}

HankelPair build_hankel(const IoLog & log, int sigma, int ell)
{
  if (sigma < 1 || ell < 1) { throw std::invalid_argument("sigma and ell must be positive"); }
  if (log.inputs.size() != log.outputs.size()) { throw std::invalid_argument("log inputs and outputs differ in length"); }
  const int depth = sigma + ell;
  const int T     = static_cast<int>(log.size());
  if (T < depth) {
    throw std::invalid_argument(
      "log of length " + std::to_string(T) + " is too short for Hankel depth " + std::to_string(depth));
  }

  HankelPair h;
  h.sigma = sigma;
  h.ell   = ell;
  h.ng    = T - depth + 1;
  h.nu    = static_cast<int>(log.inputs.front().size());
  h.ny    = static_cast<int>(log.outputs.front().size());
  h.U.resize(depth * h.nu, h.ng);
  h.Y.resize(depth * h.ny, h.ng);
  for (int j = 0; j < h.ng; ++j) {
    for (int i = 0; i < depth; ++i) {
      h.U.block(i * h.nu, j, h.nu, 1) = log.inputs[static_cast<std::size_t>(i + j)];
      h.Y.block(i * h.ny, j, h.ny, 1) = log.outputs[static_cast<std::size_t>(i + j)];
    }
  }
  return h;
}

Eigen::Index input_hankel_rank(const HankelPair & hankel)
{
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(hankel.U);
  return qr.rank();
}

ContinuousLti oscillating_masses(double delta)
{
  ContinuousLti sys;
  sys.A.resize(4, 4);
  sys.A << 0, 0, 1, 0,
           0, 0, 0, 1,
          -2, 1, 0, 0,
           1, -2, 0, 0;
  sys.B.resize(4, 2);
  sys.B << 0, 0,
           0, 0,
           1, 0,
           0, 1;
  sys.C     = Eigen::MatrixXd::Identity(4, 4);
  sys.delta = delta;
  return sys;
}

Equilibrium output_equilibrium(const DiscreteLti & sys, const Eigen::VectorXd & y_target)
{
  sys.validate();
  if (y_target.size() != sys.outputs()) { throw std::invalid_argument("set-point has wrong dimension"); }
  const Eigen::Index nx = sys.states(), nu = sys.inputs(), ny = sys.outputs();

  // [I - Ad, -Bd; C, 0] [x; u] = [0; y]
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(nx + ny, nx + nu);
  lhs.topLeftCorner(nx, nx)     = Eigen::MatrixXd::Identity(nx, nx) - sys.Ad;
  lhs.topRightCorner(nx, nu)    = -sys.Bd;
  lhs.bottomLeftCorner(ny, nx)  = sys.C;
  Eigen::VectorXd rhs           = Eigen::VectorXd::Zero(nx + ny);
  rhs.tail(ny)                  = y_target;

  const Eigen::VectorXd sol = lhs.completeOrthogonalDecomposition().solve(rhs);
  return Equilibrium{sol.head(nx), sol.tail(nu), (lhs * sol - rhs).norm()};
}

LtiPlant::LtiPlant(DiscreteLti sys, Eigen::VectorXd x0) : sys_(std::move(sys)), x_(std::move(x0))
{
  sys_.validate();
  if (x_.size() != sys_.states()) { throw std::invalid_argument("initial state has wrong dimension"); }
}

void LtiPlant::step(const Eigen::VectorXd & u)
{
  if (u.size() != sys_.inputs()) { throw std::invalid_argument("input has wrong dimension"); }
  x_ = sys_.Ad * x_ + sys_.Bd * u;
}

void write_log_csv(std::ostream & os, const IoLog & log)
{
  if (log.size() == 0) {
    os << "k\n";
    return;
  }
  const Eigen::Index nu = log.inputs.front().size(), ny = log.outputs.front().size();
  os << "k";
  for (Eigen::Index i = 1; i <= nu; ++i) { os << ",u_" << i; }
  for (Eigen::Index i = 1; i <= ny; ++i) { os << ",y_" << i; }
  os << '\n';
  const auto old_precision = os.precision(17);
  for (std::size_t k = 0; k < log.size(); ++k) {
    os << k;
    for (Eigen::Index i = 0; i < nu; ++i) { os << ',' << log.inputs[k](i); }
    for (Eigen::Index i = 0; i < ny; ++i) { os << ',' << log.outputs[k](i); }
    os << '\n';
  }
  os.precision(old_precision);
}

}  // namespace deepc
