#pragma once

/**
 * @file
 * @brief Ground-truth LTI plants, offline data collection and Hankel matrices.
 *
 * Nothing in this header is visible to the controller except the Hankel
 * matrices and the online input/output window.
 */

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace deepc {

/// Continuous-time LTI model x' = A x + B u, y = C x, sampled every `delta` seconds.
struct ContinuousLti
{
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;
  double delta = 0.1;
};

/// Discrete-time LTI model x+ = Ad x + Bd u, y = C x.
struct DiscreteLti
{
  Eigen::MatrixXd Ad;
  Eigen::MatrixXd Bd;
  Eigen::MatrixXd C;

  Eigen::Index states() const { return Ad.rows(); }
  Eigen::Index inputs() const { return Bd.cols(); }
  Eigen::Index outputs() const { return C.rows(); }

  /// Throws std::invalid_argument if the matrices do not fit together.
  void validate() const;
};

/// Paired input/output record: outputs[k] is measured before inputs[k] is applied.
struct IoLog
{
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> outputs;

  std::size_t size() const { return inputs.size(); }
};

/**
 * @brief Block-Hankel matrices of depth sigma + ell built from one IoLog.
 *
 * Column j of U stacks u_j, ..., u_{j+sigma+ell-1}; the first sigma block rows
 * are the "past" part and the remaining ell block rows the "future" part.
 */
struct HankelPair
{
  Eigen::MatrixXd U;
  Eigen::MatrixXd Y;
  int sigma = 0;
  int ell = 0;
  int ng = 0;
  int nu = 0;
  int ny = 0;

  auto Up() const { return U.topRows(sigma * nu); }
  auto Uf() const { return U.bottomRows(ell * nu); }
  auto Yp() const { return Y.topRows(sigma * ny); }
  auto Yf() const { return Y.bottomRows(ell * ny); }
};

/// Zero-order-hold discretization through the augmented exponential exp(delta [[A, B], [0, 0]]).
DiscreteLti discretize(const ContinuousLti & sys);

/// Roll out from x0; log has one entry per input.
IoLog simulate(const DiscreteLti & sys, const Eigen::VectorXd & x0, std::span<const Eigen::VectorXd> inputs);

/// Uniform i.i.d. excitation on [-amplitude, amplitude] from x0 = 0.
IoLog collect_excitation(const DiscreteLti & sys, int steps, std::uint64_t seed, double amplitude);

/// Throws std::invalid_argument when the log is shorter than sigma + ell.
HankelPair build_hankel(const IoLog & log, int sigma, int ell);

/// Numerical rank of [Up; Uf]; data is persistently exciting when this equals (sigma + ell) * nu.
Eigen::Index input_hankel_rank(const HankelPair & hankel);

/// Two unit masses between three unit springs, forces on each mass, full state output.
ContinuousLti oscillating_masses(double delta = 0.1);

/**
 * @brief Equilibrium (x, u) with C x = y_target and x = Ad x + Bd u.
 *
 * Solved in the least-squares sense; the caller can check `residual`.
 */
struct Equilibrium
{
  Eigen::VectorXd state;
  Eigen::VectorXd input;
  double residual = 0.0;
};
Equilibrium output_equilibrium(const DiscreteLti & sys, const Eigen::VectorXd & y_target);

/// The plant the closed loop drives. Holds its own state; outputs carry no feedthrough.
class LtiPlant
{
public:
  LtiPlant(DiscreteLti sys, Eigen::VectorXd x0);

  Eigen::VectorXd output() const { return sys_.C * x_; }
  const Eigen::VectorXd & state() const { return x_; }
  const DiscreteLti & model() const { return sys_; }

  void step(const Eigen::VectorXd & u);

private:
  DiscreteLti sys_;
  Eigen::VectorXd x_;
};

/// CSV with header k,u_1..u_nu,y_1..y_ny.
void write_log_csv(std::ostream & os, const IoLog & log);

}  // namespace deepc
