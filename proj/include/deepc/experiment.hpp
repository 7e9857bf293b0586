#pragma once

/**
 * @file
 * @brief Closed-loop DeePC experiments under output-data attacks.
 *
 * A run collects offline data from the true plant, builds the Hankel
 * matrices, warms up for sigma steps with zero input, and then replans every
 * `replan_interval` steps. Between replans the corresponding segment of the
 * last plan is applied open loop. Perturbations only ever touch the
 * controller's copy of y_ini.
 */

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "deepc/attack.hpp"
#include "deepc/config.hpp"
#include "deepc/plant.hpp"
#include "deepc/problem.hpp"
#include "deepc/solver.hpp"

namespace deepc {

DiscreteLti make_plant(const PlantSpec & spec);

/// Plant, Hankel data and the time-invariant part of the DeePC problem.
struct ExperimentSetup
{
  DiscreteLti plant;
  DpcProblem base;  ///< u_ini, y_ini, y_ref and u_ref are filled in per replan
  Eigen::VectorXd x0;
  Eigen::Index input_rank = 0;  ///< rank of the input Hankel matrix
  bool persistently_exciting = false;
};

ExperimentSetup prepare_experiment(const ExperimentConfig & cfg);

/// Output reference at absolute step k.
Eigen::VectorXd reference_output(const ExperimentConfig & cfg, long k, Eigen::Index ny);
/// Input reference; the equilibrium input when configured that way.
Eigen::VectorXd reference_input(const ExperimentConfig & cfg, const DiscreteLti & plant);
/// Attacker target input at absolute step k.
Eigen::VectorXd target_input(const ExperimentConfig & cfg, long k, Eigen::Index nu);

/// Fills the online window and the horizon references of `prob` for a replan at step k.
void set_replan_data(
  DpcProblem & prob,
  const ExperimentConfig & cfg,
  const Eigen::VectorXd & u_ref,
  const std::vector<Eigen::VectorXd> & inputs,
  const std::vector<Eigen::VectorXd> & outputs,
  long k);

/// Attacker spec over the horizon starting at step k.
AttackSpec attack_spec_at(const ExperimentConfig & cfg, long k, Eigen::Index nu, int ell);

SolverOptions solver_options(const RunSpec & run);

struct StepRecord
{
  long k = 0;
  Eigen::VectorXd u;
  Eigen::VectorXd y;
  Eigen::VectorXd y_ref;
  double pnorm = 0.0;
  int solver_iters = 0;
  double residual = 0.0;
};

struct ReplanRecord
{
  long k = 0;
  Perturbation perturbation;
  double psi_nominal = 0.0;   ///< attacker objective at the unperturbed plan
  double psi_attacked = 0.0;  ///< attacker objective at the plan actually applied
  int nominal_iters = 0;
  int attacked_iters = 0;
  double residual = 0.0;
};

struct TrackingMetrics
{
  long begin = 0, end = 0;
  Eigen::VectorXd rms;   ///< per output channel
  Eigen::VectorXd peak;  ///< per output channel, max |y - y_ref|
};

struct RunResult
{
  std::vector<StepRecord> steps;
  std::vector<ReplanRecord> replans;
  TrackingMetrics metrics;
};

/// Solver failure inside the loop; carries the log up to the failing step.
class RunError : public std::runtime_error
{
public:
  RunError(const std::string & what, long step, RunResult partial)
      : std::runtime_error(what), step_(step), partial_(std::move(partial))
  {}
  long step() const { return step_; }
  const RunResult & partial() const { return partial_; }

private:
  long step_;
  RunResult partial_;
};

/// Data handed to an observer at every replan, after the perturbation is chosen.
struct ReplanContext
{
  long k;
  const DpcProblem & problem;  ///< unperturbed problem at this instant
  const SaddlePoint & nominal;
  const Perturbation & perturbation;
  const AttackSpec & spec;
};
using ReplanObserver = std::function<void(const ReplanContext &)>;

struct RunHooks
{
  ReplanObserver on_replan;
  /// Directory for a dump of the first replan's QP (and J, K, eta under algorithm1).
  std::optional<std::filesystem::path> dump_dir;
};

RunResult run_closed_loop(const ExperimentConfig & cfg, const RunHooks & hooks = {});
RunResult run_closed_loop(const ExperimentConfig & cfg, const ExperimentSetup & setup, const RunHooks & hooks = {});

/// RMS and peak of y - y_ref over steps [begin, end); end = -1 means the whole log.
TrackingMetrics compute_metrics(const std::vector<StepRecord> & steps, long begin, long end = -1);
TrackingMetrics compute_metrics(const RunResult & result, long begin, long end = -1);

/// Elementwise rms(a) / rms(b).
Eigen::VectorXd rms_ratio(const TrackingMetrics & a, const TrackingMetrics & b);

/// Trace CSV `k,u_*,y_*,yref_*,pnorm,solver_iters,residual` at full precision.
void write_trace_csv(std::ostream & os, const RunResult & result);
std::vector<StepRecord> read_trace_csv(std::istream & is);

void write_summary(std::ostream & os, const ExperimentConfig & cfg, const RunResult & result);

/// Writes P, q, H, b and the box bounds as CSV files into `dir`.
void write_qp_bundle(const std::filesystem::path & dir, const CompactQp & qp);

struct Geometry
{
  int nu, ny, sigma, ell, ng;
};

struct SizeRow
{
  Geometry geometry;
  Eigen::Index formula = 0;
  Eigen::Index measured = 0;
};

/// 2 ell (nu + ny) + sigma nu + ng.
Eigen::Index lsq_size_formula(const Geometry & g);

/**
 * @brief Adjoint system dimension, formula vs. runtime.
 *
 * The runtime column comes from solve_adjoint() on a data-free instance of
 * each geometry whose optimum is the origin.
 */
std::vector<SizeRow> report_lsq_sizes(const std::vector<Geometry> & geometries);
void write_size_table(std::ostream & os, const std::vector<SizeRow> & rows);

/// Masses and quadrotor geometries at ell = 25, 50, 100.
std::vector<Geometry> default_size_geometries();

}  // namespace deepc
