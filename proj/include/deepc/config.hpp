#pragma once

/**
 * @file
 * @brief Experiment configuration, read from and written to JSON.
 *
 * Every section and key is optional; omitted values take the defaults below.
 * Unknown keys are rejected. Per-channel lists of length one broadcast to all
 * channels.
 */

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepc {

using RowMatrix = std::vector<std::vector<double>>;

struct PlantSpec
{
  /// "masses", "continuous" (A, B, C, delta) or "discrete" (A, B, C taken as Ad, Bd, C).
  std::string type = "masses";
  double delta = 0.1;
  RowMatrix A, B, C;

  bool operator==(const PlantSpec &) const = default;
};

struct DpcSpec
{
  int sigma = 6;
  int ell = 25;
  int ng = 500;
  double lambda_g = 100.0;
  double lambda_s = 1e6;
  std::vector<double> q_weights{10.0};  ///< diagonal of Q per output channel, repeated over the horizon
  std::vector<double> r_weights{1.0};
  std::vector<double> u_lower{-1.0}, u_upper{1.0};
  std::vector<double> y_lower{-5.0}, y_upper{5.0};

  bool operator==(const DpcSpec &) const = default;
};

struct OfflineSpec
{
  double amplitude = 1.0;
  std::uint64_t seed = 1;

  bool operator==(const OfflineSpec &) const = default;
};

struct ReferenceSpec
{
  /// "setpoint": y_ref = offset. "sinusoid": y_ref = offset + amplitude sin(omega t + phase).
  std::string type = "setpoint";
  std::vector<double> offset{1.0, 1.0, 0.0, 0.0};
  std::vector<double> amplitude{0.0};
  double omega = 1.0;
  std::vector<double> phase{0.0};
  /// true: u_ref is the input holding the setpoint; false: u_ref = `u`.
  bool u_equilibrium = true;
  std::vector<double> u;

  bool operator==(const ReferenceSpec &) const = default;
};

struct AttackConfig
{
  /// "none", "random", "algorithm1" or "oracle".
  std::string mode = "none";
  double rho = 0.05;
  /// Target input amplitude * sin(omega t + phase) per input channel.
  std::vector<double> target_amplitude{1.0};
  double target_omega = 1.0;
  std::vector<double> target_phase{0.0};
  std::uint64_t seed = 0;
  int oracle_samples = 500;

  bool operator==(const AttackConfig &) const = default;
};

struct RunSpec
{
  int steps = 200;
  int replan_interval = 10;
  std::vector<double> x0;  ///< empty means the zero state
  double tol = 1e-9;
  int max_iter = 200000;
  /// "interior-point" or "pipg".
  std::string solver = "interior-point";
  int metric_begin = 50;
  int metric_end = -1;  ///< exclusive; -1 means the end of the run
  std::string out = "out";

  bool operator==(const RunSpec &) const = default;
};

struct ExperimentConfig
{
  PlantSpec plant;
  DpcSpec dpc;
  OfflineSpec offline;
  ReferenceSpec reference;
  AttackConfig attack;
  RunSpec run;

  bool operator==(const ExperimentConfig &) const = default;
};

class ParseError : public std::runtime_error
{
public:
  ParseError(const std::string & what, int line) : std::runtime_error(what), line_(line) {}
  int line() const { return line_; }

private:
  int line_;
};

class ValidationError : public std::runtime_error
{
public:
  ValidationError(std::string field, const std::string & what)
      : std::runtime_error(field + ": " + what), field_(std::move(field))
  {}
  const std::string & field() const { return field_; }

private:
  std::string field_;
};

/// Parses and validates; throws ParseError or ValidationError.
ExperimentConfig parse_config(const std::string & text);
ExperimentConfig load_config(const std::filesystem::path & path);

/// Full JSON with every field spelled out.
std::string serialize_config(const ExperimentConfig & cfg);

/// Checks values and cross-field dimensions; throws ValidationError.
void validate_config(const ExperimentConfig & cfg);

}  // namespace deepc
