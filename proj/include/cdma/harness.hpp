#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cdma/detector.hpp"
#include "cdma/ensemble.hpp"
#include "cdma/popdyn.hpp"

namespace cdma {

enum class ExperimentKind { DetectSweep, PopdynScan, MomentCheck, NaesatCensus, EquivalenceCheck };

std::string_view to_string(ExperimentKind e);
ExperimentKind parse_experiment(std::string_view s);

inline constexpr int kSchemaVersion = 1;

// JSON layout (every key optional unless noted, unknown keys rejected):
//   schema_version   1 (required)
//   experiment       DetectSweep | PopdynScan | MomentCheck | NaesatCensus | EquivalenceCheck (required)
//   spec             {users, chips, user_degree, chip_degree, modulation, regularity};
//                    chips may be omitted for FullyRegular specs
//   chip_degrees     PopdynScan only: list of L values, default [spec.chip_degree]
//   sigma0_grid      list of numbers, or {start, stop, steps} (inclusive, evenly spaced)
//   trials, replicas, seed, threads, output_dir
//   detector         {max_iterations, tolerance, damping, init, informed_magnitude}
//   popdyn           {population_size, max_sweeps, window, tolerance, field_cap,
//                     measure_sweeps, measure_batches, samples}
struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  ExperimentKind experiment = ExperimentKind::DetectSweep;
  EnsembleSpec spec;
  std::vector<int> chip_degrees;
  std::vector<double> sigma0_grid;
  int trials = 1;
  int replicas = 4;
  BPParams bp;
  PDParams pd;
  std::uint64_t seed = 1;
  std::string output_dir;
  int threads = 1;

  /// Throws ConfigError naming every offending field.
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& path);

/// "start:stop:steps" with steps >= 1; steps == 1 yields {start}.
std::vector<double> parse_grid(std::string_view text);
std::vector<double> linear_grid(double start, double stop, int steps);

struct PointStatus {
  std::string point;
  bool ok = true;
  std::string message;
};

struct ExperimentResult {
  std::filesystem::path output_dir;
  std::vector<std::filesystem::path> files;  // relative to output_dir, manifest last
  std::vector<PointStatus> points;
  double wall_seconds = 0.0;

  bool all_ok() const;
};

/// Runs the configured experiment, writes CSV/JSON artifacts and
/// manifest.txt into config.output_dir. Point-level failures are recorded in
/// the manifest and in `points`; they do not throw.
///
/// Seeds: point i of the grid uses derive_seed(config.seed, i); trial or
/// replica t of that point uses derive_seed(point_seed, t). Results do not
/// depend on config.threads.
ExperimentResult run_experiment(const ExperimentConfig& config);

std::string library_version();

// ----- building blocks shared with the acceptance suite ---------------------

/// |a - b| in units of the combined standard error.
double z_score(const Estimate& a, const Estimate& b);

/// Mean and standard error of a sample.
Estimate sample_estimate(std::span<const double> xs);

struct DetectPoint {
  double sigma0 = 0.0;
  double q = 0.0;
  Estimate ber_exact;  // value NaN when K exceeds the enumeration budget
  Estimate ber_bp;
  double bp_convergence_rate = 0.0;
  int trials = 0;
};

/// `trials` independent (code, bits, noise) draws at one noise level, each
/// decoded by BP and, when K allows, by exact enumeration. Trial t uses
/// derive_seed(seed, t).
DetectPoint detect_point(const EnsembleSpec& spec, double sigma0, int trials, const BPParams& bp,
                         std::uint64_t seed, int threads = 1);

struct ReplicaSummary {
  Estimate ber;          // mean and SE over replicas
  Estimate free_energy;  // per chip
  Estimate mean_tanh;
  bool all_converged = true;
  std::vector<SaddleSolution> runs;
};

/// Independent population dynamics runs; replica r uses pd.seed =
/// derive_seed(seed, r). Estimates and SEs come from the spread between
/// replicas, which also captures slow collective fluctuations of the
/// population that within-run batch means miss.
ReplicaSummary run_replicas(const EnsembleSpec& spec, double q, const PDParams& pd, InitMode init, int replicas,
                            std::uint64_t seed, int threads = 1);

}  // namespace cdma
