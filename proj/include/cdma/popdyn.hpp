#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cdma/ensemble.hpp"
#include "cdma/seeds.hpp"

namespace cdma {

// Population dynamics for the replica-symmetric cavity equations of the chip
// and user regular sparse ensemble.
//
// All messages are half log-likelihood ratios of *correct* decoding: the sent
// bits are gauged to +1, so a large positive value means the site is almost
// surely decoded correctly. In the modulated ensemble the gauge is exact and
// labels are not needed. In the unmodulated ensemble each member carries the
// label a = true bit at its root site; after gauging, the chip residual reads
//   omega + sum_l A a_l (1 - tau_l),
// i.e. the unmodulated kernel is the modulated one with effective modulation
// x_l = A a_l, and the field/bias distributions become joint in (a, value).

enum class PopulationKind { ModulatedBias, ModulatedField, JointBias, JointField };
enum class InitMode { Random, Informed, Zero };

/// How a member label enters the unmodulated chip residual
/// omega + sum_l x_l (1 - tau_l): Scaled uses x_l = A a_l, Literal uses
/// x_l = a_l (unit amplitude).
enum class UnmodulatedReading { Scaled, Literal };

std::string_view to_string(UnmodulatedReading r);
UnmodulatedReading parse_unmodulated_reading(std::string_view s);

std::string_view to_string(InitMode m);
InitMode parse_init_mode(std::string_view s);

struct Population {
  PopulationKind kind = PopulationKind::ModulatedBias;
  std::vector<double> values;
  std::vector<std::int8_t> labels;  // joint kinds only, one per member

  std::size_t size() const { return values.size(); }
  bool joint() const { return kind == PopulationKind::JointBias || kind == PopulationKind::JointField; }
  double plus_label_fraction() const;
};

struct PDParams {
  std::size_t population_size = 10'000;
  int max_sweeps = 1000;
  int window = 50;
  double tolerance = 1e-3;
  double field_cap = 300.0;
  std::uint64_t seed = 1;
  // Sweeps after convergence over which BER and free energy are averaged,
  // grouped into batches for the standard error.
  int measure_sweeps = 50;
  int measure_batches = 10;
  // Draws per estimate; 0 means population_size.
  std::size_t samples = 0;
  // Always run max_sweeps. `converged` still records whether the drift test
  // passed at some window boundary.
  bool run_all_sweeps = false;
  // Unmodulated only: ignore labels when drawing (symmetric restriction).
  bool restrict_symmetric = false;
  // Unmodulated only.
  UnmodulatedReading reading = UnmodulatedReading::Scaled;

  void validate() const;
  std::size_t sample_count() const { return samples ? samples : population_size; }
};

/// Spec with only the cavity-relevant parts set: chip and user regular,
/// degrees C and L, K = L and N = C.
EnsembleSpec cavity_spec(int user_degree, int chip_degree, Modulation m);

/// Random: i.i.d. N(0, 1). Informed: +field_cap/2 (correct-aligned in the
/// gauge, hence aligned with the label for joint kinds). Zero: all 0.
/// Joint kinds get labels drawn uniformly.
Population init_population(PopulationKind kind, InitMode mode, const PDParams& params, Rng& rng);

struct PopulationState {
  Population bias;
  Population field;
};

/// One sweep of the modulated kernel: population_size online replacements of
/// a uniformly chosen field slot (sum of C-1 biases) interleaved with a
/// uniformly chosen bias slot (chip update from L-1 fields, L code values,
/// one Gaussian noise sample).
void pd_sweep_modulated(PopulationState& state, const EnsembleSpec& spec, double q, double field_cap, Rng& rng);

/// Unmodulated counterpart on joint (label, value) populations. Field
/// update: root label a uniform, C-1 biases drawn among members with label a.
/// Bias update: root label a_L uniform, L-1 fields with labels a_l drawn
/// uniformly and values drawn among members with those labels.
void pd_sweep_unmodulated(PopulationState& state, const EnsembleSpec& spec, double q, double field_cap, Rng& rng,
                          bool restrict_symmetric = false,
                          UnmodulatedReading reading = UnmodulatedReading::Scaled);

/// Half log-odds of correct decoding at the root of one chip:
///   u = 1/2 sum_{t} t log Z(t),
///   Z(t) = sum_{tau interior} exp{-Q (omega + sum_{l<L} x_l (1 - tau_l) + x_L (1 - t))^2 + sum_{l<L} h_l tau_l}.
/// `fields` has L-1 entries, `modulation` L entries (root last).
double chip_bias(std::span<const double> fields, std::span<const double> modulation, double omega, double q);

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

/// P(H < 0) + P(H = 0) / 2 over `samples` full fields H = sum of C biases.
Estimate ber_from_population(const Population& bias, const EnsembleSpec& spec, std::size_t samples, Rng& rng);

struct FreeEnergyTerms {
  Estimate interaction;  // E log Z_I
  Estimate site;         // E[log cosh(sum_C u) - C log cosh u]
  Estimate edge;         // E log(1 + tanh h tanh u)
  // E[(C-1) log cosh H - sum_c log cosh(H - u_c)] with H = sum of C biases;
  // equals C * edge - site at a fixed point, with far smaller variance.
  Estimate variable;
  Estimate total;  // per chip, see free_energy_terms()
};

/// Bethe free energy per chip, f = -(1/N) <log sum_tau exp{-H(tau)}>:
///   f = -E log Z_I - alpha E[log cosh(sum_C u) - C log cosh u]
///       + alpha C E log(1 + tanh h tanh u) - alpha log 2,
/// with Z_I the chip partition sum under normalised cavity fields. The total
/// is evaluated as -E log Z_I + alpha * variable - alpha log 2, where the
/// interaction term uses -Q omega^2 (mean exactly -1/2) as a control variate.
/// The three separate terms are reported for diagnostics.
FreeEnergyTerms free_energy_terms(const PopulationState& state, const EnsembleSpec& spec, double q,
                                  std::size_t samples, Rng& rng,
                                  UnmodulatedReading reading = UnmodulatedReading::Scaled);

struct SweepStats {
  double ber;
  double mean_tanh;
};

struct SaddleSolution {
  PopulationState populations;
  EnsembleSpec spec;
  double q = 0.0;
  InitMode init_mode = InitMode::Random;
  int sweeps = 0;
  bool converged = false;
  Estimate ber;
  Estimate free_energy;           // per chip
  Estimate free_energy_per_user;  // per chip / alpha
  FreeEnergyTerms terms;
  Estimate mean_tanh;
  std::vector<SweepStats> history;
};

/// Mutual information per chip in nats, I(b; y)/N = alpha log 2 + f - 1/2,
/// for the matched Gaussian channel.
double spectral_efficiency(double free_energy_per_chip, const EnsembleSpec& spec);

SweepStats population_stats(const PopulationState& state, const EnsembleSpec& spec, std::size_t samples, Rng& rng);

/// Sweeps until the window-averaged BER and mean tanh h both drift less than
/// the tolerance between consecutive windows, or max_sweeps. Then runs
/// measure_sweeps more sweeps and averages estimates over them.
/// Non-convergence is reported through `converged`, never thrown.
SaddleSolution run_to_convergence(const EnsembleSpec& spec, double q, const PDParams& params, InitMode init);

/// Continues an existing solution by `sweeps` sweeps and re-measures.
SaddleSolution continue_solution(const SaddleSolution& base, const PDParams& params, int sweeps);

/// Binned L1 distance between the tanh(h) histograms of the a=+1 and a=-1
/// members of a joint population.
double symmetry_check(const Population& joint, int bins = 40);

/// Quantile of the same distance when labels are resampled from the pooled
/// population (bootstrap under the symmetric hypothesis).
double symmetry_noise_floor(const Population& joint, int resamples, double quantile, Rng& rng, int bins = 40);

struct BranchPoint {
  double sigma0 = 0.0;
  double q = 0.0;
  InitMode init = InitMode::Random;
  Estimate ber;
  Estimate free_energy;
  bool converged = false;
  bool multivalued = false;
  int sweeps = 0;
};

struct BranchTable {
  std::vector<BranchPoint> rows;  // per sigma0: Random row then Informed row
  bool any_multivalued = false;
  double onset_q = 0.0;  // smallest Q flagged multivalued, 0 if none
};

inline constexpr double kMultivaluedSigmas = 5.0;

/// Random- and Informed-init solutions at each noise level. A point is
/// multivalued when the branch BERs differ by more than 5 combined SE.
/// Points run on up to `threads` workers; results do not depend on it.
BranchTable metastability_scan(const EnsembleSpec& spec, std::span<const double> sigma0_grid,
                               const PDParams& params, int threads = 1);

}  // namespace cdma
