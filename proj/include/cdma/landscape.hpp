#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "cdma/channel.hpp"
#include "cdma/ensemble.hpp"
#include "cdma/seeds.hpp"

namespace cdma {

/// Energy H(tau) = Q sum_mu (nu_mu + sum_k s_{mu k}(b_k - tau_k))^2.
double hamiltonian(const SparseCode& code, const TransmissionRecord& rec, std::span<const int> tau);

/// Pairwise form H(tau) = -(sum_{k != k'} J tau tau' + sum_k h_k tau_k) + offset.
///
/// Each unordered pair is stored once under (min, max) with
/// J_{kk'} = -Q sum_mu s_{mu k} s_{mu k'}; the ordered-pair sum is evaluated
/// as 2 sum_{k<k'}. Pairs that share no chip are absent.
struct CouplingField {
  std::map<std::pair<int, int>, double> couplings;
  std::vector<double> fields;
  double q = 0.0;
  double constant_offset = 0.0;

  double coupling(int a, int b) const;
  double energy(std::span<const int> tau) const;
  /// Coupling part only, -2 sum_{k<k'} J tau tau'.
  double coupling_energy(std::span<const int> tau) const;
};

CouplingField coupling_field_decomposition(const SparseCode& code, const TransmissionRecord& rec, double q);

struct EnergyDifference {
  double direct;
  double coupling_form;
};

/// H(tau1) - H(tau2) evaluated both ways.
EnergyDifference energy_difference_check(const SparseCode& code, const TransmissionRecord& rec, double q,
                                         std::span<const int> tau1, std::span<const int> tau2);

enum class FieldEnsemble { Dense, SparseBpsk, SparseUnmodulated };

std::string_view to_string(FieldEnsemble e);

/// Gaussian summary of the gauged local field b_k h_k.
struct MomentPrediction {
  double mean;
  double variance;
  // Variance without the (2Q)^2 interference term.
  double truncated_variance;
  FieldEnsemble ensemble;
};

/// Dense: mean 2Q/alpha, variance (2Q)^2/alpha + 2Q/alpha.
/// Sparse (chip and user regular): variance (L-1)(2Q)^2/(alpha L) + 2Q/alpha.
/// Unmodulated sparse codes share the sparse moments. Sparse predictions
/// need a FullyRegular spec; anything else is a DomainError.
MomentPrediction predicted_field_moments(const EnsembleSpec& spec, double q, FieldEnsemble ensemble);

struct EmpiricalMoments {
  double mean;
  double variance;
  double mean_se;
  double variance_se;
  std::size_t samples;
  std::vector<double> values;  // the gauged fields b_k h_k themselves
};

/// Monte Carlo over (code, bits, noise), one uniformly chosen user per trial.
/// Requires trials >= 100.
EmpiricalMoments empirical_field_moments(const EnsembleSpec& spec, double q, int trials, Rng& rng);

/// sum_{k<k'} tau_k tau_k' over one chip clique.
int chip_clique_spin_energy(std::span<const int> clique);

struct NaesatResult {
  // Fewest chips whose clique is all-equal, over all 2^K assignments.
  int min_all_equal = 0;
  std::uint64_t ground_state_count = 0;
  // Assignments attaining min_all_equal as bit masks (bit k set <=> tau_k = +1),
  // ascending; at most `max_states_kept` are stored.
  std::vector<std::uint64_t> ground_states;
  // Minimum of the coupling-only energy sum_mu sum_{k<k'} tau tau' and its
  // degeneracy. Coincides with the all-equal count ordering when L <= 3.
  int min_clique_energy = 0;
  std::uint64_t min_energy_count = 0;
};

/// Exhaustive census of the coupling-only landscape of an unmodulated code
/// (fields excluded). Throws CapacityError for K > 24.
NaesatResult naesat_ground_states(const SparseCode& code, std::size_t max_states_kept = 1 << 16);

/// Orders assignments by their field alignment sum_k h_k tau_k, best first.
std::vector<std::pair<std::uint64_t, double>> rank_by_field(std::span<const std::uint64_t> states,
                                                            std::span<const double> fields);

std::vector<int> spins_from_mask(std::uint64_t mask, int users);

}  // namespace cdma
