#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "cdma/channel.hpp"
#include "cdma/ensemble.hpp"

namespace cdma {

enum class DetectMethod { Exact, BeliefPropagation };
enum class BPInit { Uninformed, Informed };

std::string_view to_string(DetectMethod m);

/// Per-user posterior P(tau_k = +1 | y) at beta = 1.
struct PosteriorMarginals {
  std::vector<double> prob_plus;
  // Posterior half log-odds, prob_plus = 1 / (1 + exp(-2 llr)).
  std::vector<double> llr;
  DetectMethod method = DetectMethod::Exact;
  int iterations = 0;
  bool converged = true;
  double residual = 0.0;
};

struct BPParams {
  int max_iterations = 1000;
  double tolerance = 1e-8;  // on max |delta u| between sweeps
  double damping = 0.0;     // u <- damping * u_old + (1 - damping) * u_new
  BPInit init = BPInit::Uninformed;
  double informed_magnitude = 150.0;

  void validate() const;
};

/// Edge-indexed messages (edge ids from SparseCode). bias = u_{mu k}
/// (chip to user), field = h_{k mu} (user to chip), both half log-odds.
struct BPMessages {
  std::vector<double> bias;
  std::vector<double> field;
};

inline constexpr int kMaxExactUsers = 24;
inline constexpr int kMaxChipDegree = 16;

/// Exhaustive 2^K enumeration of exp{-H(tau)}. Throws CapacityError for K > 24.
PosteriorMarginals exact_marginals(const SparseCode& code, const TransmissionRecord& rec, double q);

/// Flooding sum-product on the Tanner graph. Throws CapacityError when a
/// chip has more than 16 users. `messages` receives the final state if given.
PosteriorMarginals bp_detect(const SparseCode& code, const TransmissionRecord& rec, double q,
                             const BPParams& params, BPMessages* messages = nullptr);

/// log sum_tau exp{-H(tau)} by enumeration.
double exact_log_partition(const SparseCode& code, const TransmissionRecord& rec, double q);

/// Bethe approximation to -(1/N) log sum_tau exp{-H(tau)} from a set of BP
/// messages; exact when the Tanner graph is a forest and the messages are at
/// their fixed point.
double bethe_free_energy(const SparseCode& code, const TransmissionRecord& rec, double q,
                         const BPMessages& messages);

struct HardDecisions {
  std::vector<int> bits;
  std::vector<bool> ties;
};

/// Sign of the posterior magnetisation; exact ties go to +1 and are flagged.
HardDecisions hard_decisions(const PosteriorMarginals& m);

struct OverlapBer {
  double overlap;
  double ber;
};

/// m = (1/K) sum b_k tau_k with tied sites contributing 0; BER = (1 - m) / 2.
OverlapBer overlap_ber(std::span<const int> decoded, std::span<const int> sent,
                       const std::vector<bool>& ties = {});

}  // namespace cdma
