#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdma/ensemble.hpp"
#include "cdma/seeds.hpp"

namespace cdma {

/// Power spectral density 1 / (2 sigma0^2).
double psd_Q(double sigma0);

/// Noise level for a given Q, inverse of psd_Q.
double sigma_from_Q(double q);

std::vector<int> sample_bits(int users, Rng& rng);

/// One use of the synchronous chip channel y = nu + sum_k b_k s_k.
/// Q is always derived from sigma0.
struct TransmissionRecord {
  std::vector<int> bits;
  std::vector<double> noise;
  std::vector<double> received;
  double sigma0 = 1.0;
  std::optional<std::uint64_t> seed;
  std::string code_ref;

  double Q() const { return psd_Q(sigma0); }
};

/// Draws i.i.d. N(0, sigma0^2) chip noise and forms the received signal.
TransmissionRecord transmit(const SparseCode& code, std::span<const int> bits, double sigma0, Rng& rng);

/// Same, with caller-supplied noise (e.g. all zeros for noiseless checks).
TransmissionRecord transmit_with_noise(const SparseCode& code, std::span<const int> bits,
                                       std::span<const double> noise, double sigma0);

/// sum_k b_k s_{mu k} for every chip.
std::vector<double> noiseless_signal(const SparseCode& code, std::span<const int> bits);

nlohmann::json to_json(const TransmissionRecord& rec);
TransmissionRecord record_from_json(const nlohmann::json& j);

}  // namespace cdma
