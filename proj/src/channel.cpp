#include "cdma/channel.hpp"

#include <cmath>

#include "cdma/errors.hpp"

namespace cdma {

double psd_Q(double sigma0) {
  if (!(sigma0 > 0.0)) throw DomainError("psd_Q: sigma0 must be positive");
  return 1.0 / (2.0 * sigma0 * sigma0);
}

double sigma_from_Q(double q) {
  if (!(q > 0.0)) throw DomainError("sigma_from_Q: Q must be positive");
  return std::sqrt(1.0 / (2.0 * q));
}

std::vector<int> sample_bits(int users, Rng& rng) {
  if (users < 1) throw DomainError("sample_bits: K must be >= 1");
  std::bernoulli_distribution coin(0.5);
  std::vector<int> bits(users);
  for (auto& b : bits) b = coin(rng) ? 1 : -1;
  return bits;
}

std::vector<double> noiseless_signal(const SparseCode& code, std::span<const int> bits) {
  if (static_cast<int>(bits.size()) != code.users())
    throw DomainError("transmit: bit vector length differs from K");
  std::vector<double> signal(code.chips(), 0.0);
  for (int mu = 0; mu < code.chips(); ++mu)
    for (const auto& link : code.chip_links(mu)) signal[mu] += bits[link.user] * link.value;
  return signal;
}

TransmissionRecord transmit_with_noise(const SparseCode& code, std::span<const int> bits,
                                       std::span<const double> noise, double sigma0) {
  psd_Q(sigma0);  // validates sigma0
  if (static_cast<int>(noise.size()) != code.chips())
    throw DomainError("transmit: noise vector length differs from N");
  for (int b : bits)
    if (b != 1 && b != -1) throw DomainError("transmit: bits must be +1 or -1");
  TransmissionRecord rec;
  rec.received = noiseless_signal(code, bits);
  rec.bits.assign(bits.begin(), bits.end());
  rec.noise.assign(noise.begin(), noise.end());
  for (int mu = 0; mu < code.chips(); ++mu) rec.received[mu] += noise[mu];
  rec.sigma0 = sigma0;
  return rec;
}

TransmissionRecord transmit(const SparseCode& code, std::span<const int> bits, double sigma0, Rng& rng) {
  psd_Q(sigma0);
  if (static_cast<int>(bits.size()) != code.users())
    throw DomainError("transmit: bit vector length differs from K");
  std::normal_distribution<double> gauss(0.0, sigma0);
  std::vector<double> noise(code.chips());
  for (auto& v : noise) v = gauss(rng);
  return transmit_with_noise(code, bits, noise, sigma0);
}

nlohmann::json to_json(const TransmissionRecord& rec) {
  nlohmann::json j;
  j["bits"] = rec.bits;
  j["noise"] = rec.noise;
  j["received"] = rec.received;
  j["sigma0"] = rec.sigma0;
  j["Q"] = rec.Q();
  if (rec.seed) j["seed"] = *rec.seed;
  if (!rec.code_ref.empty()) j["code"] = rec.code_ref;
  return j;
}

TransmissionRecord record_from_json(const nlohmann::json& j) {
  TransmissionRecord rec;
  try {
    rec.bits = j.at("bits").get<std::vector<int>>();
    rec.noise = j.at("noise").get<std::vector<double>>();
    rec.received = j.at("received").get<std::vector<double>>();
    rec.sigma0 = j.at("sigma0").get<double>();
    if (j.contains("seed")) rec.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("code")) rec.code_ref = j.at("code").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("record JSON: ") + e.what());
  }
  psd_Q(rec.sigma0);
  if (rec.noise.size() != rec.received.size())
    throw ConfigError("record JSON: noise and received lengths differ");
  if (j.contains("Q") && std::fabs(j.at("Q").get<double>() - rec.Q()) > 1e-9 * rec.Q())
    throw ConfigError("record JSON: Q inconsistent with sigma0");
  return rec;
}

}  // namespace cdma
