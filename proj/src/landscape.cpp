#include "cdma/landscape.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "cdma/errors.hpp"

namespace cdma {

namespace {

void check_spins(std::span<const int> tau, int users) {
  if (static_cast<int>(tau.size()) != users) throw DomainError("spin vector length differs from K");
  for (int t : tau)
    if (t != 1 && t != -1) throw DomainError("spins must be +1 or -1");
}

}  // namespace

double hamiltonian(const SparseCode& code, const TransmissionRecord& rec, std::span<const int> tau) {
  check_spins(tau, code.users());
  if (static_cast<int>(rec.bits.size()) != code.users() || static_cast<int>(rec.noise.size()) != code.chips())
    throw DomainError("hamiltonian: record does not match the code");
  const double q = rec.Q();
  double energy = 0.0;
  for (int mu = 0; mu < code.chips(); ++mu) {
    double r = rec.noise[mu];
    for (const auto& l : code.chip_links(mu)) r += l.value * (rec.bits[l.user] - tau[l.user]);
    energy += r * r;
  }
  return q * energy;
}

double CouplingField::coupling(int a, int b) const {
  if (a > b) std::swap(a, b);
  const auto it = couplings.find({a, b});
  return it == couplings.end() ? 0.0 : it->second;
}

double CouplingField::coupling_energy(std::span<const int> tau) const {
  double sum = 0.0;
  for (const auto& [pair, j] : couplings) sum += j * tau[pair.first] * tau[pair.second];
  return -2.0 * sum;
}

double CouplingField::energy(std::span<const int> tau) const {
  if (tau.size() != fields.size()) throw DomainError("CouplingField: spin vector length differs from K");
  double field_term = 0.0;
  for (std::size_t k = 0; k < fields.size(); ++k) field_term += fields[k] * tau[k];
  return coupling_energy(tau) - field_term + constant_offset;
}

CouplingField coupling_field_decomposition(const SparseCode& code, const TransmissionRecord& rec, double q) {
  if (static_cast<int>(rec.received.size()) != code.chips())
    throw DomainError("coupling_field_decomposition: received length differs from N");
  CouplingField cf;
  cf.q = q;
  cf.fields.assign(code.users(), 0.0);
  for (int mu = 0; mu < code.chips(); ++mu) {
    const auto links = code.chip_links(mu);
    for (std::size_t i = 0; i < links.size(); ++i) {
      cf.fields[links[i].user] += 2.0 * q * rec.received[mu] * links[i].value;
      for (std::size_t j = i + 1; j < links.size(); ++j) {
        const int a = std::min(links[i].user, links[j].user);
        const int b = std::max(links[i].user, links[j].user);
        cf.couplings[{a, b}] += -q * links[i].value * links[j].value;
      }
    }
  }
  // Fix the constant so that both forms agree at tau = (+1, ..., +1).
  const std::vector<int> plus(code.users(), 1);
  double direct = 0.0;
  for (int mu = 0; mu < code.chips(); ++mu) {
    double r = rec.received[mu];
    for (const auto& l : code.chip_links(mu)) r -= l.value;
    direct += r * r;
  }
  direct *= q;
  cf.constant_offset = 0.0;
  cf.constant_offset = direct - cf.energy(plus);
  return cf;
}

EnergyDifference energy_difference_check(const SparseCode& code, const TransmissionRecord& rec, double q,
                                         std::span<const int> tau1, std::span<const int> tau2) {
  check_spins(tau1, code.users());
  check_spins(tau2, code.users());
  // hamiltonian() reads Q from the record; rescale if the caller asks for another Q.
  const double scale = q / rec.Q();
  const double direct = scale * (hamiltonian(code, rec, tau1) - hamiltonian(code, rec, tau2));
  const auto cf = coupling_field_decomposition(code, rec, q);
  double coupling_diff = 0.0, field_diff = 0.0;
  for (const auto& [pair, j] : cf.couplings)
    coupling_diff += j * (tau1[pair.first] * tau1[pair.second] - tau2[pair.first] * tau2[pair.second]);
  for (std::size_t k = 0; k < cf.fields.size(); ++k) field_diff += cf.fields[k] * (tau1[k] - tau2[k]);
  return {direct, -(2.0 * coupling_diff + field_diff)};
}

std::string_view to_string(FieldEnsemble e) {
  switch (e) {
    case FieldEnsemble::Dense: return "dense";
    case FieldEnsemble::SparseBpsk: return "sparse_bpsk";
    case FieldEnsemble::SparseUnmodulated: return "sparse_unmodulated";
  }
  return "?";
}

MomentPrediction predicted_field_moments(const EnsembleSpec& spec, double q, FieldEnsemble ensemble) {
  if (!(q >= 0.0)) throw DomainError("predicted_field_moments: Q must be non-negative");
  const double alpha = spec.load();
  const double two_q = 2.0 * q;
  MomentPrediction p{two_q / alpha, 0.0, two_q / alpha, ensemble};
  if (ensemble == FieldEnsemble::Dense) {
    p.variance = two_q * two_q / alpha + two_q / alpha;
    return p;
  }
  if (spec.regularity != Regularity::FullyRegular)
    throw DomainError("predicted_field_moments: sparse prediction needs a chip and user regular spec");
  const double l = spec.chip_degree;
  p.variance = (l - 1.0) * two_q * two_q / (alpha * l) + two_q / alpha;
  return p;
}

EmpiricalMoments empirical_field_moments(const EnsembleSpec& spec, double q, int trials, Rng& rng) {
  if (trials < 100) throw DomainError("empirical_field_moments: needs at least 100 trials");
  const double sigma0 = sigma_from_Q(q);
  std::vector<double> samples;
  samples.reserve(trials);
  std::uniform_int_distribution<int> pick(0, spec.users - 1);
  for (int t = 0; t < trials; ++t) {
    const auto code = sample_code(spec, rng);
    const auto bits = sample_bits(spec.users, rng);
    const auto rec = transmit(code, bits, sigma0, rng);
    const int k = pick(rng);
    double h = 0.0;
    for (const auto& l : code.user_links(k)) h += 2.0 * q * rec.received[l.chip] * l.value;
    samples.push_back(bits[k] * h);
  }
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double x : samples) {
    const double d2 = (x - mean) * (x - mean);
    m2 += d2;
    m4 += d2 * d2;
  }
  const double var = m2 / (n - 1.0);
  m4 /= n;
  const double pop_var = m2 / n;
  const std::size_t count = samples.size();
  return {mean, var, std::sqrt(var / n), std::sqrt(std::max(0.0, m4 - pop_var * pop_var) / n), count,
          std::move(samples)};
}

int chip_clique_spin_energy(std::span<const int> clique) {
  int sum = 0;
  for (int t : clique) {
    if (t != 1 && t != -1) throw DomainError("chip_clique_spin_energy: spins must be +1 or -1");
    sum += t;
  }
  return (sum * sum - static_cast<int>(clique.size())) / 2;
}

std::vector<int> spins_from_mask(std::uint64_t mask, int users) {
  std::vector<int> tau(users);
  for (int k = 0; k < users; ++k) tau[k] = (mask >> k & 1) ? 1 : -1;
  return tau;
}

NaesatResult naesat_ground_states(const SparseCode& code, std::size_t max_states_kept) {
  if (code.spec().modulation != Modulation::Unmodulated)
    throw DomainError("naesat_ground_states: expects an unmodulated code");
  const int users = code.users();
  if (users > 24) throw CapacityError("naesat_ground_states: limited to K <= 24");

  // Start from all spins -1; track per-chip magnetisation.
  std::vector<int> degree(code.chips()), mag(code.chips());
  for (int mu = 0; mu < code.chips(); ++mu) {
    degree[mu] = static_cast<int>(code.chip_links(mu).size());
    mag[mu] = -degree[mu];
  }
  auto all_equal = [&](int mu) { return degree[mu] > 0 && std::abs(mag[mu]) == degree[mu]; };
  auto clique_energy = [&](int mu) { return (mag[mu] * mag[mu] - degree[mu]) / 2; };

  int violations = 0, energy = 0;
  for (int mu = 0; mu < code.chips(); ++mu) {
    violations += all_equal(mu);
    energy += clique_energy(mu);
  }

  NaesatResult out;
  out.min_all_equal = violations;
  out.min_clique_energy = energy;
  std::uint64_t mask = 0;
  std::vector<std::uint64_t> kept;
  const std::uint64_t count = std::uint64_t{1} << users;
  for (std::uint64_t i = 0; i < count; ++i) {
    if (i > 0) {
      const int k = std::countr_zero(i);
      mask ^= std::uint64_t{1} << k;
      const int delta = (mask >> k & 1) ? 2 : -2;
      for (const auto& l : code.user_links(k)) {
        violations -= all_equal(l.chip);
        energy -= clique_energy(l.chip);
        mag[l.chip] += delta;
        violations += all_equal(l.chip);
        energy += clique_energy(l.chip);
      }
    }
    if (violations < out.min_all_equal) {
      out.min_all_equal = violations;
      out.ground_state_count = 0;
      kept.clear();
    }
    if (violations == out.min_all_equal) {
      ++out.ground_state_count;
      if (kept.size() < max_states_kept) kept.push_back(mask);
    }
    if (energy < out.min_clique_energy) {
      out.min_clique_energy = energy;
      out.min_energy_count = 0;
    }
    if (energy == out.min_clique_energy) ++out.min_energy_count;
  }
  std::sort(kept.begin(), kept.end());
  out.ground_states = std::move(kept);
  return out;
}

std::vector<std::pair<std::uint64_t, double>> rank_by_field(std::span<const std::uint64_t> states,
                                                            std::span<const double> fields) {
  std::vector<std::pair<std::uint64_t, double>> ranked;
  ranked.reserve(states.size());
  for (auto mask : states) {
    double align = 0.0;
    for (std::size_t k = 0; k < fields.size(); ++k) align += fields[k] * ((mask >> k & 1) ? 1.0 : -1.0);
    ranked.emplace_back(mask, align);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return ranked;
}

}  // namespace cdma
