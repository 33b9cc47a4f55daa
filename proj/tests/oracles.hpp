#pragma once

// Reference implementations used only by the tests. They share no code with
// the library beyond the data types, and favour plainness over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "cdma/channel.hpp"
#include "cdma/ensemble.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;  // [chip][user]

inline Matrix dense(const cdma::SparseCode& code) {
  Matrix s(code.chips(), std::vector<double>(code.users(), 0.0));
  for (const auto& e : code.entries()) s[e.chip][e.user] = e.value;
  return s;
}

inline double energy(const Matrix& s, const std::vector<double>& y, const std::vector<int>& tau, double q) {
  double total = 0.0;
  for (std::size_t mu = 0; mu < s.size(); ++mu) {
    double r = y[mu];
    for (std::size_t k = 0; k < tau.size(); ++k) r -= s[mu][k] * tau[k];
    total += r * r;
  }
  return q * total;
}

// Visits every spin vector in {-1,+1}^K by recursion on the first free site.
inline void for_each_config(int users, const std::function<void(const std::vector<int>&)>& visit) {
  std::vector<int> tau(users, 1);
  std::function<void(int)> rec = [&](int k) {
    if (k == users) {
      visit(tau);
      return;
    }
    for (int v : {1, -1}) {
      tau[k] = v;
      rec(k + 1);
    }
  };
  rec(0);
}

struct Brute {
  std::vector<double> prob_plus;
  double log_partition;
};

inline Brute brute_force(const cdma::SparseCode& code, const std::vector<double>& y, double q) {
  const auto s = dense(code);
  const int users = code.users();
  std::vector<double> energies;
  std::vector<std::vector<int>> configs;
  for_each_config(users, [&](const std::vector<int>& tau) {
    energies.push_back(energy(s, y, tau, q));
    configs.push_back(tau);
  });
  const double emin = *std::min_element(energies.begin(), energies.end());
  double z = 0.0;
  std::vector<double> plus(users, 0.0);
  for (std::size_t c = 0; c < configs.size(); ++c) {
    const double w = std::exp(-(energies[c] - emin));
    z += w;
    for (int k = 0; k < users; ++k)
      if (configs[c][k] > 0) plus[k] += w;
  }
  Brute b;
  b.log_partition = std::log(z) - emin;
  for (int k = 0; k < users; ++k) b.prob_plus.push_back(plus[k] / z);
  return b;
}

// Random cycle-free Tanner graph: chips are added one at a time, each
// attaching exactly one user already in the tree plus fresh users.
inline cdma::SparseCode tree_code(int users, cdma::Modulation m, int max_chip_degree, std::mt19937_64& rng) {
  std::vector<cdma::CodeEntry> entries;
  std::vector<int> in_tree{0};
  int next_user = 1, chip = 0;
  std::uniform_int_distribution<int> deg(1, max_chip_degree);
  while (next_user < users) {
    const int fresh = std::min(deg(rng), users - next_user);
    const int anchor = in_tree[std::uniform_int_distribution<std::size_t>(0, in_tree.size() - 1)(rng)];
    entries.push_back({anchor, chip, 0.0});
    for (int i = 0; i < fresh; ++i) {
      entries.push_back({next_user, chip, 0.0});
      in_tree.push_back(next_user++);
    }
    ++chip;
  }
  // A leaf chip on a random user so that isolated single-chip factors also occur.
  entries.push_back({std::uniform_int_distribution<int>(0, users - 1)(rng), chip++, 0.0});

  int max_degree = 1;
  std::vector<int> chip_degree(chip, 0);
  for (const auto& e : entries) max_degree = std::max(max_degree, ++chip_degree[e.chip]);
  cdma::EnsembleSpec spec{users, chip, 1, max_degree, m, cdma::Regularity::PureRandom};
  const double a = 1.0 / std::sqrt(static_cast<double>(max_degree));
  for (auto& e : entries) e.value = (m == cdma::Modulation::Bpsk && (rng() & 1)) ? -a : a;
  return cdma::SparseCode(spec, entries);
}

// Hard-decision error rate of one BPSK user on y = b + noise.
inline double single_user_ber(double sigma0, int samples, std::mt19937_64& rng, double* se) {
  std::normal_distribution<double> noise(0.0, sigma0);
  std::bernoulli_distribution coin(0.5);
  int errors = 0;
  for (int i = 0; i < samples; ++i) {
    const int b = coin(rng) ? 1 : -1;
    const double y = b + noise(rng);
    if ((y >= 0 ? 1 : -1) != b) ++errors;
  }
  const double p = static_cast<double>(errors) / samples;
  if (se) *se = std::sqrt(p * (1 - p) / samples);
  return p;
}

// Fewest all-equal cliques and the number of assignments attaining it, by
// direct recursion over assignments.
struct NaeCount {
  int min_all_equal;
  std::uint64_t count;
};

inline NaeCount nae_census(const cdma::SparseCode& code) {
  std::vector<std::vector<int>> cliques(code.chips());
  for (const auto& e : code.entries()) cliques[e.chip].push_back(e.user);
  NaeCount best{1 << 30, 0};
  for_each_config(code.users(), [&](const std::vector<int>& tau) {
    int bad = 0;
    for (const auto& c : cliques) {
      if (c.empty()) continue;
      bool all_same = true;
      for (int u : c) all_same = all_same && tau[u] == tau[c.front()];
      bad += all_same;
    }
    if (bad < best.min_all_equal) best = {bad, 0};
    if (bad == best.min_all_equal) ++best.count;
  });
  return best;
}

}  // namespace oracle
