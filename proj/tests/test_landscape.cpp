#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cdma/channel.hpp"
#include "cdma/errors.hpp"
#include "cdma/landscape.hpp"
#include "oracles.hpp"

using namespace cdma;

namespace {

std::vector<int> random_spins(int users, Rng& rng) { return sample_bits(users, rng); }

}  // namespace

TEST_SUITE("landscape") {

TEST_CASE("hamiltonian reference values") {
  Rng rng(1);
  const auto code = sample_code(regular_spec(12, 2, 3, Modulation::Bpsk), rng);
  const auto bits = sample_bits(12, rng);
  const auto clean = transmit_with_noise(code, bits, std::vector<double>(8, 0.0), 0.5);
  CHECK(hamiltonian(code, clean, bits) == 0.0);
  const auto noisy = transmit(code, bits, 0.5, rng);
  double sq = 0;
  for (double n : noisy.noise) sq += n * n;
  CHECK(hamiltonian(code, noisy, bits) == doctest::Approx(noisy.Q() * sq).epsilon(1e-13));

  const SparseCode pair({2, 1, 1, 2, Modulation::Unmodulated, Regularity::FullyRegular},
                        {{0, 0, 1 / std::sqrt(2.0)}, {1, 0, 1 / std::sqrt(2.0)}});
  const auto rec = transmit_with_noise(pair, std::vector<int>{1, 1}, std::vector<double>{0.0}, 0.5);
  const double a = 1 / std::sqrt(2.0);
  CHECK(hamiltonian(pair, rec, std::vector<int>{-1, -1}) == doctest::Approx(rec.Q() * std::pow(2 * 2 * a, 2)));
  CHECK_THROWS_AS(hamiltonian(pair, rec, std::vector<int>{1, 0}), DomainError);
}

TEST_CASE("coupling values") {
  Rng rng(2);
  const double q = 1.7;
  SUBCASE("unmodulated couplings count shared chips") {
    const auto code = sample_code(regular_spec(12, 3, 4, Modulation::Unmodulated), rng);
    const auto rec = transmit(code, sample_bits(12, rng), sigma_from_Q(q), rng);
    const auto cf = coupling_field_decomposition(code, rec, q);
    for (int a = 0; a < 12; ++a)
      for (int b = a + 1; b < 12; ++b) {
        int shared = 0;
        for (int mu = 0; mu < code.chips(); ++mu) shared += code.value(mu, a) != 0 && code.value(mu, b) != 0;
        CHECK(cf.coupling(a, b) == doctest::Approx(-shared * q / 4).epsilon(1e-14));
        CHECK(cf.coupling(b, a) == cf.coupling(a, b));
      }
  }
  SUBCASE("bpsk single shared chip") {
    const auto code = sample_code(regular_spec(40, 2, 4, Modulation::Bpsk), rng);
    const auto rec = transmit(code, sample_bits(40, rng), sigma_from_Q(q), rng);
    const auto cf = coupling_field_decomposition(code, rec, q);
    for (const auto& [pair, j] : cf.couplings) {
      int shared = 0;
      for (int mu = 0; mu < code.chips(); ++mu)
        shared += code.value(mu, pair.first) != 0 && code.value(mu, pair.second) != 0;
      if (shared == 1) CHECK(std::fabs(j) == doctest::Approx(q / 4).epsilon(1e-14));
    }
  }
  SUBCASE("disconnected users") {
    const SparseCode code({2, 2, 1, 1, Modulation::Bpsk, Regularity::FullyRegular}, {{0, 0, 1.0}, {1, 1, -1.0}});
    const auto rec = transmit(code, std::vector<int>{1, 1}, 1.0, rng);
    CHECK(coupling_field_decomposition(code, rec, 0.5).coupling(0, 1) == 0.0);
  }
}

TEST_CASE("couplings do not depend on the sent bits") {
  Rng rng(3);
  const auto code = sample_code(regular_spec(24, 3, 6, Modulation::Bpsk), rng);
  const auto r1 = transmit(code, sample_bits(24, rng), 0.5, rng);
  const auto r2 = transmit(code, sample_bits(24, rng), 0.5, rng);
  CHECK(coupling_field_decomposition(code, r1, 2.0).couplings == coupling_field_decomposition(code, r2, 2.0).couplings);
}

TEST_CASE("energy differences agree between the two forms") {
  Rng rng(4);
  const auto code = sample_code(regular_spec(12, 2, 3, Modulation::Bpsk), rng);
  const auto rec = transmit(code, sample_bits(12, rng), 0.6, rng);
  const auto cf = coupling_field_decomposition(code, rec, rec.Q());
  const std::vector<int> plus(12, 1);
  CHECK(cf.energy(plus) == doctest::Approx(hamiltonian(code, rec, plus)));
  for (int i = 0; i < 10'000; ++i) {
    const auto t1 = random_spins(12, rng);
    const auto t2 = random_spins(12, rng);
    const auto d = energy_difference_check(code, rec, rec.Q(), t1, t2);
    CHECK(std::fabs(d.direct - d.coupling_form) <= 1e-9 * std::max(1.0, std::fabs(d.direct)));
  }
  const auto t = random_spins(12, rng);
  const auto same = energy_difference_check(code, rec, rec.Q(), t, t);
  CHECK(same.direct == 0.0);
  CHECK(same.coupling_form == 0.0);
}

TEST_CASE("single spin flip of an isolated user") {
  const SparseCode code({1, 1, 1, 1, Modulation::Bpsk, Regularity::FullyRegular}, {{0, 0, 1.0}});
  Rng rng(5);
  const auto rec = transmit(code, std::vector<int>{1}, 0.7, rng);
  const auto cf = coupling_field_decomposition(code, rec, rec.Q());
  const auto d = energy_difference_check(code, rec, rec.Q(), std::vector<int>{1}, std::vector<int>{-1});
  CHECK(d.direct == doctest::Approx(-2 * cf.fields[0]));
  CHECK(d.coupling_form == doctest::Approx(-2 * cf.fields[0]));
}

TEST_CASE("predicted field moments") {
  const auto spec = regular_spec(12, 3, 6, Modulation::Bpsk);
  const auto p = predicted_field_moments(spec, 0.5, FieldEnsemble::SparseBpsk);
  CHECK(p.mean == doctest::Approx(0.5));
  CHECK(p.variance == doctest::Approx(11.0 / 12.0).epsilon(1e-14));
  CHECK(p.truncated_variance == doctest::Approx(0.5));
  const auto u = predicted_field_moments(regular_spec(12, 3, 6, Modulation::Unmodulated), 0.5,
                                         FieldEnsemble::SparseUnmodulated);
  CHECK(u.variance == p.variance);

  const auto tiny = predicted_field_moments(spec, 1e-12, FieldEnsemble::SparseBpsk);
  CHECK(tiny.mean < 1e-11);
  CHECK(tiny.variance < 1e-11);

  const auto wide = regular_spec(4000, 3, 2000, Modulation::Bpsk);
  const auto dense = predicted_field_moments(wide, 2.0, FieldEnsemble::Dense);
  const auto sparse = predicted_field_moments(wide, 2.0, FieldEnsemble::SparseBpsk);
  CHECK(sparse.variance == doctest::Approx(dense.variance).epsilon(1e-3));

  EnsembleSpec irregular{12, 9, 3, 4, Modulation::Bpsk, Regularity::UserRegular};
  CHECK_THROWS_AS(predicted_field_moments(irregular, 1.0, FieldEnsemble::SparseBpsk), DomainError);

  double prev = 0.0;
  for (double q : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    const auto m = predicted_field_moments(spec, q, FieldEnsemble::SparseBpsk);
    const double ratio = m.mean / std::sqrt(m.variance);
    CHECK(ratio > prev);
    prev = ratio;
  }
}

TEST_CASE("noiseless single user field") {
  const SparseCode code({1, 3, 3, 1, Modulation::Unmodulated, Regularity::FullyRegular},
                        {{0, 0, 1.0}, {0, 1, 1.0}, {0, 2, 1.0}});
  const double q = 0.9;
  const auto rec = transmit_with_noise(code, std::vector<int>{1}, std::vector<double>(3, 0.0), sigma_from_Q(q));
  const auto cf = coupling_field_decomposition(code, rec, q);
  CHECK(cf.fields[0] == doctest::Approx(2 * q * 3 / 1.0).epsilon(1e-14));
}

TEST_CASE("empirical field moments") {
  Rng rng(6);
  SUBCASE("six by three mean") {
    const auto spec = regular_spec(6, 3, 6, Modulation::Bpsk);
    const auto e = empirical_field_moments(spec, 0.5, 10'000, rng);
    const auto p = predicted_field_moments(spec, 0.5, FieldEnsemble::SparseBpsk);
    CHECK(std::fabs(e.mean - p.mean) < 3 * e.mean_se);
    CHECK(e.values.size() == 10'000);
  }
  SUBCASE("twelve by six variance") {
    const auto spec = regular_spec(12, 3, 6, Modulation::Bpsk);
    const auto e = empirical_field_moments(spec, 0.5, 10'000, rng);
    const auto p = predicted_field_moments(spec, 0.5, FieldEnsemble::SparseBpsk);
    CHECK(std::fabs(e.variance - p.variance) < 5 * e.variance_se);
  }
  CHECK_THROWS_AS(empirical_field_moments(regular_spec(6, 3, 6, Modulation::Bpsk), 0.5, 50, rng), DomainError);
}

TEST_CASE("clique energies") {
  CHECK(chip_clique_spin_energy(std::vector<int>{1, 1, 1}) == 3);
  CHECK(chip_clique_spin_energy(std::vector<int>{1, 1, -1}) == -1);
  CHECK(chip_clique_spin_energy(std::vector<int>{-1, -1, -1}) == 3);
  oracle::for_each_config(3, [](const std::vector<int>& t) {
    const int e = chip_clique_spin_energy(t);
    const bool equal = t[0] == t[1] && t[1] == t[2];
    CHECK(e == (equal ? 3 : -1));
  });
  CHECK(chip_clique_spin_energy(std::vector<int>{1, -1, 1, -1}) == -2);
}

TEST_CASE("NAE-SAT census") {
  SUBCASE("one clique of three") {
    const double a = 1 / std::sqrt(3.0);
    const SparseCode code({3, 1, 1, 3, Modulation::Unmodulated, Regularity::FullyRegular},
                          {{0, 0, a}, {1, 0, a}, {2, 0, a}});
    const auto r = naesat_ground_states(code);
    CHECK(r.min_all_equal == 0);
    CHECK(r.ground_state_count == 6);
    CHECK(r.ground_states.size() == 6);
  }
  SUBCASE("complete six by three") {
    Rng rng(7);
    const auto code = sample_code(regular_spec(6, 3, 6, Modulation::Unmodulated), rng);
    const auto r = naesat_ground_states(code);
    const auto ref = oracle::nae_census(code);
    CHECK(r.min_all_equal == ref.min_all_equal);
    CHECK(r.ground_state_count == ref.count);
    CHECK(r.min_all_equal == 0);
    CHECK(r.ground_state_count == 62);
  }
  SUBCASE("random instances and flip closure") {
    Rng rng(8);
    for (int rep = 0; rep < 10; ++rep) {
      const auto code = sample_code(regular_spec(12, 3, 3, Modulation::Unmodulated), rng);
      const auto r = naesat_ground_states(code);
      const auto ref = oracle::nae_census(code);
      CHECK(r.min_all_equal == ref.min_all_equal);
      CHECK(r.ground_state_count == ref.count);
      std::set<std::uint64_t> states(r.ground_states.begin(), r.ground_states.end());
      for (auto m : r.ground_states) CHECK(states.count(m ^ 0xFFFu) == 1);
    }
  }
  SUBCASE("errors") {
    Rng rng(9);
    CHECK_THROWS_AS(naesat_ground_states(sample_code(regular_spec(6, 3, 6, Modulation::Bpsk), rng)), DomainError);
    CHECK_THROWS_AS(naesat_ground_states(sample_code(regular_spec(26, 1, 2, Modulation::Unmodulated), rng)),
                    CapacityError);
  }
}

TEST_CASE("ranking by field alignment") {
  const std::vector<std::uint64_t> states{0b00, 0b01, 0b11};
  const std::vector<double> fields{1.0, -3.0};
  const auto ranked = rank_by_field(states, fields);
  CHECK(ranked.front().first == 0b01);
  CHECK(ranked.front().second == doctest::Approx(4.0));
  CHECK(ranked.back().first == 0b11);
  CHECK(spins_from_mask(0b01, 2) == std::vector<int>{1, -1});
}

}  // TEST_SUITE
