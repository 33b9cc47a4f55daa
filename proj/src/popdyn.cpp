#include "cdma/popdyn.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <limits>
#include <thread>

#include "cdma/channel.hpp"
#include "cdma/errors.hpp"
#include "cdma/numeric.hpp"

namespace cdma {

namespace {

constexpr std::uint64_t kInitSalt = 0x1d8e4e27c47d124fULL;
constexpr std::uint64_t kStatsSalt = 0x6a09e667f3bcc909ULL;
constexpr std::uint64_t kMeasureSalt = 0xbb67ae8584caa73bULL;
constexpr int kMaxRejections = 1 << 16;

bool is_joint(const EnsembleSpec& spec) { return spec.modulation == Modulation::Unmodulated; }

void check_cavity_spec(const EnsembleSpec& spec) {
  if (spec.regularity != Regularity::FullyRegular)
    throw DomainError("popdyn: only the chip and user regular ensemble is supported");
  if (spec.user_degree < 1 || spec.chip_degree < 1 || spec.chip_degree > 16)
    throw DomainError("popdyn: need C >= 1 and 1 <= L <= 16");
}

std::size_t pick(std::size_t n, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

int coin(Rng& rng) { return std::bernoulli_distribution(0.5)(rng) ? 1 : -1; }

// Index of a uniformly chosen member carrying `label`.
std::size_t pick_labelled(const Population& pop, int label, Rng& rng) {
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    const std::size_t i = pick(pop.size(), rng);
    if (pop.labels[i] == label) return i;
  }
  throw DomainError("popdyn: no population member carries the requested label");
}

std::size_t draw(const Population& pop, int label, bool ignore_label, Rng& rng) {
  return (ignore_label || !pop.joint()) ? pick(pop.size(), rng) : pick_labelled(pop, label, rng);
}

Estimate mean_and_se(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var = xs.size() > 1 ? var / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

// Batch means: average of all values, SE from the spread of batch averages.
Estimate batch_means(std::span<const double> xs, int batches) {
  batches = std::clamp<int>(batches, 1, static_cast<int>(xs.size()));
  const std::size_t per = xs.size() / batches;
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) s += xs[i];
    means.push_back(s / per);
  }
  Estimate e = mean_and_se(means);
  double all = 0.0;
  for (double x : xs) all += x;
  e.value = all / xs.size();
  return e;
}

// Log partition sum of one chip under normalised cavity fields:
//   log sum_tau prod_l [e^{h_l tau_l} / 2cosh h_l] exp{-Q (omega + sum_l x_l (1 - tau_l))^2}.
double chip_log_partition(std::span<const double> fields, std::span<const double> modulation, double omega,
                          double q, std::vector<double>& shift, std::vector<double>& hs) {
  const int n = static_cast<int>(fields.size());
  const std::size_t configs = std::size_t{1} << n;
  shift.resize(configs);
  hs.resize(configs);
  shift[0] = 0.0;
  hs[0] = 0.0;
  double norm = 0.0, hsum = 0.0;
  for (int l = 0; l < n; ++l) {
    norm += num::log_2cosh(fields[l]);
    hsum += fields[l];
  }
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < configs; ++m) {
    if (m > 0) {
      const int low = std::countr_zero(m);
      const std::size_t prev = m & (m - 1);
      shift[m] = shift[prev] + 2.0 * modulation[low];
      hs[m] = hs[prev] - 2.0 * fields[low];
    }
    const double r = omega + shift[m];
    best = std::max(best, -q * r * r + hs[m]);
  }
  double sum = 0.0;
  for (std::size_t m = 0; m < configs; ++m) {
    const double r = omega + shift[m];
    sum += std::exp(-q * r * r + hs[m] - best);
  }
  return best + std::log(sum) + hsum - norm;
}

struct Scratch {
  std::vector<double> fields, modulation, shift, hs, shift2, hs2;
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

// Fills scratch().fields/modulation with `count` fields drawn for a chip and
// their effective modulation values (joint_amp * a_l for joint populations).
void draw_chip_inputs(const Population& field, const EnsembleSpec& spec, int count, bool ignore_label,
                      double joint_amp, Rng& rng, Scratch& s) {
  const double a = amplitude(spec);
  s.fields.resize(count);
  s.modulation.resize(count);
  for (int l = 0; l < count; ++l) {
    if (field.joint()) {
      const int label = coin(rng);
      s.fields[l] = field.values[draw(field, label, ignore_label, rng)];
      s.modulation[l] = joint_amp * label;
    } else {
      s.fields[l] = field.values[pick(field.size(), rng)];
      s.modulation[l] = (spec.modulation == Modulation::Bpsk && coin(rng) < 0) ? -a : a;
    }
  }
}

double sum_of_biases(const Population& bias, int count, int label, bool ignore_label, Rng& rng) {
  double h = 0.0;
  for (int c = 0; c < count; ++c) h += bias.values[draw(bias, label, ignore_label, rng)];
  return h;
}

double joint_amplitude(const EnsembleSpec& spec, UnmodulatedReading reading) {
  return reading == UnmodulatedReading::Literal ? 1.0 : amplitude(spec);
}

void sweep_impl(PopulationState& state, const EnsembleSpec& spec, double q, double field_cap, Rng& rng,
                bool restrict_symmetric, UnmodulatedReading reading) {
  const std::size_t n = state.bias.size();
  const bool joint = state.bias.joint();
  const int c = spec.user_degree;
  const int l = spec.chip_degree;
  const double a = amplitude(spec);
  const double joint_amp = joint_amplitude(spec, reading);
  std::normal_distribution<double> noise(0.0, sigma_from_Q(q));
  Scratch& s = scratch();
  for (std::size_t step = 0; step < n; ++step) {
    // Field: sum of C-1 incoming biases.
    {
      const std::size_t slot = pick(state.field.size(), rng);
      const int label = joint ? coin(rng) : 1;
      const double h = sum_of_biases(state.bias, c - 1, label, restrict_symmetric, rng);
      state.field.values[slot] = num::clamp_abs(h, field_cap);
      if (joint) state.field.labels[slot] = static_cast<std::int8_t>(label);
    }
    // Bias: chip update from L-1 fields.
    {
      const std::size_t slot = pick(n, rng);
      const int root = joint ? coin(rng) : 1;
      draw_chip_inputs(state.field, spec, l - 1, restrict_symmetric, joint_amp, rng, s);
      double root_x;
      if (joint)
        root_x = joint_amp * root;
      else
        root_x = (spec.modulation == Modulation::Bpsk && coin(rng) < 0) ? -a : a;
      s.modulation.push_back(root_x);
      const double omega = noise(rng);
      const double u = chip_bias(s.fields, s.modulation, omega, q);
      state.bias.values[slot] = num::clamp_abs(u, field_cap);
      if (joint) state.bias.labels[slot] = static_cast<std::int8_t>(root);
    }
  }
}

}  // namespace

std::string_view to_string(InitMode m) {
  switch (m) {
    case InitMode::Random: return "random";
    case InitMode::Informed: return "informed";
    case InitMode::Zero: return "zero";
  }
  return "?";
}

std::string_view to_string(UnmodulatedReading r) { return r == UnmodulatedReading::Literal ? "literal" : "scaled"; }

UnmodulatedReading parse_unmodulated_reading(std::string_view s) {
  if (s == "scaled") return UnmodulatedReading::Scaled;
  if (s == "literal") return UnmodulatedReading::Literal;
  throw ConfigError("unknown unmodulated reading '" + std::string(s) + "'");
}

InitMode parse_init_mode(std::string_view s) {
  if (s == "random") return InitMode::Random;
  if (s == "informed") return InitMode::Informed;
  if (s == "zero") return InitMode::Zero;
  throw ConfigError("unknown init mode '" + std::string(s) + "'");
}

double Population::plus_label_fraction() const {
  if (labels.empty()) return 0.5;
  std::size_t plus = 0;
  for (auto a : labels) plus += a > 0;
  return static_cast<double>(plus) / labels.size();
}

void PDParams::validate() const {
  if (population_size < 2) throw ConfigError("popdyn: population_size must be >= 2");
  if (max_sweeps < 1 || window < 1) throw ConfigError("popdyn: max_sweeps and window must be >= 1");
  if (!(tolerance > 0.0)) throw ConfigError("popdyn: tolerance must be positive");
  if (!(field_cap > 0.0)) throw ConfigError("popdyn: field_cap must be positive");
  if (measure_sweeps < 1 || measure_batches < 1) throw ConfigError("popdyn: measurement sweeps/batches must be >= 1");
}

EnsembleSpec cavity_spec(int user_degree, int chip_degree, Modulation m) {
  EnsembleSpec spec{chip_degree, user_degree, user_degree, chip_degree, m, Regularity::FullyRegular};
  check_cavity_spec(spec);
  return spec;
}

Population init_population(PopulationKind kind, InitMode mode, const PDParams& params, Rng& rng) {
  Population pop;
  pop.kind = kind;
  pop.values.resize(params.population_size);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& v : pop.values) {
    switch (mode) {
      case InitMode::Random: v = gauss(rng); break;
      case InitMode::Informed: v = params.field_cap / 2.0; break;
      case InitMode::Zero: v = 0.0; break;
    }
  }
  if (pop.joint()) {
    pop.labels.resize(params.population_size);
    for (auto& a : pop.labels) a = static_cast<std::int8_t>(coin(rng));
  }
  return pop;
}

double chip_bias(std::span<const double> fields, std::span<const double> modulation, double omega, double q) {
  const int n = static_cast<int>(fields.size());
  if (static_cast<int>(modulation.size()) != n + 1)
    throw DomainError("chip_bias: need one more modulation value than fields");
  const double root_shift = 2.0 * modulation[n];
  const std::size_t configs = std::size_t{1} << n;
  Scratch& s = scratch();
  s.shift2.resize(configs);
  s.hs2.resize(configs);
  auto& shift = s.shift2;
  auto& hs = s.hs2;
  shift[0] = 0.0;
  hs[0] = 0.0;
  double best_plus = -std::numeric_limits<double>::infinity();
  double best_minus = best_plus;
  for (std::size_t m = 0; m < configs; ++m) {
    if (m > 0) {
      const int low = std::countr_zero(m);
      const std::size_t prev = m & (m - 1);
      shift[m] = shift[prev] + 2.0 * modulation[low];
      hs[m] = hs[prev] - 2.0 * fields[low];
    }
    const double rp = omega + shift[m];
    const double rm = rp + root_shift;
    best_plus = std::max(best_plus, -q * rp * rp + hs[m]);
    best_minus = std::max(best_minus, -q * rm * rm + hs[m]);
  }
  double sum_plus = 0.0, sum_minus = 0.0;
  for (std::size_t m = 0; m < configs; ++m) {
    const double rp = omega + shift[m];
    const double rm = rp + root_shift;
    sum_plus += std::exp(-q * rp * rp + hs[m] - best_plus);
    sum_minus += std::exp(-q * rm * rm + hs[m] - best_minus);
  }
  return 0.5 * ((best_plus - best_minus) + std::log(sum_plus / sum_minus));
}

void pd_sweep_modulated(PopulationState& state, const EnsembleSpec& spec, double q, double field_cap, Rng& rng) {
  check_cavity_spec(spec);
  if (spec.modulation != Modulation::Bpsk) throw DomainError("pd_sweep_modulated: expects BPSK modulation");
  if (state.bias.joint() || state.field.joint()) throw DomainError("pd_sweep_modulated: expects plain populations");
  sweep_impl(state, spec, q, field_cap, rng, false, UnmodulatedReading::Scaled);
}

void pd_sweep_unmodulated(PopulationState& state, const EnsembleSpec& spec, double q, double field_cap, Rng& rng,
                          bool restrict_symmetric, UnmodulatedReading reading) {
  check_cavity_spec(spec);
  if (spec.modulation != Modulation::Unmodulated)
    throw DomainError("pd_sweep_unmodulated: expects an unmodulated spec");
  if (!state.bias.joint() || !state.field.joint()) throw DomainError("pd_sweep_unmodulated: expects joint populations");
  sweep_impl(state, spec, q, field_cap, rng, restrict_symmetric, reading);
}

Estimate ber_from_population(const Population& bias, const EnsembleSpec& spec, std::size_t samples, Rng& rng) {
  if (samples < 1 || bias.size() == 0) throw DomainError("ber_from_population: empty input");
  double errors = 0.0, errors_sq = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const int label = bias.joint() ? coin(rng) : 1;
    const double h = sum_of_biases(bias, spec.user_degree, label, false, rng);
    const double v = h < 0.0 ? 1.0 : (h == 0.0 ? 0.5 : 0.0);
    errors += v;
    errors_sq += v * v;
  }
  const double n = static_cast<double>(samples);
  const double mean = errors / n;
  const double var = std::max(0.0, errors_sq / n - mean * mean);
  return {mean, std::sqrt(var / n)};
}

FreeEnergyTerms free_energy_terms(const PopulationState& state, const EnsembleSpec& spec, double q,
                                  std::size_t samples, Rng& rng, UnmodulatedReading reading) {
  check_cavity_spec(spec);
  const int c = spec.user_degree;
  const int l = spec.chip_degree;
  const double alpha = spec.load();
  const bool joint = state.bias.joint();
  std::normal_distribution<double> noise(0.0, sigma_from_Q(q));
  Scratch& s = scratch();

  std::vector<double> inter(samples), inter_cv(samples), site(samples), edge(samples), variable(samples);
  std::vector<double> us(c);
  for (std::size_t i = 0; i < samples; ++i) {
    draw_chip_inputs(state.field, spec, l, false, joint_amplitude(spec, reading), rng, s);
    const double omega = noise(rng);
    inter[i] = chip_log_partition(s.fields, s.modulation, omega, q, s.shift, s.hs);
    inter_cv[i] = inter[i] + q * omega * omega - 0.5;
  }
  for (std::size_t i = 0; i < samples; ++i) {
    const int label = joint ? coin(rng) : 1;
    double sum = 0.0, parts = 0.0;
    for (int k = 0; k < c; ++k) {
      us[k] = state.bias.values[draw(state.bias, label, false, rng)];
      sum += us[k];
      parts += num::log_cosh(us[k]);
    }
    site[i] = num::log_cosh(sum) - parts;
    double cavities = 0.0;
    for (int k = 0; k < c; ++k) cavities += num::log_cosh(sum - us[k]);
    variable[i] = (c - 1) * num::log_cosh(sum) - cavities;
  }
  for (std::size_t i = 0; i < samples; ++i) {
    const int label = joint ? coin(rng) : 1;
    const double h = state.field.values[draw(state.field, label, false, rng)];
    const double u = state.bias.values[draw(state.bias, label, false, rng)];
    edge[i] = num::log_cosh(h + u) - num::log_cosh(h) - num::log_cosh(u);
  }

  FreeEnergyTerms t;
  t.interaction = mean_and_se(inter);
  t.site = mean_and_se(site);
  t.edge = mean_and_se(edge);
  t.variable = mean_and_se(variable);
  const auto inter_reduced = mean_and_se(inter_cv);
  t.total.value = -inter_reduced.value + alpha * t.variable.value - alpha * std::log(2.0);
  t.total.se = std::hypot(inter_reduced.se, alpha * t.variable.se);
  return t;
}

double spectral_efficiency(double free_energy_per_chip, const EnsembleSpec& spec) {
  return spec.load() * std::log(2.0) + free_energy_per_chip - 0.5;
}

SweepStats population_stats(const PopulationState& state, const EnsembleSpec& spec, std::size_t samples, Rng& rng) {
  double mt = 0.0;
  for (double h : state.field.values) mt += std::tanh(h);
  return {ber_from_population(state.bias, spec, samples, rng).value, mt / state.field.size()};
}

namespace {

void do_sweep(PopulationState& state, const EnsembleSpec& spec, double q, const PDParams& params, int index) {
  Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(index)));
  if (is_joint(spec))
    pd_sweep_unmodulated(state, spec, q, params.field_cap, rng, params.restrict_symmetric, params.reading);
  else
    pd_sweep_modulated(state, spec, q, params.field_cap, rng);
}

bool window_converged(const std::vector<SweepStats>& history, int window, double tol) {
  if (static_cast<int>(history.size()) < 2 * window) return false;
  double ber_now = 0, ber_prev = 0, mt_now = 0, mt_prev = 0;
  const std::size_t end = history.size();
  for (int i = 0; i < window; ++i) {
    ber_now += history[end - 1 - i].ber;
    mt_now += history[end - 1 - i].mean_tanh;
    ber_prev += history[end - 1 - window - i].ber;
    mt_prev += history[end - 1 - window - i].mean_tanh;
  }
  return std::fabs(ber_now - ber_prev) / window < tol && std::fabs(mt_now - mt_prev) / window < tol;
}

void measure(SaddleSolution& sol, const PDParams& params, int first_sweep) {
  const std::size_t samples = params.sample_count();
  std::vector<double> bers, fes, mts, inter, site, edge, variable;
  for (int m = 0; m < params.measure_sweeps; ++m) {
    do_sweep(sol.populations, sol.spec, sol.q, params, first_sweep + m);
    Rng rng(derive_seed(params.seed ^ kMeasureSalt, static_cast<std::uint64_t>(first_sweep + m)));
    const auto b = ber_from_population(sol.populations.bias, sol.spec, samples, rng);
    const auto f = free_energy_terms(sol.populations, sol.spec, sol.q, samples, rng, params.reading);
    double mt = 0.0;
    for (double h : sol.populations.field.values) mt += std::tanh(h);
    mt /= sol.populations.field.size();
    bers.push_back(b.value);
    fes.push_back(f.total.value);
    mts.push_back(mt);
    inter.push_back(f.interaction.value);
    site.push_back(f.site.value);
    edge.push_back(f.edge.value);
    variable.push_back(f.variable.value);
    sol.history.push_back({b.value, mt});
  }
  const int batches = params.measure_batches;
  sol.ber = batch_means(bers, batches);
  sol.free_energy = batch_means(fes, batches);
  sol.mean_tanh = batch_means(mts, batches);
  sol.terms.interaction = batch_means(inter, batches);
  sol.terms.site = batch_means(site, batches);
  sol.terms.edge = batch_means(edge, batches);
  sol.terms.variable = batch_means(variable, batches);
  sol.terms.total = sol.free_energy;
  const double alpha = sol.spec.load();
  sol.free_energy_per_user = {sol.free_energy.value / alpha, sol.free_energy.se / alpha};
  sol.sweeps = first_sweep + params.measure_sweeps - 1;
}

}  // namespace

SaddleSolution run_to_convergence(const EnsembleSpec& spec, double q, const PDParams& params, InitMode init) {
  params.validate();
  check_cavity_spec(spec);
  if (!(q > 0.0)) throw DomainError("run_to_convergence: Q must be positive");

  SaddleSolution sol;
  sol.spec = spec;
  sol.q = q;
  sol.init_mode = init;
  const bool joint = is_joint(spec);
  Rng init_rng(derive_seed(params.seed ^ kInitSalt, 0));
  sol.populations.bias = init_population(joint ? PopulationKind::JointBias : PopulationKind::ModulatedBias, init,
                                         params, init_rng);
  sol.populations.field = init_population(joint ? PopulationKind::JointField : PopulationKind::ModulatedField,
                                          init, params, init_rng);

  const std::size_t samples = params.sample_count();
  int sweep = 0;
  while (sweep < params.max_sweeps) {
    ++sweep;
    do_sweep(sol.populations, spec, q, params, sweep);
    Rng stats_rng(derive_seed(params.seed ^ kStatsSalt, static_cast<std::uint64_t>(sweep)));
    sol.history.push_back(population_stats(sol.populations, spec, samples, stats_rng));
    if (sweep % params.window == 0 && window_converged(sol.history, params.window, params.tolerance)) {
      sol.converged = true;
      if (!params.run_all_sweeps) break;
    }
  }
  measure(sol, params, sweep + 1);
  return sol;
}

SaddleSolution continue_solution(const SaddleSolution& base, const PDParams& params, int sweeps) {
  params.validate();
  SaddleSolution sol = base;
  const std::size_t samples = params.sample_count();
  int sweep = base.sweeps;
  for (int i = 0; i < sweeps; ++i) {
    ++sweep;
    do_sweep(sol.populations, sol.spec, sol.q, params, sweep);
    Rng stats_rng(derive_seed(params.seed ^ kStatsSalt, static_cast<std::uint64_t>(sweep)));
    sol.history.push_back(population_stats(sol.populations, sol.spec, samples, stats_rng));
  }
  measure(sol, params, sweep + 1);
  return sol;
}

namespace {

std::vector<double> histogram(const Population& pop, int label, int bins) {
  std::vector<double> hist(bins, 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (pop.labels[i] != label) continue;
    const double t = std::tanh(pop.values[i]);
    const int b = std::clamp(static_cast<int>((t + 1.0) / 2.0 * bins), 0, bins - 1);
    hist[b] += 1.0;
    ++count;
  }
  if (count > 0)
    for (auto& h : hist) h /= count;
  return hist;
}

double l1(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::fabs(a[i] - b[i]);
  return d;
}

}  // namespace

double symmetry_check(const Population& joint, int bins) {
  if (!joint.joint()) throw DomainError("symmetry_check: expects a joint population");
  if (bins < 1) throw DomainError("symmetry_check: bins must be >= 1");
  return l1(histogram(joint, 1, bins), histogram(joint, -1, bins));
}

double symmetry_noise_floor(const Population& joint, int resamples, double quantile, Rng& rng, int bins) {
  if (!joint.joint()) throw DomainError("symmetry_noise_floor: expects a joint population");
  if (resamples < 1 || !(quantile > 0.0 && quantile <= 1.0))
    throw DomainError("symmetry_noise_floor: bad resample settings");
  Population boot = joint;
  std::vector<double> dists;
  dists.reserve(resamples);
  for (int r = 0; r < resamples; ++r) {
    for (std::size_t i = 0; i < boot.size(); ++i) boot.values[i] = joint.values[pick(joint.size(), rng)];
    dists.push_back(symmetry_check(boot, bins));
  }
  std::sort(dists.begin(), dists.end());
  const auto idx = std::min<std::size_t>(dists.size() - 1, static_cast<std::size_t>(std::ceil(quantile * dists.size())) - 1);
  return dists[idx];
}

BranchTable metastability_scan(const EnsembleSpec& spec, std::span<const double> sigma0_grid,
                               const PDParams& params, int threads) {
  params.validate();
  const std::size_t points = sigma0_grid.size();
  std::vector<SaddleSolution> solutions(points * 2);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < solutions.size(); job = next++) {
      const std::size_t point = job / 2;
      const InitMode init = job % 2 == 0 ? InitMode::Random : InitMode::Informed;
      PDParams p = params;
      p.seed = derive_seed(params.seed, point);
      solutions[job] = run_to_convergence(spec, psd_Q(sigma0_grid[point]), p, init);
    }
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(solutions.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  BranchTable table;
  for (std::size_t point = 0; point < points; ++point) {
    const auto& r = solutions[2 * point];
    const auto& i = solutions[2 * point + 1];
    const double combined = std::hypot(r.ber.se, i.ber.se);
    const bool multi = std::fabs(r.ber.value - i.ber.value) > kMultivaluedSigmas * combined;
    for (const auto* s : {&r, &i}) {
      table.rows.push_back({sigma0_grid[point], s->q, s->init_mode, s->ber, s->free_energy, s->converged, multi,
                            s->sweeps});
    }
    if (multi) {
      table.any_multivalued = true;
      if (table.onset_q == 0.0 || r.q < table.onset_q) table.onset_q = r.q;
    }
  }
  return table;
}

}  // namespace cdma
