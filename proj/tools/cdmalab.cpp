// cdmalab: command line front end for the sparse CDMA detection toolkit.
//
//   cdmalab <subcommand> [--config file.json] [--seed N] [--threads N] [--out dir] ...
//
// Exit status: 0 success, 2 invalid input or configuration, 3 partial
// failure of an experiment, 1 anything unexpected. CDMALAB_OUT sets the
// default output directory.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdma/channel.hpp"
#include "cdma/detector.hpp"
#include "cdma/ensemble.hpp"
#include "cdma/errors.hpp"
#include "cdma/harness.hpp"
#include "cdma/landscape.hpp"
#include "cdma/popdyn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cdma;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitPartial = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config (JSON); flags override its values")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "Output directory (default $CDMALAB_OUT or ./cdmalab_out)");
}

fs::path output_dir(const Common& c, const std::optional<ExperimentConfig>& cfg) {
  fs::path dir;
  if (!c.out.empty())
    dir = c.out;
  else if (cfg && !cfg->output_dir.empty())
    dir = cfg->output_dir;
  else if (const char* env = std::getenv("CDMALAB_OUT"); env && *env)
    dir = env;
  else
    dir = "cdmalab_out";
  fs::create_directories(dir);
  return dir;
}

std::optional<ExperimentConfig> maybe_config(const Common& c) {
  if (c.config.empty()) return std::nullopt;
  return load_config(c.config);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setw(2) << j << '\n';
  std::cout << "wrote " << path.string() << '\n';
}

json estimate_json(const Estimate& e) { return {{"value", e.value}, {"se", e.se}}; }

json spec_json(const EnsembleSpec& s) {
  return {{"users", s.users},
          {"chips", s.chips},
          {"user_degree", s.user_degree},
          {"chip_degree", s.chip_degree},
          {"alpha", s.load()},
          {"modulation", std::string(to_string(s.modulation))},
          {"regularity", std::string(to_string(s.regularity))}};
}

Modulation parse_ensemble_flag(const std::string& s) {
  if (s == "bpsk") return Modulation::Bpsk;
  if (s == "unmod") return Modulation::Unmodulated;
  throw ConfigError("--ensemble must be bpsk or unmod");
}

BPInit parse_bp_init_flag(const std::string& s) {
  if (s == "uninformed") return BPInit::Uninformed;
  if (s == "informed") return BPInit::Informed;
  throw ConfigError("--init must be uninformed or informed");
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  int users = 12, chips = 0, user_degree = 3, chip_degree = 6;
  std::string modulation = "BPSK", regularity = "FullyRegular";
  double sigma0 = 0.5;
  std::uint64_t seed = 1;
};

int run_generate(const Common& common, const GenerateArgs& a) {
  EnsembleSpec spec;
  if (a.chips == 0) {
    if (parse_regularity(a.regularity) != Regularity::FullyRegular)
      throw ConfigError("--N is required unless --regularity FullyRegular");
    spec = regular_spec(a.users, a.user_degree, a.chip_degree, parse_modulation(a.modulation));
  } else {
    spec = {a.users, a.chips, a.user_degree, a.chip_degree, parse_modulation(a.modulation),
            parse_regularity(a.regularity)};
    spec.validate();
  }
  const std::uint64_t seed = common.seed.value_or(a.seed);
  Rng rng(seed);
  const auto code = sample_code(spec, rng);
  const auto bits = sample_bits(spec.users, rng);
  auto rec = transmit(code, bits, a.sigma0, rng);
  rec.seed = seed;
  const auto dir = output_dir(common, std::nullopt);
  save_code((dir / "code.txt").string(), code);
  rec.code_ref = "code.txt";
  std::cout << "wrote " << (dir / "code.txt").string() << '\n';
  write_json(dir / "record.json", to_json(rec));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct DetectArgs {
  std::string code, record, method = "bp", init;
  std::optional<int> max_iter;
  std::optional<double> tol, damping;
};

int run_detect(const Common& common, const DetectArgs& a) {
  const auto cfg = maybe_config(common);
  BPParams bp = cfg ? cfg->bp : BPParams{};
  if (a.max_iter) bp.max_iterations = *a.max_iter;
  if (a.tol) bp.tolerance = *a.tol;
  if (a.damping) bp.damping = *a.damping;
  if (!a.init.empty()) bp.init = parse_bp_init_flag(a.init);
  bp.validate();

  const auto code = load_code(a.code);
  std::ifstream in(a.record);
  if (!in) throw ConfigError("cannot open record " + a.record);
  json rj;
  try {
    in >> rj;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("record is not valid JSON: ") + e.what());
  }
  const auto rec = record_from_json(rj);
  const double q = rec.Q();

  PosteriorMarginals m;
  json out;
  if (a.method == "exact") {
    m = exact_marginals(code, rec, q);
  } else if (a.method == "bp") {
    BPMessages msg;
    m = bp_detect(code, rec, q, bp, &msg);
    out["bethe_free_energy"] = bethe_free_energy(code, rec, q, msg);
  } else {
    throw ConfigError("--method must be exact or bp");
  }
  const auto hd = hard_decisions(m);
  out["method"] = std::string(to_string(m.method));
  out["Q"] = q;
  out["iterations"] = m.iterations;
  out["converged"] = m.converged;
  out["residual"] = m.residual;
  out["prob_plus"] = m.prob_plus;
  out["llr"] = m.llr;
  out["decisions"] = hd.bits;
  std::vector<int> ties;
  for (std::size_t k = 0; k < hd.ties.size(); ++k)
    if (hd.ties[k]) ties.push_back(static_cast<int>(k));
  out["ties"] = ties;
  if (rec.bits.size() == hd.bits.size()) {
    const auto o = overlap_ber(hd.bits, rec.bits, hd.ties);
    out["overlap"] = o.overlap;
    out["ber"] = o.ber;
  }
  write_json(output_dir(common, cfg) / "detect.json", out);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PopdynArgs {
  std::optional<int> c, l, pop_size, max_sweeps, window;
  std::optional<double> sigma0, tol;
  std::string init = "random", ensemble, reading;
  std::string grid;
};

struct PopdynSetup {
  EnsembleSpec spec;
  PDParams pd;
  std::vector<double> grid;
  std::optional<ExperimentConfig> cfg;
};

PopdynSetup popdyn_setup(const Common& common, const PopdynArgs& a) {
  PopdynSetup s;
  s.cfg = maybe_config(common);
  int c = 3, l = 6;
  Modulation m = Modulation::Bpsk;
  if (s.cfg) {
    c = s.cfg->spec.user_degree;
    l = s.cfg->spec.chip_degree;
    m = s.cfg->spec.modulation;
    s.pd = s.cfg->pd;
    s.pd.seed = s.cfg->seed;
    s.grid = s.cfg->sigma0_grid;
  }
  if (a.c) c = *a.c;
  if (a.l) l = *a.l;
  if (!a.ensemble.empty()) m = parse_ensemble_flag(a.ensemble);
  if (a.pop_size) {
    if (*a.pop_size < 1) throw ConfigError("--pop-size must be positive");
    s.pd.population_size = static_cast<std::size_t>(*a.pop_size);
  }
  if (a.max_sweeps) s.pd.max_sweeps = *a.max_sweeps;
  if (a.window) s.pd.window = *a.window;
  if (a.tol) s.pd.tolerance = *a.tol;
  if (!a.reading.empty()) s.pd.reading = parse_unmodulated_reading(a.reading);
  if (common.seed) s.pd.seed = *common.seed;
  if (c < 1 || l < 1 || l > kMaxChipDegree) throw ConfigError("--C must be >= 1 and --L in [1, 16]");
  s.spec = cavity_spec(c, l, m);
  s.pd.validate();
  if (!a.grid.empty()) s.grid = parse_grid(a.grid);
  if (a.sigma0) s.grid = {*a.sigma0};
  for (double x : s.grid)
    if (!(x > 0.0)) throw ConfigError("noise levels must be positive");
  return s;
}

json solution_json(const SaddleSolution& sol, double sigma0) {
  json j;
  j["spec"] = spec_json(sol.spec);
  j["sigma0"] = sigma0;
  j["Q"] = sol.q;
  j["init"] = std::string(to_string(sol.init_mode));
  j["sweeps"] = sol.sweeps;
  j["converged"] = sol.converged;
  j["ber"] = estimate_json(sol.ber);
  j["free_energy_per_chip"] = estimate_json(sol.free_energy);
  j["free_energy_per_user"] = estimate_json(sol.free_energy_per_user);
  j["spectral_efficiency_nats_per_chip"] = spectral_efficiency(sol.free_energy.value, sol.spec);
  j["mean_tanh"] = estimate_json(sol.mean_tanh);
  j["terms"] = {{"interaction", estimate_json(sol.terms.interaction)},
                {"site", estimate_json(sol.terms.site)},
                {"edge", estimate_json(sol.terms.edge)},
                {"variable", estimate_json(sol.terms.variable)},
                {"total", estimate_json(sol.terms.total)}};
  auto pop = [](const Population& p) {
    json q = {{"values", p.values}};
    if (p.joint()) q["labels"] = std::vector<int>(p.labels.begin(), p.labels.end());
    return q;
  };
  j["bias_population"] = pop(sol.populations.bias);
  j["field_population"] = pop(sol.populations.field);
  return j;
}

int run_popdyn(const Common& common, const PopdynArgs& a) {
  auto s = popdyn_setup(common, a);
  if (s.grid.size() != 1) throw ConfigError("popdyn needs exactly one noise level (--sigma0)");
  const double sigma0 = s.grid.front();
  const auto sol = run_to_convergence(s.spec, psd_Q(sigma0), s.pd, parse_init_mode(a.init));
  const auto dir = output_dir(common, s.cfg);
  write_json(dir / "popdyn.json", solution_json(sol, sigma0));
  std::ofstream csv(dir / "popdyn_history.csv");
  csv << std::setprecision(12) << "sweep,ber,mean_tanh\n";
  for (std::size_t i = 0; i < sol.history.size(); ++i)
    csv << i + 1 << ',' << sol.history[i].ber << ',' << sol.history[i].mean_tanh << '\n';
  std::cout << "wrote " << (dir / "popdyn_history.csv").string() << '\n';
  std::cout << "ber " << sol.ber.value << " +- " << sol.ber.se << ", f " << sol.free_energy.value << " +- "
            << sol.free_energy.se << (sol.converged ? "" : " (not converged)") << '\n';
  return kExitOk;
}

int run_scan(const Common& common, const PopdynArgs& a) {
  auto s = popdyn_setup(common, a);
  if (s.grid.empty()) throw ConfigError("scan needs --sigma0-grid start:stop:steps");
  const auto table = metastability_scan(s.spec, s.grid, s.pd, common.threads);
  const auto dir = output_dir(common, s.cfg);
  std::ofstream csv(dir / "branch_table.csv");
  csv << std::setprecision(12) << "sigma0,Q,init,ber,ber_se,free_energy,fe_se,converged,multivalued\n";
  for (const auto& r : table.rows)
    csv << r.sigma0 << ',' << r.q << ',' << to_string(r.init) << ',' << r.ber.value << ',' << r.ber.se << ','
        << r.free_energy.value << ',' << r.free_energy.se << ',' << (r.converged ? 1 : 0) << ','
        << (r.multivalued ? 1 : 0) << '\n';
  std::cout << "wrote " << (dir / "branch_table.csv").string() << '\n';
  write_json(dir / "scan.json", {{"spec", spec_json(s.spec)},
                                 {"seed", s.pd.seed},
                                 {"any_multivalued", table.any_multivalued},
                                 {"onset_Q", table.onset_q}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct LandscapeArgs {
  std::string mode = "decompose", code, record, modulation = "BPSK";
  int users = 600, user_degree = 3, chip_degree = 6, trials = 10'000;
  double sigma0 = 0.5;
};

TransmissionRecord read_record(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open record " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("record is not valid JSON: ") + e.what());
  }
  return record_from_json(j);
}

void write_histogram(const fs::path& path, const std::map<double, int>& counts) {
  std::ofstream out(path);
  out << std::setprecision(12) << "value,count\n";
  for (const auto& [v, n] : counts) out << v << ',' << n << '\n';
  std::cout << "wrote " << path.string() << '\n';
}

void write_binned(const fs::path& path, const std::vector<double>& xs, int bins) {
  std::ofstream out(path);
  out << std::setprecision(12) << "bin_lo,bin_hi,count\n";
  if (!xs.empty()) {
    const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
    const double lo = *lo_it, width = std::max((*hi_it - lo) / bins, 1e-12);
    std::vector<int> counts(bins, 0);
    for (double x : xs) ++counts[std::min(bins - 1, static_cast<int>((x - lo) / width))];
    for (int b = 0; b < bins; ++b) out << lo + b * width << ',' << lo + (b + 1) * width << ',' << counts[b] << '\n';
  }
  std::cout << "wrote " << path.string() << '\n';
}

int run_landscape(const Common& common, const LandscapeArgs& a) {
  const auto cfg = maybe_config(common);
  const auto dir = output_dir(common, cfg);
  if (a.mode == "decompose") {
    if (a.code.empty() || a.record.empty()) throw ConfigError("decompose needs --code and --record");
    const auto code = load_code(a.code);
    const auto rec = read_record(a.record);
    const auto cf = coupling_field_decomposition(code, rec, rec.Q());
    json pairs = json::array();
    std::map<double, int> jhist;
    for (const auto& [pair, j] : cf.couplings) {
      pairs.push_back({pair.first, pair.second, j});
      ++jhist[j];
    }
    write_json(dir / "landscape_decompose.json", {{"Q", cf.q},
                                                  {"couplings", pairs},
                                                  {"fields", cf.fields},
                                                  {"constant_offset", cf.constant_offset}});
    write_histogram(dir / "coupling_histogram.csv", jhist);
    write_binned(dir / "field_histogram.csv", cf.fields, 40);
  } else if (a.mode == "moments") {
    EnsembleSpec spec = cfg ? cfg->spec : regular_spec(a.users, a.user_degree, a.chip_degree,
                                                        parse_modulation(a.modulation));
    if (cfg) spec.validate();
    const double sigma0 = cfg && !cfg->sigma0_grid.empty() ? cfg->sigma0_grid.front() : a.sigma0;
    const int trials = cfg ? cfg->trials : a.trials;
    Rng rng(common.seed.value_or(cfg ? cfg->seed : 1));
    const double q = psd_Q(sigma0);
    const auto emp = empirical_field_moments(spec, q, trials, rng);
    const auto ens = spec.regularity != Regularity::FullyRegular ? FieldEnsemble::Dense
                     : spec.modulation == Modulation::Bpsk   ? FieldEnsemble::SparseBpsk
                                                             : FieldEnsemble::SparseUnmodulated;
    const auto pred = predicted_field_moments(spec, q, ens);
    write_json(dir / "landscape_moments.json",
               {{"spec", spec_json(spec)},
                {"sigma0", sigma0},
                {"Q", q},
                {"ensemble", std::string(to_string(ens))},
                {"predicted", {{"mean", pred.mean}, {"variance", pred.variance},
                               {"truncated_variance", pred.truncated_variance}}},
                {"empirical", {{"mean", emp.mean}, {"mean_se", emp.mean_se}, {"variance", emp.variance},
                               {"variance_se", emp.variance_se}, {"samples", emp.samples}}}});
    write_binned(dir / "field_histogram.csv", emp.values, 40);
  } else if (a.mode == "naesat") {
    if (a.code.empty()) throw ConfigError("naesat needs --code");
    const auto code = load_code(a.code);
    const auto res = naesat_ground_states(code);
    json j = {{"min_all_equal", res.min_all_equal},
              {"ground_state_count", res.ground_state_count},
              {"ground_states", res.ground_states},
              {"min_clique_energy", res.min_clique_energy},
              {"min_energy_count", res.min_energy_count}};
    if (!a.record.empty()) {
      const auto rec = read_record(a.record);
      const auto cf = coupling_field_decomposition(code, rec, rec.Q());
      json ranked = json::array();
      for (const auto& [mask, align] : rank_by_field(res.ground_states, cf.fields))
        ranked.push_back({{"state", mask}, {"field_alignment", align}});
      j["ranked_by_field"] = ranked;
    }
    write_json(dir / "landscape_naesat.json", j);
  } else {
    throw ConfigError("--mode must be decompose, moments or naesat");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int run_experiment_cmd(const Common& common) {
  if (common.config.empty()) throw ConfigError("experiment needs --config");
  auto cfg = load_config(common.config);
  if (common.seed) cfg.seed = *common.seed;
  cfg.threads = common.threads;
  cfg.output_dir = output_dir(common, cfg).string();
  const auto result = run_experiment(cfg);
  for (const auto& f : result.files) std::cout << "wrote " << (result.output_dir / f).string() << '\n';
  if (!result.all_ok()) {
    for (const auto& p : result.points)
      if (!p.ok) std::cerr << "point " << p.point << " failed: " << p.message << '\n';
    return kExitPartial;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse CDMA multiuser detection and cavity analysis"};
  app.set_version_flag("--version", library_version());
  app.require_subcommand(1);

  Common common;

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Sample a code and one transmission");
  add_common(generate, common);
  generate->add_option("--K", gen.users, "Users");
  generate->add_option("--N", gen.chips, "Chips (derived for FullyRegular when omitted)");
  generate->add_option("--C", gen.user_degree, "Chips per user");
  generate->add_option("--L", gen.chip_degree, "Users per chip");
  generate->add_option("--modulation", gen.modulation, "BPSK or Unmodulated");
  generate->add_option("--regularity", gen.regularity, "PureRandom, UserRegular or FullyRegular");
  generate->add_option("--sigma0", gen.sigma0, "Noise standard deviation");

  DetectArgs det;
  auto* detect = app.add_subcommand("detect", "Posterior marginals for one code and record");
  add_common(detect, common);
  detect->add_option("--code", det.code, "Code file")->required()->check(CLI::ExistingFile);
  detect->add_option("--record", det.record, "Transmission record JSON")->required()->check(CLI::ExistingFile);
  detect->add_option("--method", det.method, "exact or bp")->check(CLI::IsMember({"exact", "bp"}));
  detect->add_option("--max-iter", det.max_iter, "BP iteration limit");
  detect->add_option("--tol", det.tol, "BP convergence tolerance");
  detect->add_option("--damping", det.damping, "BP damping in [0, 1)");
  detect->add_option("--init", det.init, "uninformed or informed")->check(CLI::IsMember({"uninformed", "informed"}));

  PopdynArgs pda;
  auto* popdyn = app.add_subcommand("popdyn", "Solve the cavity equations at one noise level");
  add_common(popdyn, common);
  auto add_pd_flags = [&](CLI::App* cmd) {
    cmd->add_option("--C", pda.c, "Chips per user");
    cmd->add_option("--L", pda.l, "Users per chip");
    cmd->add_option("--pop-size", pda.pop_size, "Population size");
    cmd->add_option("--max-sweeps", pda.max_sweeps, "Sweep limit");
    cmd->add_option("--window", pda.window, "Sweeps per convergence check");
    cmd->add_option("--tolerance", pda.tol, "Convergence tolerance");
    cmd->add_option("--ensemble", pda.ensemble, "bpsk or unmod")->check(CLI::IsMember({"bpsk", "unmod"}));
    cmd->add_option("--reading", pda.reading, "Label amplitude in the unmodulated kernel: scaled (A a_l) or literal (a_l)")
        ->check(CLI::IsMember({"scaled", "literal"}));
  };
  add_pd_flags(popdyn);
  popdyn->add_option("--sigma0", pda.sigma0, "Noise standard deviation");
  popdyn->add_option("--init", pda.init, "random, informed or zero")
      ->check(CLI::IsMember({"random", "informed", "zero"}));

  auto* scan = app.add_subcommand("scan", "Random and informed branches over a noise grid");
  add_common(scan, common);
  add_pd_flags(scan);
  scan->add_option("--sigma0-grid", pda.grid, "start:stop:steps");

  LandscapeArgs la;
  auto* landscape = app.add_subcommand("landscape", "Coupling/field decomposition, field moments, NAE-SAT census");
  add_common(landscape, common);
  landscape->add_option("--mode", la.mode, "decompose, moments or naesat")
      ->check(CLI::IsMember({"decompose", "moments", "naesat"}));
  landscape->add_option("--code", la.code, "Code file")->check(CLI::ExistingFile);
  landscape->add_option("--record", la.record, "Transmission record JSON")->check(CLI::ExistingFile);
  landscape->add_option("--K", la.users, "Users (moments)");
  landscape->add_option("--C", la.user_degree, "Chips per user (moments)");
  landscape->add_option("--L", la.chip_degree, "Users per chip (moments)");
  landscape->add_option("--modulation", la.modulation, "BPSK or Unmodulated (moments)");
  landscape->add_option("--sigma0", la.sigma0, "Noise standard deviation (moments)");
  landscape->add_option("--trials", la.trials, "Field samples (moments)");

  auto* experiment = app.add_subcommand("experiment", "Run a configured experiment");
  add_common(experiment, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*generate) return run_generate(common, gen);
    if (*detect) return run_detect(common, det);
    if (*popdyn) return run_popdyn(common, pda);
    if (*scan) return run_scan(common, pda);
    if (*landscape) return run_landscape(common, la);
    if (*experiment) return run_experiment_cmd(common);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const CapacityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed input: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}
