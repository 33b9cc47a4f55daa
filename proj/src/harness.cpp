#include "cdma/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "cdma/channel.hpp"
#include "cdma/errors.hpp"
#include "cdma/landscape.hpp"
#include "cdma/seeds.hpp"

#ifndef CDMALAB_VERSION
#define CDMALAB_VERSION "unknown"
#endif

namespace cdma {

using nlohmann::json;
namespace fs = std::filesystem;

std::string library_version() { return CDMALAB_VERSION; }

std::string_view to_string(ExperimentKind e) {
  switch (e) {
    case ExperimentKind::DetectSweep: return "DetectSweep";
    case ExperimentKind::PopdynScan: return "PopdynScan";
    case ExperimentKind::MomentCheck: return "MomentCheck";
    case ExperimentKind::NaesatCensus: return "NaesatCensus";
    case ExperimentKind::EquivalenceCheck: return "EquivalenceCheck";
  }
  return "?";
}

ExperimentKind parse_experiment(std::string_view s) {
  for (auto e : {ExperimentKind::DetectSweep, ExperimentKind::PopdynScan, ExperimentKind::MomentCheck,
                 ExperimentKind::NaesatCensus, ExperimentKind::EquivalenceCheck})
    if (s == to_string(e)) return e;
  throw ConfigError("unknown experiment '" + std::string(s) + "'");
}

std::vector<double> linear_grid(double start, double stop, int steps) {
  if (steps < 1) throw ConfigError("grid: steps must be >= 1");
  std::vector<double> grid(steps);
  for (int i = 0; i < steps; ++i)
    grid[i] = steps == 1 ? start : start + (stop - start) * static_cast<double>(i) / (steps - 1);
  return grid;
}

std::vector<double> parse_grid(std::string_view text) {
  std::vector<std::string> parts;
  std::string current;
  for (char ch : text) {
    if (ch == ':') {
      parts.push_back(current);
      current.clear();
    } else {
      current += ch;
    }
  }
  parts.push_back(current);
  if (parts.size() != 3) throw ConfigError("grid must read start:stop:steps, got '" + std::string(text) + "'");
  try {
    std::size_t used = 0;
    const double start = std::stod(parts[0], &used);
    if (used != parts[0].size()) throw std::invalid_argument("start");
    const double stop = std::stod(parts[1], &used);
    if (used != parts[1].size()) throw std::invalid_argument("stop");
    const int steps = std::stoi(parts[2], &used);
    if (used != parts[2].size()) throw std::invalid_argument("steps");
    return linear_grid(start, stop, steps);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("grid must read start:stop:steps, got '" + std::string(text) + "'");
  }
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

class Problems {
 public:
  void add(const std::string& field, const std::string& why) { items_.push_back(field + " (" + why + ")"); }
  bool empty() const { return items_.empty(); }
  [[noreturn]] void raise() const {
    std::string msg = "invalid config:";
    for (const auto& i : items_) msg += "\n  " + i;
    throw ConfigError(msg);
  }

 private:
  std::vector<std::string> items_;
};

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known, const std::string& prefix,
                    Problems& p) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) p.add(prefix + key, "unknown field");
  }
}

void read_int(const json& obj, const char* key, int& out, const std::string& prefix, Problems& p) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) return p.add(prefix + key, "expected an integer");
  const auto x = v.get<long long>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    return p.add(prefix + key, "out of range");
  out = static_cast<int>(x);
}

void read_size(const json& obj, const char* key, std::size_t& out, const std::string& prefix, Problems& p) {
  int x = static_cast<int>(std::min<std::size_t>(out, std::numeric_limits<int>::max()));
  const bool present = obj.contains(key);
  read_int(obj, key, x, prefix, p);
  if (!present) return;
  if (x < 0) return p.add(prefix + key, "must be non-negative");
  out = static_cast<std::size_t>(x);
}

void read_double(const json& obj, const char* key, double& out, const std::string& prefix, Problems& p) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number()) return p.add(prefix + key, "expected a number");
  out = v.get<double>();
}

void read_string(const json& obj, const char* key, std::string& out, const std::string& prefix, Problems& p) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_string()) return p.add(prefix + key, "expected a string");
  out = v.get<std::string>();
}

template <class Parse, class T>
void read_enum(const json& obj, const char* key, T& out, Parse parse, const std::string& prefix, Problems& p) {
  std::string text;
  if (!obj.contains(key)) return;
  read_string(obj, key, text, prefix, p);
  if (!obj.at(key).is_string()) return;
  try {
    out = parse(text);
  } catch (const std::exception&) {
    p.add(prefix + key, "unrecognised value '" + text + "'");
  }
}

bool expect_object(const json& j, const char* key, Problems& p) {
  if (!j.contains(key)) return false;
  if (!j.at(key).is_object()) {
    p.add(key, "expected an object");
    return false;
  }
  return true;
}

BPInit parse_bp_init(std::string_view s) {
  if (s == "uninformed") return BPInit::Uninformed;
  if (s == "informed") return BPInit::Informed;
  throw ConfigError("unknown BP init '" + std::string(s) + "'");
}

bool uses_cavity(ExperimentKind e) {
  return e == ExperimentKind::PopdynScan || e == ExperimentKind::EquivalenceCheck;
}

void check_config(const ExperimentConfig& c, Problems& p) {
  if (c.schema_version != kSchemaVersion) p.add("schema_version", "expected " + std::to_string(kSchemaVersion));
  if (c.trials < 1) p.add("trials", "must be >= 1");
  if (c.replicas < 1) p.add("replicas", "must be >= 1");
  if (c.threads < 1) p.add("threads", "must be >= 1");
  if (c.sigma0_grid.empty()) p.add("sigma0_grid", "must be non-empty");
  for (double s : c.sigma0_grid)
    if (!(s > 0.0) || !std::isfinite(s)) {
      p.add("sigma0_grid", "noise levels must be positive and finite");
      break;
    }

  if (uses_cavity(c.experiment)) {
    if (c.spec.user_degree < 1) p.add("spec.user_degree", "must be >= 1");
    std::vector<int> degrees = c.chip_degrees.empty() ? std::vector<int>{c.spec.chip_degree} : c.chip_degrees;
    for (int l : degrees)
      if (l < 1 || l > kMaxChipDegree) {
        p.add(c.chip_degrees.empty() ? "spec.chip_degree" : "chip_degrees",
              "L must lie in [1, " + std::to_string(kMaxChipDegree) + "]");
        break;
      }
    try {
      c.pd.validate();
    } catch (const std::exception& e) {
      p.add("popdyn", e.what());
    }
  } else {
    try {
      c.spec.validate();
    } catch (const std::exception& e) {
      p.add("spec", e.what());
    }
    if (!c.chip_degrees.empty()) p.add("chip_degrees", "only used by PopdynScan");
  }

  switch (c.experiment) {
    case ExperimentKind::DetectSweep:
      try {
        c.bp.validate();
      } catch (const std::exception& e) {
        p.add("detector", e.what());
      }
      break;
    case ExperimentKind::MomentCheck:
      if (c.trials < 100) p.add("trials", "MomentCheck needs at least 100 samples");
      break;
    case ExperimentKind::NaesatCensus:
      if (c.spec.modulation != Modulation::Unmodulated) p.add("spec.modulation", "NaesatCensus needs Unmodulated");
      if (c.spec.users > 24) p.add("spec.users", "NaesatCensus enumerates 2^K states, K <= 24");
      break;
    default:
      break;
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  Problems p;
  check_config(*this, p);
  if (!p.empty()) p.raise();
}

ExperimentConfig config_from_json(const json& j) {
  Problems p;
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigError("invalid config:\n  <root> (expected a JSON object)");
  reject_unknown(j,
                 {"schema_version", "experiment", "spec", "chip_degrees", "sigma0_grid", "trials", "replicas",
                  "detector", "popdyn", "seed", "output_dir", "threads"},
                 "", p);

  if (!j.contains("schema_version")) p.add("schema_version", "required");
  read_int(j, "schema_version", c.schema_version, "", p);
  if (!j.contains("experiment")) p.add("experiment", "required");
  read_enum(j, "experiment", c.experiment, parse_experiment, "", p);

  bool chips_given = false;
  if (expect_object(j, "spec", p)) {
    const auto& s = j.at("spec");
    reject_unknown(s, {"users", "chips", "user_degree", "chip_degree", "modulation", "regularity"}, "spec.", p);
    read_int(s, "users", c.spec.users, "spec.", p);
    chips_given = s.contains("chips");
    read_int(s, "chips", c.spec.chips, "spec.", p);
    read_int(s, "user_degree", c.spec.user_degree, "spec.", p);
    read_int(s, "chip_degree", c.spec.chip_degree, "spec.", p);
    read_enum(s, "modulation", c.spec.modulation, parse_modulation, "spec.", p);
    read_enum(s, "regularity", c.spec.regularity, parse_regularity, "spec.", p);
  }
  if (!chips_given && c.spec.regularity == Regularity::FullyRegular && c.spec.chip_degree > 0) {
    const long long edges = static_cast<long long>(c.spec.users) * c.spec.user_degree;
    if (edges % c.spec.chip_degree == 0) c.spec.chips = static_cast<int>(edges / c.spec.chip_degree);
  }

  if (j.contains("chip_degrees")) {
    const auto& v = j.at("chip_degrees");
    if (!v.is_array()) {
      p.add("chip_degrees", "expected a list of integers");
    } else {
      for (const auto& x : v) {
        if (!x.is_number_integer()) {
          p.add("chip_degrees", "expected a list of integers");
          break;
        }
        c.chip_degrees.push_back(x.get<int>());
      }
    }
  }

  if (j.contains("sigma0_grid")) {
    const auto& g = j.at("sigma0_grid");
    if (g.is_array()) {
      for (const auto& x : g) {
        if (!x.is_number()) {
          p.add("sigma0_grid", "expected numbers");
          break;
        }
        c.sigma0_grid.push_back(x.get<double>());
      }
    } else if (g.is_object()) {
      reject_unknown(g, {"start", "stop", "steps"}, "sigma0_grid.", p);
      double start = 0.0, stop = 0.0;
      int steps = 0;
      for (const char* key : {"start", "stop", "steps"})
        if (!g.contains(key)) p.add(std::string("sigma0_grid.") + key, "required");
      read_double(g, "start", start, "sigma0_grid.", p);
      read_double(g, "stop", stop, "sigma0_grid.", p);
      read_int(g, "steps", steps, "sigma0_grid.", p);
      if (steps >= 1) c.sigma0_grid = linear_grid(start, stop, steps);
      else if (g.contains("steps")) p.add("sigma0_grid.steps", "must be >= 1");
    } else {
      p.add("sigma0_grid", "expected a list or {start, stop, steps}");
    }
  }

  read_int(j, "trials", c.trials, "", p);
  read_int(j, "replicas", c.replicas, "", p);
  read_int(j, "threads", c.threads, "", p);
  read_string(j, "output_dir", c.output_dir, "", p);
  if (j.contains("seed")) {
    const auto& s = j.at("seed");
    if (s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0))
      c.seed = s.get<std::uint64_t>();
    else
      p.add("seed", "expected a non-negative integer");
  }

  if (expect_object(j, "detector", p)) {
    const auto& d = j.at("detector");
    reject_unknown(d, {"max_iterations", "tolerance", "damping", "init", "informed_magnitude"}, "detector.", p);
    read_int(d, "max_iterations", c.bp.max_iterations, "detector.", p);
    read_double(d, "tolerance", c.bp.tolerance, "detector.", p);
    read_double(d, "damping", c.bp.damping, "detector.", p);
    read_enum(d, "init", c.bp.init, parse_bp_init, "detector.", p);
    read_double(d, "informed_magnitude", c.bp.informed_magnitude, "detector.", p);
  }

  if (expect_object(j, "popdyn", p)) {
    const auto& d = j.at("popdyn");
    reject_unknown(d,
                   {"population_size", "max_sweeps", "window", "tolerance", "field_cap", "measure_sweeps",
                    "measure_batches", "samples", "unmodulated_reading"},
                   "popdyn.", p);
    read_size(d, "population_size", c.pd.population_size, "popdyn.", p);
    read_int(d, "max_sweeps", c.pd.max_sweeps, "popdyn.", p);
    read_int(d, "window", c.pd.window, "popdyn.", p);
    read_double(d, "tolerance", c.pd.tolerance, "popdyn.", p);
    read_double(d, "field_cap", c.pd.field_cap, "popdyn.", p);
    read_int(d, "measure_sweeps", c.pd.measure_sweeps, "popdyn.", p);
    read_int(d, "measure_batches", c.pd.measure_batches, "popdyn.", p);
    read_size(d, "samples", c.pd.samples, "popdyn.", p);
    read_enum(d, "unmodulated_reading", c.pd.reading, parse_unmodulated_reading, "popdyn.", p);
  }

  check_config(c, p);
  if (!p.empty()) p.raise();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["experiment"] = std::string(to_string(c.experiment));
  j["spec"] = {{"users", c.spec.users},
               {"chips", c.spec.chips},
               {"user_degree", c.spec.user_degree},
               {"chip_degree", c.spec.chip_degree},
               {"modulation", std::string(to_string(c.spec.modulation))},
               {"regularity", std::string(to_string(c.spec.regularity))}};
  if (!c.chip_degrees.empty()) j["chip_degrees"] = c.chip_degrees;
  j["sigma0_grid"] = c.sigma0_grid;
  j["trials"] = c.trials;
  j["replicas"] = c.replicas;
  j["detector"] = {{"max_iterations", c.bp.max_iterations},
                   {"tolerance", c.bp.tolerance},
                   {"damping", c.bp.damping},
                   {"init", c.bp.init == BPInit::Informed ? "informed" : "uninformed"},
                   {"informed_magnitude", c.bp.informed_magnitude}};
  j["popdyn"] = {{"population_size", c.pd.population_size}, {"max_sweeps", c.pd.max_sweeps},
                 {"window", c.pd.window},                   {"tolerance", c.pd.tolerance},
                 {"field_cap", c.pd.field_cap},             {"measure_sweeps", c.pd.measure_sweeps},
                 {"measure_batches", c.pd.measure_batches}, {"samples", c.pd.samples},
                 {"unmodulated_reading", std::string(to_string(c.pd.reading))}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  return j;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

bool ExperimentResult::all_ok() const {
  return std::all_of(points.begin(), points.end(), [](const PointStatus& s) { return s.ok; });
}

// ---------------------------------------------------------------------------
// Shared building blocks

double z_score(const Estimate& a, const Estimate& b) {
  const double combined = std::hypot(a.se, b.se);
  const double diff = std::fabs(a.value - b.value);
  if (combined == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / combined;
}

Estimate sample_estimate(std::span<const double> xs) {
  if (xs.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

namespace {

// Runs job(i) for i in [0, count) on up to `threads` workers.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& job) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) job(i);
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (workers == 1) {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
}

}  // namespace

DetectPoint detect_point(const EnsembleSpec& spec, double sigma0, int trials, const BPParams& bp,
                         std::uint64_t seed, int threads) {
  if (trials < 1) throw DomainError("detect_point: trials must be >= 1");
  bp.validate();
  const double q = psd_Q(sigma0);
  const bool exact = spec.users <= kMaxExactUsers;
  std::vector<double> ber_exact(trials), ber_bp(trials);
  std::vector<char> converged(trials);
  std::vector<std::exception_ptr> errors(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    try {
      Rng rng(derive_seed(seed, t));
      const auto code = sample_code(spec, rng);
      const auto bits = sample_bits(spec.users, rng);
      const auto rec = transmit(code, bits, sigma0, rng);
      const auto m = bp_detect(code, rec, q, bp);
      const auto hd = hard_decisions(m);
      ber_bp[t] = overlap_ber(hd.bits, bits, hd.ties).ber;
      converged[t] = m.converged;
      if (exact) {
        const auto e = hard_decisions(exact_marginals(code, rec, q));
        ber_exact[t] = overlap_ber(e.bits, bits, e.ties).ber;
      }
    } catch (...) {
      errors[t] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  DetectPoint p;
  p.sigma0 = sigma0;
  p.q = q;
  p.trials = trials;
  p.ber_bp = sample_estimate(ber_bp);
  p.ber_exact = exact ? sample_estimate(ber_exact) : Estimate{std::numeric_limits<double>::quiet_NaN(), 0.0};
  p.bp_convergence_rate =
      static_cast<double>(std::count(converged.begin(), converged.end(), char{1})) / static_cast<double>(trials);
  return p;
}

ReplicaSummary run_replicas(const EnsembleSpec& spec, double q, const PDParams& pd, InitMode init, int replicas,
                            std::uint64_t seed, int threads) {
  if (replicas < 1) throw DomainError("run_replicas: replicas must be >= 1");
  ReplicaSummary out;
  out.runs.resize(replicas);
  std::vector<std::exception_ptr> errors(replicas);
  parallel_for(replicas, threads, [&](std::size_t r) {
    try {
      PDParams p = pd;
      p.seed = derive_seed(seed, r);
      out.runs[r] = run_to_convergence(spec, q, p, init);
    } catch (...) {
      errors[r] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  if (replicas == 1) {
    const auto& s = out.runs.front();
    out.ber = s.ber;
    out.free_energy = s.free_energy;
    out.mean_tanh = s.mean_tanh;
    out.all_converged = s.converged;
    return out;
  }
  std::vector<double> ber, fe, mt;
  for (const auto& s : out.runs) {
    ber.push_back(s.ber.value);
    fe.push_back(s.free_energy.value);
    mt.push_back(s.mean_tanh.value);
    out.all_converged = out.all_converged && s.converged;
  }
  out.ber = sample_estimate(ber);
  out.free_energy = sample_estimate(fe);
  out.mean_tanh = sample_estimate(mt);
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

constexpr std::uint64_t kSymmetrySalt = 0x5e11'a7e5'0000'0001ULL;

class Csv {
 public:
  Csv(const fs::path& path, std::initializer_list<std::string_view> header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << std::setprecision(12);
    bool first = true;
    for (auto h : header) {
      out_ << (first ? "" : ",") << h;
      first = false;
    }
    out_ << '\n';
  }

  template <class... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cells, first = false), ...);
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

struct Context {
  const ExperimentConfig& config;
  ExperimentResult& result;
  std::vector<std::string> seed_lines;
  json summary = json::object();

  fs::path path(const std::string& name) {
    result.files.emplace_back(name);
    return result.output_dir / name;
  }
  void ok(std::string point, std::string message = {}) {
    result.points.push_back({std::move(point), true, std::move(message)});
  }
  void fail(std::string point, const std::exception& e) { result.points.push_back({std::move(point), false, e.what()}); }
};

std::string sigma_label(double s) {
  std::ostringstream os;
  os << "sigma0=" << s;
  return os.str();
}

void run_detect_sweep(Context& ctx) {
  const auto& c = ctx.config;
  Csv csv(ctx.path("detect_sweep.csv"), {"sigma0", "Q", "ber_exact", "ber_bp", "se", "bp_convergence_rate", "se_bp"});
  json points = json::array();
  for (std::size_t i = 0; i < c.sigma0_grid.size(); ++i) {
    const double s0 = c.sigma0_grid[i];
    const auto seed = derive_seed(c.seed, i);
    ctx.seed_lines.push_back(sigma_label(s0) + " point_seed=" + std::to_string(seed));
    try {
      const auto p = detect_point(c.spec, s0, c.trials, c.bp, seed, c.threads);
      csv.row(p.sigma0, p.q, p.ber_exact.value, p.ber_bp.value, p.ber_exact.se, p.bp_convergence_rate, p.ber_bp.se);
      points.push_back({{"sigma0", p.sigma0},
                        {"Q", p.q},
                        {"ber_exact", p.ber_exact.value},
                        {"ber_exact_se", p.ber_exact.se},
                        {"ber_bp", p.ber_bp.value},
                        {"ber_bp_se", p.ber_bp.se},
                        {"bp_convergence_rate", p.bp_convergence_rate}});
      ctx.ok(sigma_label(s0));
    } catch (const std::exception& e) {
      ctx.fail(sigma_label(s0), e);
    }
  }
  ctx.summary["points"] = points;
}

void write_branch_table(const fs::path& path, const BranchTable& table) {
  Csv csv(path, {"sigma0", "Q", "init", "ber", "ber_se", "free_energy", "fe_se", "converged", "multivalued"});
  for (const auto& r : table.rows)
    csv.row(r.sigma0, r.q, to_string(r.init), r.ber.value, r.ber.se, r.free_energy.value, r.free_energy.se,
            r.converged ? 1 : 0, r.multivalued ? 1 : 0);
}

void run_popdyn_scan(Context& ctx) {
  const auto& c = ctx.config;
  const auto degrees = c.chip_degrees.empty() ? std::vector<int>{c.spec.chip_degree} : c.chip_degrees;
  json tables = json::array();
  for (std::size_t li = 0; li < degrees.size(); ++li) {
    const int l = degrees[li];
    const std::string label = "C=" + std::to_string(c.spec.user_degree) + " L=" + std::to_string(l);
    PDParams pd = c.pd;
    pd.seed = derive_seed(c.seed, li);
    ctx.seed_lines.push_back(label + " scan_seed=" + std::to_string(pd.seed) +
                             " (point i uses derive_seed(scan_seed, i), both inits share it)");
    try {
      const auto spec = cavity_spec(c.spec.user_degree, l, c.spec.modulation);
      const auto table = metastability_scan(spec, c.sigma0_grid, pd, c.threads);
      const std::string name = "branch_C" + std::to_string(c.spec.user_degree) + "_L" + std::to_string(l) + ".csv";
      write_branch_table(ctx.path(name), table);
      tables.push_back({{"C", c.spec.user_degree},
                        {"L", l},
                        {"alpha", spec.load()},
                        {"file", name},
                        {"any_multivalued", table.any_multivalued},
                        {"onset_Q", table.onset_q}});
      ctx.ok(label, table.any_multivalued ? "multivalued" : "unique");
    } catch (const std::exception& e) {
      ctx.fail(label, e);
    }
  }
  ctx.summary["tables"] = tables;
}

FieldEnsemble field_ensemble_for(const EnsembleSpec& spec) {
  if (spec.regularity != Regularity::FullyRegular) return FieldEnsemble::Dense;
  return spec.modulation == Modulation::Bpsk ? FieldEnsemble::SparseBpsk : FieldEnsemble::SparseUnmodulated;
}

void run_moment_check(Context& ctx) {
  const auto& c = ctx.config;
  Csv csv(ctx.path("moment_check.csv"), {"sigma0", "Q", "ensemble", "mean_pred", "mean_emp", "mean_se", "mean_z",
                                         "var_pred", "var_trunc", "var_emp", "var_se", "var_z"});
  Csv hist(ctx.path("field_histogram.csv"), {"sigma0", "bin_lo", "bin_hi", "count"});
  const auto ensemble = field_ensemble_for(c.spec);
  json points = json::array();
  for (std::size_t i = 0; i < c.sigma0_grid.size(); ++i) {
    const double s0 = c.sigma0_grid[i];
    const auto seed = derive_seed(c.seed, i);
    ctx.seed_lines.push_back(sigma_label(s0) + " point_seed=" + std::to_string(seed));
    try {
      const double q = psd_Q(s0);
      Rng rng(seed);
      const auto emp = empirical_field_moments(c.spec, q, c.trials, rng);
      const auto pred = predicted_field_moments(c.spec, q, ensemble);
      const double mean_z = std::fabs(emp.mean - pred.mean) / emp.mean_se;
      const double var_z = std::fabs(emp.variance - pred.variance) / emp.variance_se;
      csv.row(s0, q, to_string(ensemble), pred.mean, emp.mean, emp.mean_se, mean_z, pred.variance,
              pred.truncated_variance, emp.variance, emp.variance_se, var_z);
      const auto [lo_it, hi_it] = std::minmax_element(emp.values.begin(), emp.values.end());
      const int bins = 40;
      const double lo = *lo_it, width = std::max((*hi_it - lo) / bins, 1e-12);
      std::vector<int> counts(bins, 0);
      for (double v : emp.values) ++counts[std::min(bins - 1, static_cast<int>((v - lo) / width))];
      for (int b = 0; b < bins; ++b) hist.row(s0, lo + b * width, lo + (b + 1) * width, counts[b]);
      points.push_back({{"sigma0", s0},
                        {"Q", q},
                        {"predicted", {{"mean", pred.mean}, {"variance", pred.variance},
                                       {"truncated_variance", pred.truncated_variance}}},
                        {"empirical", {{"mean", emp.mean}, {"mean_se", emp.mean_se}, {"variance", emp.variance},
                                       {"variance_se", emp.variance_se}, {"samples", emp.samples}}}});
      ctx.ok(sigma_label(s0));
    } catch (const std::exception& e) {
      ctx.fail(sigma_label(s0), e);
    }
  }
  ctx.summary["ensemble"] = std::string(to_string(ensemble));
  ctx.summary["points"] = points;
}

void run_naesat_census(Context& ctx) {
  const auto& c = ctx.config;
  Csv census(ctx.path("naesat_census.csv"), {"instance", "min_all_equal", "ground_states", "min_clique_energy",
                                             "min_energy_count", "flip_closed"});
  Csv fields(ctx.path("naesat_fields.csv"), {"sigma0", "Q", "instance", "sent_is_ground_state", "top_overlap"});
  std::vector<SparseCode> codes;
  std::vector<NaesatResult> results;
  std::vector<int> ok_instances;
  for (int t = 0; t < c.trials; ++t) {
    const auto seed = derive_seed(c.seed, static_cast<std::uint64_t>(t));
    const std::string label = "instance=" + std::to_string(t);
    ctx.seed_lines.push_back(label + " code_seed=" + std::to_string(seed));
    try {
      Rng rng(seed);
      auto code = sample_code(c.spec, rng);
      auto res = naesat_ground_states(code);
      bool closed = res.ground_states.size() == res.ground_state_count;
      if (closed) {
        const std::uint64_t all = (c.spec.users == 64) ? ~0ULL : ((std::uint64_t{1} << c.spec.users) - 1);
        for (auto m : res.ground_states)
          closed = closed && std::binary_search(res.ground_states.begin(), res.ground_states.end(), m ^ all);
      }
      census.row(t, res.min_all_equal, res.ground_state_count, res.min_clique_energy, res.min_energy_count,
                 res.ground_states.size() == res.ground_state_count ? (closed ? "1" : "0") : "");
      codes.push_back(std::move(code));
      results.push_back(std::move(res));
      ok_instances.push_back(t);
      ctx.ok(label);
    } catch (const std::exception& e) {
      ctx.fail(label, e);
    }
  }
  for (std::size_t i = 0; i < c.sigma0_grid.size(); ++i) {
    const double s0 = c.sigma0_grid[i];
    const auto point_seed = derive_seed(c.seed ^ 0xf1e1d5ULL, i);
    ctx.seed_lines.push_back(sigma_label(s0) + " field_seed=" + std::to_string(point_seed) +
                             " (instance t uses derive_seed(field_seed, t))");
    for (std::size_t n = 0; n < codes.size(); ++n) {
      const int t = ok_instances[n];
      Rng rng(derive_seed(point_seed, static_cast<std::uint64_t>(t)));
      const auto bits = sample_bits(c.spec.users, rng);
      const auto rec = transmit(codes[n], bits, s0, rng);
      const auto cf = coupling_field_decomposition(codes[n], rec, rec.Q());
      std::uint64_t sent = 0;
      for (int k = 0; k < c.spec.users; ++k)
        if (bits[k] > 0) sent |= std::uint64_t{1} << k;
      const auto& gs = results[n].ground_states;
      const bool is_gs = std::binary_search(gs.begin(), gs.end(), sent);
      const auto ranked = rank_by_field(gs, cf.fields);
      double overlap = std::numeric_limits<double>::quiet_NaN();
      if (!ranked.empty()) {
        const auto tau = spins_from_mask(ranked.front().first, c.spec.users);
        overlap = overlap_ber(tau, bits).overlap;
      }
      fields.row(s0, rec.Q(), t, is_gs ? 1 : 0, overlap);
    }
  }
}

void run_equivalence(Context& ctx) {
  const auto& c = ctx.config;
  Csv csv(ctx.path("equivalence.csv"),
          {"sigma0", "Q", "init", "ber_bpsk", "ber_bpsk_se", "ber_unmod", "ber_unmod_se", "ber_z", "fe_bpsk",
           "fe_bpsk_se", "fe_unmod", "fe_unmod_se", "fe_z", "symmetry_l1", "symmetry_floor", "agree"});
  const auto bpsk = cavity_spec(c.spec.user_degree, c.spec.chip_degree, Modulation::Bpsk);
  const auto unmod = cavity_spec(c.spec.user_degree, c.spec.chip_degree, Modulation::Unmodulated);
  json points = json::array();
  for (std::size_t i = 0; i < c.sigma0_grid.size(); ++i) {
    const double s0 = c.sigma0_grid[i];
    const double q = psd_Q(s0);
    const auto point_seed = derive_seed(c.seed, i);
    for (auto init : {InitMode::Random, InitMode::Informed}) {
      const auto seed = derive_seed(point_seed, init == InitMode::Random ? 0 : 1);
      const std::string label = sigma_label(s0) + " init=" + std::string(to_string(init));
      ctx.seed_lines.push_back(label + " replica_seed=" + std::to_string(seed) +
                               " (replica r uses derive_seed(replica_seed, r), both ensembles)");
      try {
        const auto a = run_replicas(bpsk, q, c.pd, init, c.replicas, seed, c.threads);
        const auto b = run_replicas(unmod, q, c.pd, init, c.replicas, seed, c.threads);
        const double ber_z = z_score(a.ber, b.ber);
        const double fe_z = z_score(a.free_energy, b.free_energy);
        const auto& field = b.runs.front().populations.field;
        Rng boot(derive_seed(seed ^ kSymmetrySalt, 0));
        const double sym = symmetry_check(field);
        const double floor = symmetry_noise_floor(field, 200, 0.95, boot);
        const bool agree = ber_z <= 2.0 && fe_z <= 2.0;
        csv.row(s0, q, to_string(init), a.ber.value, a.ber.se, b.ber.value, b.ber.se, ber_z, a.free_energy.value,
                a.free_energy.se, b.free_energy.value, b.free_energy.se, fe_z, sym, floor, agree ? 1 : 0);
        points.push_back({{"sigma0", s0}, {"Q", q}, {"init", std::string(to_string(init))},
                          {"ber_z", ber_z}, {"fe_z", fe_z}, {"agree", agree},
                          {"all_converged", a.all_converged && b.all_converged}});
        ctx.ok(label, agree ? "agree" : "disagree");
      } catch (const std::exception& e) {
        ctx.fail(label, e);
      }
    }
  }
  ctx.summary["points"] = points;
}

void write_manifest(Context& ctx, double wall) {
  const auto& c = ctx.config;
  const auto path = ctx.result.output_dir / "manifest.txt";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "cdmalab manifest\n";
  out << "version: " << library_version() << '\n';
  out << "experiment: " << to_string(c.experiment) << '\n';
  out << "config: " << to_json(c).dump() << '\n';
  out << "master_seed: " << c.seed << '\n';
  out << "seed_rule: derive_seed(s, i) = splitmix64(s + (i + 1) * 0x9E3779B97F4A7C15)\n";
  out << "seeds:\n";
  for (const auto& s : ctx.seed_lines) out << "  " << s << '\n';
  out << std::fixed << std::setprecision(3) << "wall_time_s: " << wall << '\n';
  out << "status: " << (ctx.result.all_ok() ? "ok" : "partial_failure") << '\n';
  out << "files:\n";
  for (const auto& f : ctx.result.files) out << "  " << f.string() << '\n';
  out << "points:\n";
  for (const auto& p : ctx.result.points) {
    out << "  " << p.point << ": " << (p.ok ? "ok" : "error");
    if (!p.message.empty()) out << " (" << p.message << ")";
    out << '\n';
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.output_dir = config.output_dir.empty() ? fs::path(".") : fs::path(config.output_dir);
  fs::create_directories(result.output_dir);
  Context ctx{config, result, {}, json::object()};

  switch (config.experiment) {
    case ExperimentKind::DetectSweep: run_detect_sweep(ctx); break;
    case ExperimentKind::PopdynScan: run_popdyn_scan(ctx); break;
    case ExperimentKind::MomentCheck: run_moment_check(ctx); break;
    case ExperimentKind::NaesatCensus: run_naesat_census(ctx); break;
    case ExperimentKind::EquivalenceCheck: run_equivalence(ctx); break;
  }

  json status = json::array();
  for (const auto& p : result.points) status.push_back({{"point", p.point}, {"ok", p.ok}, {"message", p.message}});
  ctx.summary["experiment"] = std::string(to_string(config.experiment));
  ctx.summary["status"] = status;
  {
    std::ofstream out(ctx.path("results.json"));
    out << std::setw(2) << ctx.summary << '\n';
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(ctx, result.wall_seconds);
  result.files.emplace_back("manifest.txt");
  return result;
}

}  // namespace cdma
