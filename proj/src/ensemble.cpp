#include "cdma/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "cdma/errors.hpp"

namespace cdma {

std::string_view to_string(Modulation m) {
  return m == Modulation::Bpsk ? "BPSK" : "Unmodulated";
}

std::string_view to_string(Regularity r) {
  switch (r) {
    case Regularity::PureRandom: return "PureRandom";
    case Regularity::UserRegular: return "UserRegular";
    case Regularity::FullyRegular: return "FullyRegular";
  }
  return "?";
}

Modulation parse_modulation(std::string_view s) {
  if (s == "BPSK" || s == "bpsk") return Modulation::Bpsk;
  if (s == "Unmodulated" || s == "unmod" || s == "unmodulated") return Modulation::Unmodulated;
  throw ConfigError("unknown modulation '" + std::string(s) + "'");
}

Regularity parse_regularity(std::string_view s) {
  if (s == "PureRandom") return Regularity::PureRandom;
  if (s == "UserRegular") return Regularity::UserRegular;
  if (s == "FullyRegular") return Regularity::FullyRegular;
  throw ConfigError("unknown regularity '" + std::string(s) + "'");
}

void EnsembleSpec::validate() const {
  if (users < 1 || chips < 1) throw ConfigError("ensemble: K and N must be positive");
  if (user_degree < 1 || chip_degree < 1) throw ConfigError("ensemble: C and L must be >= 1");
  if (chip_degree > users) throw ConfigError("ensemble: L must not exceed K");
  if (user_degree > chips) throw ConfigError("ensemble: C must not exceed N");
  if (regularity == Regularity::FullyRegular &&
      static_cast<long long>(users) * user_degree != static_cast<long long>(chips) * chip_degree) {
    std::ostringstream msg;
    msg << "ensemble: fully regular spec needs K*C == N*L (got " << users << "*" << user_degree
        << " vs " << chips << "*" << chip_degree << ")";
    throw ConfigError(msg.str());
  }
}

EnsembleSpec regular_spec(int users, int user_degree, int chip_degree, Modulation m) {
  const long long edges = static_cast<long long>(users) * user_degree;
  if (chip_degree < 1 || edges % chip_degree != 0)
    throw ConfigError("regular_spec: K*C must be divisible by L");
  EnsembleSpec spec{users, static_cast<int>(edges / chip_degree), user_degree, chip_degree, m,
                    Regularity::FullyRegular};
  spec.validate();
  return spec;
}

double amplitude(const EnsembleSpec& spec) {
  if (spec.chip_degree < 1) throw DomainError("amplitude: L must be >= 1");
  return 1.0 / std::sqrt(static_cast<double>(spec.chip_degree));
}

// ---------------------------------------------------------------------------

SparseCode::SparseCode(EnsembleSpec spec, std::vector<CodeEntry> entries)
    : spec_(spec), amplitude_(cdma::amplitude(spec)), entries_(std::move(entries)) {
  for (const auto& e : entries_) {
    if (e.user < 0 || e.user >= spec_.users || e.chip < 0 || e.chip >= spec_.chips)
      throw DomainError("SparseCode: entry index out of range");
  }
  std::sort(entries_.begin(), entries_.end(), [](const CodeEntry& a, const CodeEntry& b) {
    return a.chip != b.chip ? a.chip < b.chip : a.user < b.user;
  });
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].chip == entries_[i - 1].chip && entries_[i].user == entries_[i - 1].user)
      throw DomainError("SparseCode: duplicate entry");
  }

  chip_offsets_.assign(spec_.chips + 1, 0);
  user_offsets_.assign(spec_.users + 1, 0);
  for (const auto& e : entries_) {
    ++chip_offsets_[e.chip + 1];
    ++user_offsets_[e.user + 1];
  }
  for (int i = 0; i < spec_.chips; ++i) chip_offsets_[i + 1] += chip_offsets_[i];
  for (int i = 0; i < spec_.users; ++i) user_offsets_[i + 1] += user_offsets_[i];

  chip_links_.resize(entries_.size());
  user_links_.resize(entries_.size());
  std::vector<int> user_fill(user_offsets_.begin(), user_offsets_.end() - 1);
  for (std::size_t edge = 0; edge < entries_.size(); ++edge) {
    const auto& e = entries_[edge];
    chip_links_[edge] = ChipLink{e.user, e.value, static_cast<int>(edge)};
    user_links_[user_fill[e.user]++] = UserLink{e.chip, e.value, static_cast<int>(edge)};
  }
}

std::span<const ChipLink> SparseCode::chip_links(int chip) const {
  return std::span<const ChipLink>(chip_links_).subspan(
      chip_offsets_[chip], chip_offsets_[chip + 1] - chip_offsets_[chip]);
}

std::span<const UserLink> SparseCode::user_links(int user) const {
  return std::span<const UserLink>(user_links_).subspan(
      user_offsets_[user], user_offsets_[user + 1] - user_offsets_[user]);
}

double SparseCode::value(int chip, int user) const {
  for (const auto& l : chip_links(chip))
    if (l.user == user) return l.value;
  return 0.0;
}

SparseCode SparseCode::with_entry(int chip, int user, double value) const {
  std::vector<CodeEntry> out;
  out.reserve(entries_.size() + 1);
  bool replaced = false;
  for (const auto& e : entries_) {
    if (e.chip == chip && e.user == user) {
      replaced = true;
      if (value != 0.0) out.push_back({user, chip, value});
    } else {
      out.push_back(e);
    }
  }
  if (!replaced && value != 0.0) out.push_back({user, chip, value});
  return SparseCode(spec_, std::move(out));
}

bool SparseCode::operator==(const SparseCode& other) const {
  if (!(spec_ == other.spec_) || entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto &a = entries_[i], &b = other.entries_[i];
    if (a.user != b.user || a.chip != b.chip || a.value != b.value) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

namespace {

// Uniform (C, L)-biregular bipartite graph by configuration-model pairing.
// User stubs are matched in order against a chip-stub permutation generated
// incrementally (Fisher-Yates); the attempt is abandoned at the first parallel
// edge. Abandon-and-restart is plain rejection, so every simple graph is
// equally likely.
std::vector<CodeEntry> pair_regular(const EnsembleSpec& spec, Rng& rng, const SamplingOptions& opts) {
  const int degree = spec.user_degree;
  std::vector<int> stubs;
  stubs.reserve(static_cast<std::size_t>(spec.chips) * spec.chip_degree);
  for (int chip = 0; chip < spec.chips; ++chip)
    for (int j = 0; j < spec.chip_degree; ++j) stubs.push_back(chip);
  const std::size_t total = stubs.size();

  std::vector<CodeEntry> entries;
  entries.reserve(total);
  for (int attempt = 0; attempt < opts.max_pairing_attempts; ++attempt) {
    entries.clear();
    std::size_t pos = 0;
    bool ok = true;
    for (int user = 0; user < spec.users && ok; ++user) {
      for (int c = 0; c < degree; ++c, ++pos) {
        std::uniform_int_distribution<std::size_t> pick(pos, total - 1);
        std::swap(stubs[pos], stubs[pick(rng)]);
        const int chip = stubs[pos];
        for (int prev = 0; prev < c; ++prev) {
          if (entries[entries.size() - 1 - prev].chip == chip) {
            ok = false;
            break;
          }
        }
        if (!ok) break;
        entries.push_back({user, chip, 0.0});
      }
    }
    if (ok) return entries;
  }
  throw SamplingError("sample_code: no simple biregular pairing within " +
                      std::to_string(opts.max_pairing_attempts) + " attempts");
}

std::vector<CodeEntry> pair_user_regular(const EnsembleSpec& spec, Rng& rng) {
  std::vector<CodeEntry> entries;
  entries.reserve(static_cast<std::size_t>(spec.users) * spec.user_degree);
  std::uniform_int_distribution<int> pick(0, spec.chips - 1);
  std::vector<int> chosen;
  for (int user = 0; user < spec.users; ++user) {
    chosen.clear();
    while (static_cast<int>(chosen.size()) < spec.user_degree) {
      const int chip = pick(rng);
      if (std::find(chosen.begin(), chosen.end(), chip) == chosen.end()) chosen.push_back(chip);
    }
    for (int chip : chosen) entries.push_back({user, chip, 0.0});
  }
  return entries;
}

std::vector<CodeEntry> pair_bernoulli(const EnsembleSpec& spec, Rng& rng) {
  std::vector<CodeEntry> entries;
  std::bernoulli_distribution present(static_cast<double>(spec.chip_degree) / spec.users);
  for (int user = 0; user < spec.users; ++user)
    for (int chip = 0; chip < spec.chips; ++chip)
      if (present(rng)) entries.push_back({user, chip, 0.0});
  return entries;
}

}  // namespace

SparseCode sample_code(const EnsembleSpec& spec, Rng& rng, const SamplingOptions& opts) {
  spec.validate();
  std::vector<CodeEntry> entries;
  switch (spec.regularity) {
    case Regularity::PureRandom: entries = pair_bernoulli(spec, rng); break;
    case Regularity::UserRegular: entries = pair_user_regular(spec, rng); break;
    case Regularity::FullyRegular: entries = pair_regular(spec, rng, opts); break;
  }
  const double a = amplitude(spec);
  std::bernoulli_distribution coin(0.5);
  for (auto& e : entries) {
    e.value = (spec.modulation == Modulation::Bpsk && coin(rng)) ? -a : a;
  }
  return SparseCode(spec, std::move(entries));
}

// ---------------------------------------------------------------------------

bool ValidationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

const ValidationCheck* ValidationReport::find(std::string_view name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

ValidationReport validate_code(const SparseCode& code, const EnsembleSpec& spec) {
  ValidationReport report;
  auto add = [&](std::string name, int violations, std::string detail) {
    report.checks.push_back({std::move(name), violations == 0, violations, std::move(detail)});
  };

  const bool dims_ok = code.users() == spec.users && code.chips() == spec.chips;
  add("dimensions", dims_ok ? 0 : 1, dims_ok ? "" : "K or N differs from spec");
  if (!dims_ok) return report;

  const double a = amplitude(spec);
  int bad_amp = 0, bad_mod = 0;
  for (const auto& e : code.entries()) {
    if (std::fabs(e.value) != a) ++bad_amp;
    if (spec.modulation == Modulation::Unmodulated && e.value < 0) ++bad_mod;
  }
  add("amplitude", bad_amp, std::to_string(bad_amp) + " entries with |s| != A");
  add("modulation", bad_mod, std::to_string(bad_mod) + " negative entries in an unmodulated code");

  if (spec.regularity != Regularity::PureRandom) {
    int bad = 0;
    for (int k = 0; k < spec.users; ++k)
      if (static_cast<int>(code.user_links(k).size()) != spec.user_degree) ++bad;
    add("user_degree", bad, std::to_string(bad) + " users with degree != C");
  }
  if (spec.regularity == Regularity::FullyRegular) {
    int bad = 0;
    for (int mu = 0; mu < spec.chips; ++mu)
      if (static_cast<int>(code.chip_links(mu).size()) != spec.chip_degree) ++bad;
    add("chip_degree", bad, std::to_string(bad) + " chips with degree != L");
  }
  return report;
}

// ---------------------------------------------------------------------------

void write_code(std::ostream& os, const SparseCode& code) {
  const auto& spec = code.spec();
  os << spec.users << ' ' << spec.chips << ' ' << spec.user_degree << ' ' << spec.chip_degree << ' '
     << to_string(spec.modulation) << ' ' << to_string(spec.regularity) << ' '
     << std::setprecision(std::numeric_limits<double>::max_digits10) << code.amplitude() << '\n';
  for (const auto& e : code.entries()) {
    if (std::fabs(e.value) != code.amplitude())
      throw DomainError("write_code: entry magnitude differs from A; format stores signs only");
    os << e.user << ' ' << e.chip << ' ' << (e.value > 0 ? '+' : '-') << '\n';
  }
}

SparseCode read_code(std::istream& is) {
  EnsembleSpec spec;
  std::string mod, reg;
  double amp = 0;
  if (!(is >> spec.users >> spec.chips >> spec.user_degree >> spec.chip_degree >> mod >> reg >> amp))
    throw ConfigError("read_code: malformed header");
  spec.modulation = parse_modulation(mod);
  spec.regularity = parse_regularity(reg);
  const double a = amplitude(spec);
  if (std::fabs(amp - a) > 1e-12 * a) throw ConfigError("read_code: header A inconsistent with L");

  std::vector<CodeEntry> entries;
  int k, mu;
  std::string sign;
  while (is >> k >> mu >> sign) {
    if (sign != "+" && sign != "-") throw ConfigError("read_code: sign must be + or -");
    entries.push_back({k, mu, sign == "+" ? a : -a});
  }
  if (!is.eof()) throw ConfigError("read_code: malformed entry line");
  return SparseCode(spec, std::move(entries));
}

void save_code(const std::string& path, const SparseCode& code) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open " + path + " for writing");
  write_code(os, code);
}

SparseCode load_code(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path);
  return read_code(is);
}

}  // namespace cdma
