#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdma/seeds.hpp"

namespace cdma {

enum class Modulation { Bpsk, Unmodulated };
enum class Regularity { PureRandom, UserRegular, FullyRegular };

std::string_view to_string(Modulation m);
std::string_view to_string(Regularity r);
Modulation parse_modulation(std::string_view s);
Regularity parse_regularity(std::string_view s);

/// Sampling law for signature codes: K users spread over N chips, each user
/// touching C chips and each chip carrying L users on average (exactly, for
/// the regular ensembles).
struct EnsembleSpec {
  int users = 1;        // K
  int chips = 1;        // N
  int user_degree = 1;  // C
  int chip_degree = 1;  // L
  Modulation modulation = Modulation::Bpsk;
  Regularity regularity = Regularity::FullyRegular;

  /// L / C; equals K / N for fully regular specs.
  double load() const { return static_cast<double>(chip_degree) / user_degree; }

  /// Throws ConfigError when the spec cannot be sampled.
  void validate() const;

  bool operator==(const EnsembleSpec&) const = default;
};

/// Convenience for the fully regular ensemble: N is derived from K*C = N*L.
EnsembleSpec regular_spec(int users, int user_degree, int chip_degree, Modulation m);

/// Transmission amplitude 1/sqrt(L).
double amplitude(const EnsembleSpec& spec);

struct CodeEntry {
  int user;
  int chip;
  double value;
};

struct ChipLink {
  int user;
  double value;
  int edge;
};

struct UserLink {
  int chip;
  double value;
  int edge;
};

/// K x N sparse signature matrix together with its Tanner graph. Edges are
/// numbered chip-major: all links of chip 0 first (ascending user), then chip
/// 1, and so on. Immutable once built.
class SparseCode {
 public:
  /// Entries may carry any value (validate_code reports malformed ones);
  /// duplicates and out-of-range indices throw.
  SparseCode(EnsembleSpec spec, std::vector<CodeEntry> entries);

  const EnsembleSpec& spec() const { return spec_; }
  int users() const { return spec_.users; }
  int chips() const { return spec_.chips; }
  double amplitude() const { return amplitude_; }
  std::size_t edge_count() const { return entries_.size(); }

  /// Entries sorted chip-major; index == edge id.
  std::span<const CodeEntry> entries() const { return entries_; }
  std::span<const ChipLink> chip_links(int chip) const;
  std::span<const UserLink> user_links(int user) const;

  /// s_{mu k}, zero when absent. O(degree).
  double value(int chip, int user) const;

  /// Copy with one entry replaced or removed (value 0 removes).
  SparseCode with_entry(int chip, int user, double value) const;

  bool operator==(const SparseCode& other) const;

 private:
  EnsembleSpec spec_;
  double amplitude_;
  std::vector<CodeEntry> entries_;
  std::vector<ChipLink> chip_links_;
  std::vector<int> chip_offsets_;
  std::vector<UserLink> user_links_;
  std::vector<int> user_offsets_;
};

struct SamplingOptions {
  // Full re-pairings attempted by the configuration model before giving up.
  int max_pairing_attempts = 1'000'000;
};

SparseCode sample_code(const EnsembleSpec& spec, Rng& rng, const SamplingOptions& opts = {});

struct ValidationCheck {
  std::string name;
  bool passed;
  int violations;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  bool all_passed() const;
  const ValidationCheck* find(std::string_view name) const;
};

/// Report-only check of degrees, amplitudes and modulation against a spec.
ValidationReport validate_code(const SparseCode& code, const EnsembleSpec& spec);

/// Text format: header "K N C L modulation regularity A", then one
/// "k mu sign" line per non-zero entry.
void write_code(std::ostream& os, const SparseCode& code);
SparseCode read_code(std::istream& is);
void save_code(const std::string& path, const SparseCode& code);
SparseCode load_code(const std::string& path);

}  // namespace cdma
