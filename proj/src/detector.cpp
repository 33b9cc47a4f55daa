#include "cdma/detector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "cdma/errors.hpp"
#include "cdma/numeric.hpp"

namespace cdma {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_record(const SparseCode& code, const TransmissionRecord& rec) {
  if (static_cast<int>(rec.received.size()) != code.chips())
    throw DomainError("detector: received length differs from N");
}

// Running log-sum-exp accumulator.
struct LogAccumulator {
  double max = kNegInf;
  double sum = 0.0;

  void add(double x) {
    if (x <= max) {
      sum += std::exp(x - max);
    } else {
      sum = sum * std::exp(max - x) + 1.0;
      max = x;
    }
  }
  double value() const { return sum > 0.0 ? max + std::log(sum) : kNegInf; }
};

struct Enumeration {
  double log_partition;
  std::vector<double> log_plus;
  std::vector<double> log_minus;
};

// Gray-code walk over all 2^K spin configurations keeping the chip residuals
// y - s.tau up to date.
Enumeration enumerate(const SparseCode& code, const TransmissionRecord& rec, double q) {
  check_record(code, rec);
  const int users = code.users();
  if (users > kMaxExactUsers)
    throw CapacityError("exact enumeration limited to K <= " + std::to_string(kMaxExactUsers));

  std::vector<int> tau(users, -1);
  std::vector<double> residual(rec.received);
  for (const auto& e : code.entries()) residual[e.chip] += e.value;

  LogAccumulator total;
  std::vector<LogAccumulator> plus(users), minus(users);
  const std::uint64_t count = std::uint64_t{1} << users;
  for (std::uint64_t i = 0; i < count; ++i) {
    if (i > 0) {
      const int k = std::countr_zero(i);
      tau[k] = -tau[k];
      for (const auto& link : code.user_links(k)) residual[link.chip] -= 2.0 * link.value * tau[k];
    }
    double energy = 0.0;
    for (double r : residual) energy += r * r;
    const double logw = -q * energy;
    total.add(logw);
    for (int k = 0; k < users; ++k) (tau[k] > 0 ? plus[k] : minus[k]).add(logw);
  }

  Enumeration out{total.value(), std::vector<double>(users), std::vector<double>(users)};
  for (int k = 0; k < users; ++k) {
    out.log_plus[k] = plus[k].value();
    out.log_minus[k] = minus[k].value();
  }
  return out;
}

// Chip-to-user update: for each user k on the chip,
//   u_k = 1/2 sum_{tau_k} tau_k log sum_{tau_rest} exp{-Q (y - s.tau)^2 + sum_{j != k} h_j tau_j}.
// Enumerates the 2^L local configurations once; the h_k tau_k term is
// removed per target rather than subtracted afterwards.
void chip_update(std::span<const ChipLink> links, std::span<const double> field, double y, double q,
                 std::span<double> out, std::vector<double>& scratch) {
  const int d = static_cast<int>(links.size());
  const std::size_t configs = std::size_t{1} << d;
  scratch.resize(configs);
  for (std::size_t c = 0; c < configs; ++c) {
    double r = y, hsum = 0.0;
    for (int j = 0; j < d; ++j) {
      const double t = (c >> j & 1) ? 1.0 : -1.0;
      r -= links[j].value * t;
      hsum += field[links[j].edge] * t;
    }
    scratch[c] = -q * r * r + hsum;
  }
  for (int k = 0; k < d; ++k) {
    const double hk = field[links[k].edge];
    LogAccumulator acc_plus, acc_minus;
    for (std::size_t c = 0; c < configs; ++c) {
      if (c >> k & 1)
        acc_plus.add(scratch[c] - hk);
      else
        acc_minus.add(scratch[c] + hk);
    }
    out[k] = 0.5 * (acc_plus.value() - acc_minus.value());
  }
}

}  // namespace

std::string_view to_string(DetectMethod m) {
  return m == DetectMethod::Exact ? "exact" : "bp";
}

void BPParams::validate() const {
  if (max_iterations < 1) throw ConfigError("bp: max_iterations must be >= 1");
  if (!(tolerance > 0.0)) throw ConfigError("bp: tolerance must be positive");
  if (!(damping >= 0.0 && damping < 1.0)) throw ConfigError("bp: damping must lie in [0, 1)");
}

PosteriorMarginals exact_marginals(const SparseCode& code, const TransmissionRecord& rec, double q) {
  const auto en = enumerate(code, rec, q);
  PosteriorMarginals m;
  m.method = DetectMethod::Exact;
  m.prob_plus.resize(code.users());
  m.llr.resize(code.users());
  for (int k = 0; k < code.users(); ++k) {
    const double log_odds = en.log_plus[k] - en.log_minus[k];
    m.llr[k] = 0.5 * log_odds;
    m.prob_plus[k] = num::logistic(log_odds);
  }
  return m;
}

double exact_log_partition(const SparseCode& code, const TransmissionRecord& rec, double q) {
  return enumerate(code, rec, q).log_partition;
}

PosteriorMarginals bp_detect(const SparseCode& code, const TransmissionRecord& rec, double q,
                             const BPParams& params, BPMessages* messages) {
  params.validate();
  check_record(code, rec);
  for (int mu = 0; mu < code.chips(); ++mu)
    if (code.chip_links(mu).size() > kMaxChipDegree)
      throw CapacityError("bp: chip degree above " + std::to_string(kMaxChipDegree));

  const std::size_t edges = code.edge_count();
  std::vector<double> bias(edges, 0.0), field(edges, 0.0), fresh(edges, 0.0);
  if (params.init == BPInit::Informed) {
    if (static_cast<int>(rec.bits.size()) != code.users())
      throw DomainError("bp: informed init needs the sent bits");
    for (std::size_t e = 0; e < edges; ++e)
      bias[e] = params.informed_magnitude * rec.bits[code.entries()[e].user];
  }

  std::vector<double> total(code.users(), 0.0);
  auto accumulate = [&] {
    std::fill(total.begin(), total.end(), 0.0);
    for (int k = 0; k < code.users(); ++k)
      for (const auto& link : code.user_links(k)) total[k] += bias[link.edge];
  };

  PosteriorMarginals result;
  result.method = DetectMethod::BeliefPropagation;
  result.converged = false;
  std::vector<double> scratch;
  for (int it = 1; it <= params.max_iterations; ++it) {
    accumulate();
    for (int k = 0; k < code.users(); ++k)
      for (const auto& link : code.user_links(k)) field[link.edge] = total[k] - bias[link.edge];

    for (int mu = 0; mu < code.chips(); ++mu) {
      const auto links = code.chip_links(mu);
      if (links.empty()) continue;
      chip_update(links, field, rec.received[mu], q,
                  std::span<double>(fresh).subspan(links.front().edge, links.size()), scratch);
    }

    double residual = 0.0;
    for (std::size_t e = 0; e < edges; ++e) {
      const double next = params.damping * bias[e] + (1.0 - params.damping) * fresh[e];
      residual = std::max(residual, std::fabs(next - bias[e]));
      bias[e] = next;
    }
    result.iterations = it;
    result.residual = residual;
    if (residual < params.tolerance) {
      result.converged = true;
      break;
    }
  }

  accumulate();
  for (int k = 0; k < code.users(); ++k)
    for (const auto& link : code.user_links(k)) field[link.edge] = total[k] - bias[link.edge];
  result.llr = total;
  result.prob_plus.resize(code.users());
  for (int k = 0; k < code.users(); ++k) result.prob_plus[k] = num::logistic(2.0 * total[k]);
  if (messages) *messages = BPMessages{std::move(bias), std::move(field)};
  return result;
}

double bethe_free_energy(const SparseCode& code, const TransmissionRecord& rec, double q,
                         const BPMessages& msg) {
  check_record(code, rec);
  if (msg.bias.size() != code.edge_count() || msg.field.size() != code.edge_count())
    throw DomainError("bethe_free_energy: message arrays do not match the edge count");

  double log_z = 0.0;
  std::vector<double> scratch;
  for (int mu = 0; mu < code.chips(); ++mu) {
    const auto links = code.chip_links(mu);
    const int d = static_cast<int>(links.size());
    if (d > kMaxChipDegree) throw CapacityError("bethe_free_energy: chip degree too large");
    const std::size_t configs = std::size_t{1} << d;
    scratch.resize(configs);
    double norm = 0.0;
    for (const auto& l : links) norm += num::log_2cosh(msg.field[l.edge]);
    for (std::size_t c = 0; c < configs; ++c) {
      double r = rec.received[mu], hsum = 0.0;
      for (int j = 0; j < d; ++j) {
        const double t = (c >> j & 1) ? 1.0 : -1.0;
        r -= links[j].value * t;
        hsum += msg.field[links[j].edge] * t;
      }
      scratch[c] = -q * r * r + hsum;
    }
    log_z += num::log_sum_exp(scratch) - norm;
  }
  for (int k = 0; k < code.users(); ++k) {
    double sum = 0.0, norm = 0.0;
    for (const auto& l : code.user_links(k)) {
      sum += msg.bias[l.edge];
      norm += num::log_2cosh(msg.bias[l.edge]);
    }
    log_z += num::log_2cosh(sum) - norm;
  }
  // Edge term log[(1 + tanh h tanh u) / 2] = log 2cosh(h + u) - log 2cosh h - log 2cosh u.
  for (std::size_t e = 0; e < code.edge_count(); ++e) {
    const double h = msg.field[e], u = msg.bias[e];
    log_z -= num::log_2cosh(h + u) - num::log_2cosh(h) - num::log_2cosh(u);
  }
  return -log_z / code.chips();
}

HardDecisions hard_decisions(const PosteriorMarginals& m) {
  HardDecisions out;
  out.bits.resize(m.prob_plus.size());
  out.ties.resize(m.prob_plus.size());
  for (std::size_t k = 0; k < m.prob_plus.size(); ++k) {
    const double p = m.prob_plus[k];
    out.ties[k] = (p == 0.5);
    out.bits[k] = p < 0.5 ? -1 : 1;
  }
  return out;
}

OverlapBer overlap_ber(std::span<const int> decoded, std::span<const int> sent, const std::vector<bool>& ties) {
  if (decoded.size() != sent.size() || (!ties.empty() && ties.size() != sent.size()))
    throw DomainError("overlap_ber: length mismatch");
  if (sent.empty()) throw DomainError("overlap_ber: empty input");
  double sum = 0.0;
  for (std::size_t k = 0; k < sent.size(); ++k) {
    if (!ties.empty() && ties[k]) continue;
    sum += decoded[k] * sent[k];
  }
  const double m = sum / static_cast<double>(sent.size());
  return {m, 0.5 * (1.0 - m)};
}

}  // namespace cdma
