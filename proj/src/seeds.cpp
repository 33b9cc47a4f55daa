#include "cdma/seeds.hpp"

#include "cdma/errors.hpp"

namespace cdma {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) {
  return mix64(master_seed + (index + 1) * kGolden);
}

std::vector<std::uint64_t> expand_seeds(std::uint64_t master_seed, std::size_t count) {
  if (count < 1) throw DomainError("expand_seeds: count must be >= 1");
  std::vector<std::uint64_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = derive_seed(master_seed, i);
  return out;
}

}  // namespace cdma
