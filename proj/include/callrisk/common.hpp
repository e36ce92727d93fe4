#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace callrisk {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// SplitMix64 finalizer. Fully specified, so derived seeds are identical on
// every platform.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seed for substream `stream` of `master`. Independent streams allow bootstrap
// iterations or per-call generation to run in any order (or in parallel) and
// still reproduce the sequential result bit for bit.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ (stream * 0xd6e8feb86659fd93ULL + 0x2545f4914f6cdd1dULL));
}

}  // namespace callrisk
