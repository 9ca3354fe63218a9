#pragma once

#include <cstdint>
#include <initializer_list>

namespace dapperfl {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent child seed for a labelled sub-stream (client, round, phase...).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(base);
  for (std::uint64_t p : path) s = mix64(s ^ mix64(p + 0x632BE59BD9B4E019ULL));
  return s;
}

/// Sub-stream labels used by the training pipeline.
enum class Phase : std::uint64_t { finetune = 1, local = 2, mask = 3, data = 4, partition = 5, init = 6 };

constexpr std::uint64_t phase_id(Phase p) { return static_cast<std::uint64_t>(p); }

}  // namespace dapperfl
