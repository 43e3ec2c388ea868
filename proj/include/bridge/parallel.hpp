#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace bridge {

// SplitMix64 finalizer over (master, stream, index). Every replicate draws its
// randomness from derive_seed(master, stream, index), so results never depend
// on scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) noexcept {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master) ^ stream) ^ index);
}

namespace seed_stream {
inline constexpr std::uint64_t kBootstrap = 0xB007;
inline constexpr std::uint64_t kPermutation = 0x9E33;
inline constexpr std::uint64_t kReplicate = 0x5131;
inline constexpr std::uint64_t kPopulation = 0x909;
inline constexpr std::uint64_t kSampling = 0x5A3;
inline constexpr std::uint64_t kOracle = 0x07AC;
}  // namespace seed_stream

// Runs body(i) for i in [0, n) on up to `workers` threads using contiguous
// blocks. The first exception thrown (lowest index) is rethrown after all
// threads finish.
template <class Body>
void parallel_for(std::size_t n, unsigned workers, Body&& body) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const std::size_t threads = std::min<std::size_t>(workers, n);
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t begin = n * w / threads;
    const std::size_t end = n * (w + 1) / threads;
    pool.emplace_back([&, w, begin, end] {
      for (std::size_t i = begin; i < end; ++i) {
        try {
          body(i);
        } catch (...) {
          errors[w] = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (std::size_t w = 0; w < threads; ++w) {
    if (errors[w]) std::rethrow_exception(errors[w]);
  }
}

}  // namespace bridge
