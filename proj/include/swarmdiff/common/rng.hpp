#pragma once

#include <cstdint>
#include <random>

namespace swarmdiff {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to expand one root seed into independent streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based seed splitting: every consumer of randomness names a stream
/// id and an index (record, trajectory, robot, ...) and gets a seed that only
/// depends on (root, stream, index). Parallel workers therefore never share
/// generator state.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream,
                                    std::uint64_t index = 0) {
  return splitmix64(splitmix64(root ^ splitmix64(stream)) + index);
}

inline Rng make_rng(std::uint64_t root, std::uint64_t stream, std::uint64_t index = 0) {
  return Rng(derive_seed(root, stream, index));
}

namespace streams {
inline constexpr std::uint64_t kScenario = 0x01;
inline constexpr std::uint64_t kRobots = 0x02;
inline constexpr std::uint64_t kEm = 0x03;
inline constexpr std::uint64_t kGmmSample = 0x04;
inline constexpr std::uint64_t kPrm = 0x05;
inline constexpr std::uint64_t kDataset = 0x06;
inline constexpr std::uint64_t kTrain = 0x07;
inline constexpr std::uint64_t kInit = 0x08;
inline constexpr std::uint64_t kSampling = 0x09;
inline constexpr std::uint64_t kDensity = 0x0a;
inline constexpr std::uint64_t kSimulate = 0x0b;
inline constexpr std::uint64_t kGoal = 0x0c;
inline constexpr std::uint64_t kBench = 0x0d;
}  // namespace streams

}  // namespace swarmdiff
