#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string_view>

namespace stigma {

//---------------------------------------------------------------------------//
/*!
 * SplitMix64 generator.
 *
 * Used everywhere randomness is needed so results are bit-identical across
 * standard library implementations. The distributions below are written out
 * for the same reason (std:: distributions are implementation-defined).
 */
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Stateless SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// 64-bit FNV-1a; stable across platforms, used to fold strings into keys.
constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Seed for a named pipeline stage derived from the master seed.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::string_view label) {
  return mix64(master ^ mix64(fnv1a64(label)));
}

// Counter-based key: the stream for (master, key, counter) does not depend
// on the order in which keys or counters are visited.
constexpr std::uint64_t counter_seed(std::uint64_t master, std::uint64_t key,
                                     std::uint64_t counter) {
  return mix64(mix64(master ^ mix64(key)) ^ mix64(counter + 0x632be59bd9b4e019ull));
}

// Uniform integer in [0, n) by rejection; n > 0.
template <class Rng>
std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

// Uniform double in [0, 1) with 53 random bits.
template <class Rng>
double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal variate (Box-Muller, one value per call).
template <class Rng>
double standard_normal(Rng& rng) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  double u1;
  do {
    u1 = uniform01(rng);
  } while (u1 <= 0.0);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

template <class Rng>
bool bernoulli(Rng& rng, double p) {
  return uniform01(rng) < p;
}

// In-place Fisher-Yates shuffle.
template <class Rng, class Container>
void shuffle(Rng& rng, Container& items) {
  using std::swap;
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    swap(items[i - 1], items[j]);
  }
}

}  // namespace stigma
