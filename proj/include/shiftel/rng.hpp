#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace shiftel {

//! SplitMix64 mixing step. Used to expand seeds and derive stream keys.
constexpr std::uint64_t splitmix64(std::uint64_t& state)
{
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

//! Combine a master seed with a stream index into an independent seed.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index)
{
  std::uint64_t s = master ^ (0xD1B54A32D192ED03ULL * (index + 1));
  splitmix64(s);
  return splitmix64(s);
}

//! xoshiro256++ engine; satisfies UniformRandomBitGenerator so it plugs into
//! the <random> distributions.
class Rng
{
public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0x5EED) { reseed(seed); }

  void reseed(std::uint64_t seed)
  {
    std::uint64_t sm = seed;
    for (auto& w : s_)
      w = splitmix64(sm);
  }

  //! Independent child stream keyed by (this stream's seed material, index).
  Rng split(std::uint64_t index) const
  {
    return Rng(derive_seed(s_[0] ^ s_[3], index));
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max()
  {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()()
  {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  //! Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k)
  {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> s_{};
};

} // namespace shiftel
