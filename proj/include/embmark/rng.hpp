#pragma once

#include <cstdint>

namespace embmark {

// Portable counter-based generator.
//
//   key        = seed XOR mix(stream)            (mix(0) == 0, so stream 0 keys on seed)
//   word(k)    = mix(key + (k + 1) * 0x9E3779B97F4A7C15)   (mod 2^64)
//   mix(z)     = SplitMix64 finalizer:
//                z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//                z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//                z ^ (z >> 31)
//   uniform(k) = ((word(k) >> 12) + 0.5) * 2^-52          in (0, 1)
//   normal(k)  = Phi^-1(uniform(k)), Acklam's rational approximation
//                followed by one Halley step against erfc
//
// Every draw consumes exactly one word, so any draw is addressable by index
// and other implementations can reproduce streams bit for bit.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t word_at(std::uint64_t index) const;
  double uniform_at(std::uint64_t index) const;
  double normal_at(std::uint64_t index) const;

  std::uint64_t next_word() { return word_at(counter_++); }
  double uniform() { return uniform_at(counter_++); }
  double normal() { return normal_at(counter_++); }
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Unbiased integer in [0, bound) by multiply-shift with rejection; may
  // consume more than one word.
  std::uint64_t below(std::uint64_t bound);

  std::uint64_t position() const { return counter_; }
  void seek(std::uint64_t index) { counter_ = index; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64_mix(std::uint64_t z);
double uniform_from_word(std::uint64_t word);
// Inverse standard normal CDF for p in (0, 1).
double normal_quantile(double p);

}  // namespace embmark
