#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace acan {

// Seedable random generator with a pinned algorithm so datasets and training
// runs reproduce across platforms and standard libraries. The engine is
// std::mt19937_64 (fully specified by the C++ standard); the distributions are
// implemented here instead of <random> because the standard leaves those
// unspecified. Identifier below is stored in dataset provenance.
//
//   uniform:  53-bit mantissa draw, (x >> 11) * 2^-53, in [0, 1)
//   normal:   Box-Muller, cosine branch only (two uniforms per draw)
//   below(n): unbiased rejection sampling on the top range of uint64
class Rng {
public:
  static constexpr const char* kGeneratorId = "mt19937_64/u53-boxmuller-v1";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Fisher-Yates; deterministic given engine state.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // Engine state as whitespace-separated decimals (format fixed by the
  // standard); used by checkpoints.
  std::string state() const;
  void set_state(const std::string& s);

private:
  std::mt19937_64 engine_;
};

// Derives an independent seed for a named stream of a run (e.g. "pk", "adv"),
// so consumers of one stream do not perturb another. SplitMix64 finalizer over
// seed xor FNV-1a(name).
std::uint64_t derive_stream_seed(std::uint64_t seed, std::string_view stream_name);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace acan
