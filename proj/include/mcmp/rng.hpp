#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

namespace mcmp {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Stateless:
// every output block is a pure function of (counter, key).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter ctr, Key key) {
    std::uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3];
    std::uint32_t k0 = key[0], k1 = key[1];
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c0;
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c2;
      const auto n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1 ^ k0;
      const auto n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3 ^ k1;
      c1 = static_cast<std::uint32_t>(p1);
      c3 = static_cast<std::uint32_t>(p0);
      c0 = n0;
      c2 = n2;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    return {c0, c1, c2, c3};
  }
};

namespace detail {

// 256-layer ziggurat for the standard normal (Marsaglia & Tsang layout).
struct ZigguratTables {
  static constexpr int kLayers = 256;
  static constexpr double kR = 3.6541528853610088;  // start of the tail
  static constexpr double kArea = 0.00492867323399;  // area of each layer
  double x[kLayers + 1];
  double f[kLayers + 1];
  std::uint32_t accept[kLayers];  // u < accept[i] / 2^23 implies a rectangle hit
  double scale[kLayers];          // x[i] / 2^23

  ZigguratTables() {
    x[0] = kArea / std::exp(-0.5 * kR * kR);
    x[1] = kR;
    for (int i = 1; i < kLayers - 1; ++i) {
      x[i + 1] = std::sqrt(-2.0 * std::log(kArea / x[i] + std::exp(-0.5 * x[i] * x[i])));
    }
    x[kLayers] = 0.0;
    for (int i = 0; i <= kLayers; ++i) f[i] = std::exp(-0.5 * x[i] * x[i]);
    for (int i = 0; i < kLayers; ++i) {
      accept[i] = static_cast<std::uint32_t>(std::ceil(x[i + 1] / x[i] * 0x1.0p23));
      scale[i] = x[i] * 0x1.0p-23;
    }
  }
};

inline const ZigguratTables kZiggurat{};

}  // namespace detail

// Random substream for one Monte Carlo particle. Keyed by the master seed and
// the particle index; the step index (and a block index within the step)
// form the rest of the counter, so any draw can be regenerated in isolation.
class ParticleStream {
 public:
  // Step index reserved for the mixture-component draw.
  static constexpr std::uint32_t kSelectorStep = 0xFFFFFFFFu;

  ParticleStream(std::uint64_t seed, std::uint64_t particle)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        particle_lo_(static_cast<std::uint32_t>(particle)),
        particle_hi_(static_cast<std::uint32_t>(particle >> 32)) {}

  // Two independent uniforms in (0, 1] with 53-bit resolution.
  std::array<double, 2> uniforms(std::uint32_t step, std::uint32_t block) const {
    const auto r = block_at(step, block);
    return {to_unit(word(r, 0)), to_unit(word(r, 1))};
  }

  // Fills `out` with standard normals by ziggurat sampling over the 32-bit
  // words of blocks 0, 1, 2, ... of this step. A rejected word advances the
  // sequence, so the result is still a pure function of (particle, step).
  void normals(std::uint32_t step, std::span<double> out) const {
    if (out.empty()) return;
    const auto& z = detail::kZiggurat;
    WordSequence words{*this, step, 1, 0, block_at(step, 0)};
    // Fast path: rectangle hits from the first block, no bookkeeping.
    std::size_t i = 0;
    for (; i < out.size() && words.used < 4; ++i) {
      const std::uint32_t w = words.current[static_cast<std::size_t>(words.used)];
      const auto layer = static_cast<std::size_t>(w & 0xFF);
      const std::uint32_t bits = w >> 9;
      if (bits >= z.accept[layer]) break;
      const double x = static_cast<double>(bits) * z.scale[layer];
      out[i] = ((w >> 8) & 1u) != 0 ? -x : x;
      ++words.used;
    }
    for (; i < out.size(); ++i) out[i] = ziggurat(words);
  }

 private:
  Philox4x32::Counter block_at(std::uint32_t step, std::uint32_t block) const {
    return Philox4x32::generate({particle_lo_, particle_hi_, step, block}, key_);
  }
  static std::uint64_t word(const Philox4x32::Counter& r, int i) {
    return (std::uint64_t{r[static_cast<std::size_t>(2 * i)]} << 32) | r[static_cast<std::size_t>(2 * i + 1)];
  }
  static double to_unit(std::uint64_t w) { return (static_cast<double>(w >> 11) + 1.0) * 0x1.0p-53; }

  struct WordSequence {
    const ParticleStream& stream;
    std::uint32_t step;
    std::uint32_t block = 0;
    int used = 4;
    Philox4x32::Counter current{};

    std::uint32_t next() {
      if (used == 4) {
        current = stream.block_at(step, block++);
        used = 0;
      }
      return current[static_cast<std::size_t>(used++)];
    }
    // Uniform in (0, 1] from two words.
    double unit() {
      const std::uint64_t hi = next();
      return to_unit((hi << 32) | next());
    }
  };

  static double ziggurat(WordSequence& words) {
    const auto& z = detail::kZiggurat;
    for (;;) {
      const std::uint32_t w = words.next();
      const int layer = static_cast<int>(w & 0xFF);
      const bool negative = ((w >> 8) & 1u) != 0;
      const std::uint32_t bits = w >> 9;
      const double x = static_cast<double>(bits) * z.scale[layer];
      if (bits < z.accept[layer]) return negative ? -x : x;
      if (layer == 0) {
        // Base layer overflow: exact sample from the tail beyond kR.
        double tx, ty;
        do {
          tx = -std::log(words.unit()) / detail::ZigguratTables::kR;
          ty = -std::log(words.unit());
        } while (2.0 * ty < tx * tx);
        return negative ? -(detail::ZigguratTables::kR + tx) : detail::ZigguratTables::kR + tx;
      }
      const double v = words.unit();
      if (z.f[layer + 1] + v * (z.f[layer] - z.f[layer + 1]) < std::exp(-0.5 * x * x)) return negative ? -x : x;
    }
  }

  Philox4x32::Key key_;
  std::uint32_t particle_lo_;
  std::uint32_t particle_hi_;
};

// Derives an independent seed for a numbered sub-task (splitmix64 finalizer).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace mcmp
