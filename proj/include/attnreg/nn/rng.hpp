#pragma once

// Deterministic random source. The engine is std::mt19937_64; all value
// transforms are written out here so streams are identical across platforms
// and library versions (std::*_distribution is implementation-defined).

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace attnreg::nn {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derive a stream seed from a base seed and a stream index; nearby inputs map
// to unrelated outputs.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 0x0123456789abcdefULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // [0, 1)
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Inclusive range via rejection-free modulo over a fresh 64-bit draw; the
  // bias is < 2^-50 for any range this project uses.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
    const std::uint64_t span = std::uint64_t(hi - lo) + 1;
    return lo + std::int64_t(eng_() % span);
  }

  // Box-Muller; consumes exactly two engine draws, so the stream position is
  // a pure function of call counts (no cached spare).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  std::uint64_t raw() { return eng_(); }

  std::string state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (is.fail()) throw std::invalid_argument("Rng::set_state: malformed state string");
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace attnreg::nn
