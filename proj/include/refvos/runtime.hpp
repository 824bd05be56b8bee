#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace refvos {

// Error taxonomy maps onto CLI exit codes: input 1, contract 2, numeric 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};

// Global compute precision. f64 is the verification mode (gradient checks,
// bitwise determinism claims); f32 runs the heavy kernels in single precision
// and rounds every op output to the nearest float value.
enum class Precision { f32, f64 };

Precision precision();
void set_precision(Precision p);

inline double round_value(double v, Precision p) {
  return p == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

// Deterministic RNG: fixed algorithms so seeded runs are reproducible
// independent of standard-library distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (s_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t s_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace refvos
