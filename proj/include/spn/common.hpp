#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace spn {

// Error taxonomy. The CLI maps these onto its exit codes: structural,
// contract, config, validation and io errors are input problems (exit 2),
// numeric errors are runtime failures (exit 4).
struct StructuralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

uint64_t splitmix64(uint64_t x);

// Stable per-entity seed derivation: mixes a master seed with up to two
// indices so samples, runs and passes each own an independent stream.
uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b = 0);

// Seeded random stream with hand-rolled distributions on top of
// mt19937_64. The standard distributions are implementation-defined, so
// rolling our own keeps every draw bit-reproducible across toolchains.
class RandomStream {
 public:
  explicit RandomStream(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // [0, 1), 53-bit resolution
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // (0, 1], safe as a log() argument
  double uniform_open() { return 1.0 - uniform(); }

  double uniform_range(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  // unbiased integer in [0, n) by rejection
  uint64_t uniform_int(uint64_t n);

  double exponential(double rate) { return -std::log(uniform_open()) / rate; }

  // Box-Muller, one value per call (no cached pair, keeps replay trivial)
  double normal(double mean, double sd) {
    double u1 = uniform_open();
    double u2 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    return mean + sd * z;
  }

  template <typename It>
  void shuffle(It first, It last) {
    auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      uint64_t j = uniform_int(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

uint64_t fnv1a64(const void* data, size_t n);
uint64_t fnv1a64(const std::string& s);
std::string to_hex(uint64_t v);

// Shortest round-trip decimal representation; used for every CSV/SVG
// number so reruns emit byte-identical files.
std::string format_double(double v);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace spn
