// segstream/common.h
//
// Copyright 2026 The segstream Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SEGSTREAM_COMMON_H_
#define SEGSTREAM_COMMON_H_

#include <cstdint>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace segstream {

// All error paths throw SegError; the CLI maps them onto exit codes.
class SegError : public std::runtime_error {
 public:
  explicit SegError(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void Fail(const std::string& msg) { throw SegError(msg); }

// Always-on check (independent of NDEBUG). The message side is a stream
// expression so call sites can name operands and shapes.
#define SEG_CHECK(cond, msg)                         \
  do {                                               \
    if (!(cond)) {                                   \
      std::ostringstream seg_check_os_;              \
      seg_check_os_ << msg;                          \
      ::segstream::Fail(seg_check_os_.str());        \
    }                                                \
  } while (0)

// Deterministic random source. The engine is std::mt19937_64 (its output
// sequence is fixed by the standard); the real-valued mappings are done by
// hand so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t Bits() { return engine_(); }

  // Uniform in [0, 1).
  double Uniform() {
    return static_cast<double>(Bits() >> 11) * (1.0 / 9007199254740992.0);
  }

  // Uniform integer in [lo, hi], inclusive.
  int UniformInt(int lo, int hi) {
    SEG_CHECK(lo <= hi, "UniformInt: empty range [" << lo << ", " << hi << "]");
    uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    return lo + static_cast<int>(Bits() % span);
  }

  // Standard normal via Box-Muller (no spare caching, keeps draws positional).
  double Normal() {
    double u1 = static_cast<double>((Bits() >> 11) + 1) * (1.0 / 9007199254740992.0);
    double u2 = static_cast<double>(Bits() >> 11) * (1.0 / 9007199254740992.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

// FNV-1a 64-bit, used for output fingerprints in manifests and tests.
inline uint64_t Fnv1a64(std::string_view bytes) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string HexHash(std::string_view bytes);

}  // namespace segstream

#endif  // SEGSTREAM_COMMON_H_
