#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace actscan {

// Base class for all library errors surfaced to callers.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define ACTSCAN_DEFINE_ERROR(Name)                               \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& msg) : Error(msg) {}        \
  }

ACTSCAN_DEFINE_ERROR(UnknownTokenError);
ACTSCAN_DEFINE_ERROR(EmptyPromptError);
ACTSCAN_DEFINE_ERROR(IndexOutOfRangeError);
ACTSCAN_DEFINE_ERROR(LengthMismatchError);
ACTSCAN_DEFINE_ERROR(DimensionMismatchError);
ACTSCAN_DEFINE_ERROR(UnknownConditionError);
ACTSCAN_DEFINE_ERROR(RegularityViolationError);
ACTSCAN_DEFINE_ERROR(InvalidArchError);
ACTSCAN_DEFINE_ERROR(DivergenceDetectedError);
ACTSCAN_DEFINE_ERROR(TriggerNotRepresentableError);
ACTSCAN_DEFINE_ERROR(ShapeMismatchError);
ACTSCAN_DEFINE_ERROR(EmptySelectionError);
ACTSCAN_DEFINE_ERROR(NoMaskableTokensError);
ACTSCAN_DEFINE_ERROR(InsufficientCleanDataError);
ACTSCAN_DEFINE_ERROR(SingleClassError);
ACTSCAN_DEFINE_ERROR(TemplateError);
ACTSCAN_DEFINE_ERROR(CounterMismatchError);
ACTSCAN_DEFINE_ERROR(IoError);

#undef ACTSCAN_DEFINE_ERROR

// Deterministic RNG. Transforms are hand-rolled on top of mt19937_64 so the
// stream does not depend on the standard library's distribution
// implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller (single value per call).
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  uint64_t integer(uint64_t n) {
    if (n == 0) throw Error("Rng::integer: n must be positive");
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  std::vector<double> normal_vec(size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = normal();
    return v;
  }

 private:
  std::mt19937_64 engine_;
};

// Dense row-major matrix of doubles; the only tensor type the project needs.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return v.size(); }
};

// Per-invocation instrumentation counters. Never shared between concurrent
// invocations; merge after the fact.
struct CallCounters {
  long long encoder_calls = 0;
  long long denoiser_forwards = 0;

  void merge(const CallCounters& other) {
    encoder_calls += other.encoder_calls;
    denoiser_forwards += other.denoiser_forwards;
  }
};

uint64_t fnv1a64(const std::string& data);
std::string to_hex(uint64_t value);

// Runs fn(i) for i in [0, n). With threads <= 1 runs inline; otherwise splits
// into contiguous chunks. fn must be safe to call concurrently for distinct i.
void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn);

double l2_norm(const std::vector<double>& v);
double l2_distance(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace actscan
