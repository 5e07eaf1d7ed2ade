#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ase {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a configuration or input document is malformed.
class ConfigError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

/// Independent random streams owned by one episode. Every stream is derived
/// from (root seed, episode index, stream id), so two conditions run with the
/// same root seed see identical environment realizations.
enum class Stream : std::uint64_t {
  kEnvironment = 1,
  kAmbient = 2,
  kUser = 3,
  kAssistant = 4,
  kLearner = 5,
};

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t episode, Stream stream);

inline Rng make_rng(std::uint64_t root, std::uint64_t episode, Stream stream) {
  return Rng(derive_seed(root, episode, stream));
}

/// Shortest round-trip decimal representation; used wherever output must be
/// byte-stable.
std::string format_double(double value);

/// FNV-1a over a byte string.
std::uint64_t fnv1a(std::string_view bytes);

double sigmoid(double x);
double logit(double p);
double wrap_angle(double angle);

/// Runs fn(0..n-1) on up to `threads` workers (0: hardware concurrency).
/// The first exception thrown by any call is rethrown.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace ase
