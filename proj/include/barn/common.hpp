#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace barn {

/// Base of every error this library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No traversable route between two cells at the requested clearance.
class NoPathError : public Error {
 public:
  using Error::Error;
};

/// Environment generation exhausted its regeneration attempts.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Sensor origin lies inside an obstacle.
class InvalidSensingState : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration, environment or log file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// SplitMix64 step; used to derive independent seeds and as a portable
/// bit source where std distributions would differ across standard libraries.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ull));
}

/// FNV-1a over a byte string.
constexpr std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
constexpr double to_unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace barn
