#pragma once

#include <stdexcept>
#include <string>

namespace kift {

// Data-level problems: bad files, duplicate ids, malformed lines.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Binary/JSON format violations: bad magic, truncated payload, wrong shape.
struct FormatError : DataError {
  explicit FormatError(const std::string& msg) : DataError(msg) {}
};

// Tensor/matrix shape incompatibilities.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or inconsistent configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// FNV-1a, used for seed derivation and config provenance hashes.
inline std::uint64_t fnv1a(const std::string& s, std::uint64_t seed = 14695981039346656037ull) {
  std::uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace kift
