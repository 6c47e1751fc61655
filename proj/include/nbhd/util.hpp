#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nbhd {

// ---------------------------------------------------------------------------
// Number formatting

/// Table formatting: at most 6 significant digits, trailing zeros dropped,
/// "-0" normalized to "0", non-finite values written as "NA".
std::string format_sig6(double value);

/// Shortest representation that parses back to the identical double. Used for
/// data interchange files (panel, draws) where re-loading must be exact.
std::string format_exact(double value);

/// Strict double parser for CSV cells; throws std::invalid_argument.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

// ---------------------------------------------------------------------------
// Hashing and randomness

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);
/// Order-sensitive combination of hash inputs.
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Deterministic generator: mt19937_64 stream with portable uniform and
/// normal transforms, so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform integer on [0, n).
  std::size_t below(std::size_t n);
  /// Standard normal (Marsaglia polar method).
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Files

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Parallelism

/// Process-wide worker count used by parallel_for (default: hardware threads).
void set_worker_count(std::size_t n);
std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Work is claimed dynamically; callers write
/// results into pre-sized slots so output order never depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Statistics helpers

/// Type-7 (linear interpolation) empirical quantile of unsorted data.
double quantile_type7(std::vector<double> values, double p);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace nbhd
