#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <vector>

namespace medrl {

// Stateless 64-bit mixer used to derive independent RNG streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s);

namespace detail {
template <typename K>
std::uint64_t seed_key(const K& k) {
  if constexpr (std::is_convertible_v<const K&, std::string_view>) {
    return fnv1a64(std::string_view(k));
  } else {
    return static_cast<std::uint64_t>(k);
  }
}
}  // namespace detail

// Combine a seed with any number of stream keys (integers or strings).
template <typename... Keys>
std::uint64_t derive_seed(std::uint64_t seed, const Keys&... keys) {
  std::uint64_t h = splitmix64(seed);
  ((h = splitmix64(h ^ detail::seed_key(keys))), ...);
  return h;
}

// Portable random stream. mt19937_64 output is fixed by the standard; the
// conversions below are ours so results match across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  double normal();

  // Standard exponential, used for Dirichlet(1, ..., 1) draws.
  double exponential();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions from
// workers are rethrown on the calling thread (first one wins).
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn);

int default_parallelism();

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
// lowercase + trim + collapse internal whitespace runs to one space
std::string normalize_entity(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);
bool icontains(std::string_view haystack, std::string_view needle);

// Fixed-precision formatting for CSV/Markdown outputs ("nan" for NaN).
std::string fmt_double(double v, int precision = 6);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace medrl
