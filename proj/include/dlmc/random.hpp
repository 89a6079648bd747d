#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>

namespace dlmc {

using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Counter-based substream key: every random draw in the library is taken
/// from an engine seeded by hash(seed, purpose, index, iteration), so results
/// never depend on evaluation order or on the number of workers.
constexpr std::uint64_t substream_key(std::uint64_t seed, std::string_view purpose,
                                      std::uint64_t index = 0, std::uint64_t iteration = 0) {
  std::uint64_t h = detail::splitmix64(seed);
  h = detail::splitmix64(h ^ detail::fnv1a(purpose));
  h = detail::splitmix64(h ^ index);
  h = detail::splitmix64(h ^ (iteration * 0xd1342543de82ef95ULL));
  return h;
}

inline Rng make_substream(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0,
                          std::uint64_t iteration = 0) {
  return Rng(substream_key(seed, purpose, index, iteration));
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng);
}

inline Eigen::VectorXd standard_normal_vector(Rng& rng, Eigen::Index dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = n(rng);
  return v;
}

}  // namespace dlmc
