#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace causalcollab {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent substream seed from a master seed and a key path.
/// Identical (seed, keys) always give the identical stream.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

/// 64-bit FNV-1a of a string, for keying substreams by identifiers.
std::uint64_t hash_key(std::string_view s);

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  return Rng(derive_seed(seed, keys));
}

double standard_normal(Rng& rng);
double uniform01(Rng& rng);
/// Fills in column-major order.
template <class Derived>
void fill_standard_normal(Rng& rng, Eigen::DenseBase<Derived>& out) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = dist(rng);
}

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; callers write results into pre-sized slots so the
/// outcome does not depend on the worker count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

}  // namespace causalcollab
