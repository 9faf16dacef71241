#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace cfbound {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed of sub-stream `index` of `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Symmetric Dirichlet draw. Works in log space so that small concentrations
/// do not underflow to an all-zero vector.
std::vector<double> sample_dirichlet(Rng& rng, std::size_t n, double alpha);

/// Index drawn from a probability vector.
int sample_categorical(Rng& rng, const std::vector<double>& p);

}  // namespace cfbound
