#pragma once

#include <cstdint>
#include <vector>

#include "bslq/core_types.hpp"

namespace bslq {

/// Standard normal draw keyed by (seed, path, step). Counter based, so any
/// entry can be regenerated independently of thread scheduling.
double keyed_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step);

/// Brownian increments on a grid, generated lazily. With substeps = s each
/// increment is the sum of s finer increments of a grid with s * n_steps
/// steps, so BrownianBatch(g, P, seed, 2) and BrownianBatch(g.refined(2), P,
/// seed) describe the same Brownian paths.
class BrownianBatch {
 public:
  BrownianBatch(TimeGrid grid, int n_paths, std::uint64_t seed,
                int substeps = 1);

  const TimeGrid& grid() const { return grid_; }
  int n_paths() const { return n_paths_; }
  std::uint64_t seed() const { return seed_; }
  int substeps() const { return substeps_; }

  /// dW[k] for k = 0..n_steps-1.
  void increments(int path, std::vector<double>& dW) const;
  /// W[k] for k = 0..n_steps, W[0] = 0.
  void cumulative(int path, std::vector<double>& W) const;
  double increment(int path, int k) const;

  /// Fully materialised W, row per path. Only for small batches.
  std::vector<std::vector<double>> materialize() const;

 private:
  TimeGrid grid_;
  int n_paths_;
  std::uint64_t seed_;
  int substeps_;
};

BrownianBatch sample_paths(const TimeGrid& grid, int n_paths,
                           std::uint64_t seed);

}  // namespace bslq
