#include "bslq/brownian.hpp"

#include <cmath>
#include <numbers>

#include "bslq/errors.hpp"

namespace bslq {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double to_unit(std::uint64_t x) {  // in [0, 1)
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

}  // namespace

double keyed_normal(std::uint64_t seed, std::uint64_t path,
                    std::uint64_t step) {
  const std::uint64_t key =
      splitmix64(splitmix64(seed ^ 0xD1B54A32D192ED03ULL) + path) ^
      (step * 0x9E3779B97F4A7C15ULL);
  const std::uint64_t r1 = splitmix64(key);
  const std::uint64_t r2 = splitmix64(r1);
  const double u1 = 1.0 - to_unit(r1);  // (0, 1]
  const double u2 = to_unit(r2);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

BrownianBatch::BrownianBatch(TimeGrid grid, int n_paths, std::uint64_t seed,
                             int substeps)
    : grid_(grid), n_paths_(n_paths), seed_(seed), substeps_(substeps) {
  if (n_paths < 1) {
    throw ValidationError("simulate/sample_paths", "n_paths must be >= 1");
  }
  if (substeps < 1) {
    throw ValidationError("simulate/sample_paths", "substeps must be >= 1");
  }
}

double BrownianBatch::increment(int path, int k) const {
  const double sh = std::sqrt(grid_.h() / substeps_);
  double s = 0.0;
  const std::uint64_t base = static_cast<std::uint64_t>(k) * substeps_;
  for (int j = 0; j < substeps_; ++j) {
    s += keyed_normal(seed_, static_cast<std::uint64_t>(path), base + j);
  }
  return sh * s;
}

void BrownianBatch::increments(int path, std::vector<double>& dW) const {
  dW.resize(grid_.n_steps());
  for (int k = 0; k < grid_.n_steps(); ++k) dW[k] = increment(path, k);
}

void BrownianBatch::cumulative(int path, std::vector<double>& W) const {
  W.resize(grid_.n_nodes());
  W[0] = 0.0;
  for (int k = 0; k < grid_.n_steps(); ++k) W[k + 1] = W[k] + increment(path, k);
}

std::vector<std::vector<double>> BrownianBatch::materialize() const {
  std::vector<std::vector<double>> out(n_paths_);
  for (int p = 0; p < n_paths_; ++p) cumulative(p, out[p]);
  return out;
}

BrownianBatch sample_paths(const TimeGrid& grid, int n_paths,
                           std::uint64_t seed) {
  return BrownianBatch(grid, n_paths, seed);
}

}  // namespace bslq
