#pragma once

#include <functional>
#include <vector>

namespace bslq {

/// Worker count: BSLQ_THREADS if set and positive, else hardware concurrency.
int worker_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend only on n, so per-index outputs are scheduling independent.
void parallel_for(int n, const std::function<void(int, int)>& body);

/// Pairwise (cascade) summation.
double pairwise_sum(const double* x, std::size_t n);

struct Estimate {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean
};

Estimate mean_se(const std::vector<double>& x);

}  // namespace bslq
