#include "bslq/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace bslq {

int worker_count() {
  if (const char* env = std::getenv("BSLQ_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, const std::function<void(int, int)>& body) {
  if (n <= 0) return;
  constexpr int kChunk = 256;
  const int n_chunks = (n + kChunk - 1) / kChunk;
  const int workers = std::min(worker_count(), n_chunks);
  if (workers <= 1) {
    body(0, n);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (int c = next++; c < n_chunks; c = next++) {
        try {
          body(c * kChunk, std::min(n, (c + 1) * kChunk));
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

Estimate mean_se(const std::vector<double>& x) {
  Estimate e;
  const std::size_t n = x.size();
  if (n == 0) return e;
  e.mean = pairwise_sum(x.data(), n) / static_cast<double>(n);
  if (n < 2) return e;
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = (x[i] - e.mean) * (x[i] - e.mean);
  const double var = pairwise_sum(d.data(), n) / static_cast<double>(n - 1);
  e.se = std::sqrt(var / static_cast<double>(n));
  return e;
}

}  // namespace bslq
