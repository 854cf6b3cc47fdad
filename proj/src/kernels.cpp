#include "topoloc/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace topoloc::kernels {

namespace {

bool go_parallel(std::size_t work) { return work >= kParallelThreshold; }

}  // namespace

// i-k-j ordering keeps the inner loop contiguous in both b and c.
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (go_parallel(m * k * n))
  for (long i = 0; i < rows; ++i) {
    double* ci = pc + i * n;
    const double* ai = pa + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const long rows = static_cast<long>(m);
  // Each thread owns whole rows of c, so there is no write sharing.
#pragma omp parallel for schedule(static) if (go_parallel(m * k * n))
  for (long i = 0; i < rows; ++i) {
    double* ci = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double api = pa[p * m + i];
      if (api == 0.0) continue;
      const double* bp = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (go_parallel(m * k * n))
  for (long i = 0; i < rows; ++i) {
    const double* ai = pa + i * k;
    double* ci = pc + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = pb + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

void neighbor_sum(std::span<const double> x, const std::vector<std::vector<std::size_t>>& adjacency,
                  std::span<double> out, std::size_t d) {
  const long n = static_cast<long>(adjacency.size());
#pragma omp parallel for schedule(static) if (go_parallel(adjacency.size() * d * 4))
  for (long i = 0; i < n; ++i) {
    double* oi = out.data() + i * d;
    for (std::size_t j : adjacency[i]) {
      const double* xj = x.data() + j * d;
      for (std::size_t q = 0; q < d; ++q) oi[q] += xj[q];
    }
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace reference {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] += acc;
    }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] += acc;
    }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] += acc;
    }
}

void neighbor_sum(std::span<const double> x, const std::vector<std::vector<std::size_t>>& adjacency,
                  std::span<double> out, std::size_t d) {
  for (std::size_t i = 0; i < adjacency.size(); ++i)
    for (std::size_t j : adjacency[i])
      for (std::size_t q = 0; q < d; ++q) out[i * d + q] += x[j * d + q];
}

}  // namespace reference

}  // namespace topoloc::kernels
