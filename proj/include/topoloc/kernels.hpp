#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace topoloc::kernels {

// All matrices are row-major. Every routine accumulates into `c` (c += ...),
// so callers zero-initialize when they want a plain product.
//
// The default namespace holds the OpenMP-parallel kernels used by the tape;
// `reference` holds plain serial loops kept as the test oracle.

/// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
/// c[m x n] += a[k x m]^T * b[k x n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
/// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);

/// out[i] += sum over j in adjacency[i] of x[j]; x and out are n x d.
void neighbor_sum(std::span<const double> x, const std::vector<std::vector<std::size_t>>& adjacency,
                  std::span<double> out, std::size_t d);

/// Work (multiply-adds) below which the parallel kernels stay serial.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

namespace reference {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void neighbor_sum(std::span<const double> x, const std::vector<std::vector<std::size_t>>& adjacency,
                  std::span<double> out, std::size_t d);

}  // namespace reference

/// Number of OpenMP threads the parallel kernels may use (1 when built without OpenMP).
int max_threads();

}  // namespace topoloc::kernels
