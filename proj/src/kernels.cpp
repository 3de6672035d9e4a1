#include "mowst/kernels.hpp"

#include <omp.h>

#include <cstdint>

namespace mowst::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelThreshold = 1 << 14;

inline void matmul_row(const double* a_row, const double* b, double* c_row, std::size_t k,
                       std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) c_row[j] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a_row[p];
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

inline void matmul_bt_row(const double* a_row, const double* b, double* c_row, std::size_t k,
                          std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* b_row = b + j * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
    c_row[j] += acc;
  }
}

// Row r of A^T B: sum_i a[i][r] * b[i][:]
inline void matmul_at_row(const double* a, const double* b, double* c_row, std::size_t r,
                          std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double av = a[i * k + r];
    const double* b_row = b + i * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

inline void propagate_row(const NormalizedAdjacency& adj, const double* in, double* out_row,
                          std::size_t row, std::size_t width) {
  for (std::size_t j = 0; j < width; ++j) out_row[j] = 0.0;
  for (std::size_t e = adj.offsets[row]; e < adj.offsets[row + 1]; ++e) {
    const double coef = adj.coefficients[e];
    const double* src = in + adj.columns[e] * width;
    for (std::size_t j = 0; j < width; ++j) out_row[j] += coef * src[j];
  }
}

}  // namespace

void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelThreshold)
  for (std::int64_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    matmul_row(a.data() + r * k, b.data(), c.data() + r * n, k, n);
  }
}

void matmul_bt_accumulate_serial(std::span<const double> a, std::span<const double> b,
                                 std::span<double> c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_bt_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void matmul_bt_accumulate(std::span<const double> a, std::span<const double> b, std::span<double> c,
                          std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelThreshold)
  for (std::int64_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    matmul_bt_row(a.data() + r * k, b.data(), c.data() + r * n, k, n);
  }
}

void matmul_at_accumulate_serial(std::span<const double> a, std::span<const double> b,
                                 std::span<double> c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t r = 0; r < k; ++r) matmul_at_row(a.data(), b.data(), c.data() + r * n, r, m, k, n);
}

void matmul_at_accumulate(std::span<const double> a, std::span<const double> b, std::span<double> c,
                          std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelThreshold)
  for (std::int64_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    matmul_at_row(a.data(), b.data(), c.data() + r * n, r, m, k, n);
  }
}

void propagate_serial(const NormalizedAdjacency& adj, std::span<const double> in,
                      std::span<double> out, std::size_t width) {
  for (std::size_t r = 0; r < adj.num_nodes; ++r)
    propagate_row(adj, in.data(), out.data() + r * width, r, width);
}

void propagate(const NormalizedAdjacency& adj, std::span<const double> in, std::span<double> out,
               std::size_t width) {
  const auto rows = static_cast<std::int64_t>(adj.num_nodes);
  const std::size_t work = adj.columns.size() * width;
#pragma omp parallel for schedule(static) if (work >= kParallelThreshold)
  for (std::int64_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    propagate_row(adj, in.data(), out.data() + r * width, r, width);
  }
}

}  // namespace mowst::kernels
