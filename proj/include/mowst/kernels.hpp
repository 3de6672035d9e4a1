#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Dense and graph kernels. Each kernel has a plain serial reference
// (`*_serial`) and an OpenMP version. The parallel versions partition output
// rows only, so every output element is accumulated in the same order as the
// serial one and the two agree bit for bit.
namespace mowst::kernels {

// c[m x n] = a[m x k] * b[k x n], row-major.
void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);

// c[m x n] += a[m x k] * b[n x k]^T
void matmul_bt_accumulate_serial(std::span<const double> a, std::span<const double> b,
                                 std::span<double> c, std::size_t m, std::size_t k, std::size_t n);
void matmul_bt_accumulate(std::span<const double> a, std::span<const double> b, std::span<double> c,
                          std::size_t m, std::size_t k, std::size_t n);

// c[k x n] += a[m x k]^T * b[m x n]
void matmul_at_accumulate_serial(std::span<const double> a, std::span<const double> b,
                                 std::span<double> c, std::size_t m, std::size_t k, std::size_t n);
void matmul_at_accumulate(std::span<const double> a, std::span<const double> b, std::span<double> c,
                          std::size_t m, std::size_t k, std::size_t n);

// Symmetric-normalized closed-neighborhood operator of an undirected graph:
//   (A h)_w = sum_{w' in N(w) + {w}} h_{w'} / sqrt((deg w + 1)(deg w' + 1))
// stored as CSR rows that include the self term. The operator is symmetric,
// so it is its own adjoint in the backward pass.
struct NormalizedAdjacency {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> offsets;  // num_nodes + 1
  std::vector<std::size_t> columns;
  std::vector<double> coefficients;
};

// out[num_nodes x width] = A * in[num_nodes x width]
void propagate_serial(const NormalizedAdjacency& adj, std::span<const double> in,
                      std::span<double> out, std::size_t width);
void propagate(const NormalizedAdjacency& adj, std::span<const double> in, std::span<double> out,
               std::size_t width);

}  // namespace mowst::kernels
