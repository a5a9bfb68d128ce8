#pragma once

#include <cstddef>
#include <span>

// Dense row-major kernels behind the differentiation engine.
//
// Each kernel exists twice: `serial::` is the reference loop nest and
// `parallel::` splits the outermost output dimension across OpenMP threads.
// Both variants accumulate every output element in the same order, so their
// results are bit-identical; tests/test_kernels.cpp holds them to that. The
// unqualified entry points pick one by problem size.

namespace enmdap::kernels {

/// Work (multiply-adds) below which the dispatching entry points stay serial.
inline constexpr std::size_t kParallelWorkThreshold = std::size_t{1} << 15;

/// True when the library was compiled with OpenMP and more than one thread is
/// available.
bool parallel_available();

namespace serial {
// out[rows x cols] = a[rows x inner] * b[inner x cols]
void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols);
// out[rows x inner] = g[rows x cols] * b[inner x cols]^T
void matmul_nt(std::span<const double> g, std::span<const double> b,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols);
// out[inner x cols] = a[rows x inner]^T * g[rows x cols]
void matmul_tn(std::span<const double> a, std::span<const double> g,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols);
// Row-wise stable softmax of logits[rows x cols]; writes probabilities and the
// per-row cross-entropy -log p[label].
void softmax_xent_rows(std::span<const double> logits, std::span<const int> labels,
                       std::span<double> probs, std::span<double> row_loss,
                       std::size_t rows, std::size_t cols);
}  // namespace serial

namespace parallel {
void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols);
void matmul_nt(std::span<const double> g, std::span<const double> b,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols);
void matmul_tn(std::span<const double> a, std::span<const double> g,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols);
void softmax_xent_rows(std::span<const double> logits, std::span<const int> labels,
                       std::span<double> probs, std::span<double> row_loss,
                       std::size_t rows, std::size_t cols);
}  // namespace parallel

void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols);
void matmul_nt(std::span<const double> g, std::span<const double> b,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols);
void matmul_tn(std::span<const double> a, std::span<const double> g,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols);
void softmax_xent_rows(std::span<const double> logits, std::span<const int> labels,
                       std::span<double> probs, std::span<double> row_loss,
                       std::size_t rows, std::size_t cols);

}  // namespace enmdap::kernels
