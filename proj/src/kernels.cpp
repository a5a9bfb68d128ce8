#include "enmdap/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace enmdap::kernels {
namespace {

// Row kernels shared by both variants; the parallel loops only distribute
// calls to these, which is what keeps the two paths bit-identical.

inline void nn_row(const double* a_row, const double* b, double* out_row,
                   std::size_t inner, std::size_t cols) {
  std::fill(out_row, out_row + cols, 0.0);
  for (std::size_t k = 0; k < inner; ++k) {
    const double a_ik = a_row[k];
    const double* b_row = b + k * cols;
    for (std::size_t j = 0; j < cols; ++j) out_row[j] += a_ik * b_row[j];
  }
}

inline void nt_row(const double* g_row, const double* b, double* out_row,
                   std::size_t inner, std::size_t cols) {
  for (std::size_t p = 0; p < inner; ++p) {
    const double* b_row = b + p * cols;
    double acc = 0.0;
    for (std::size_t q = 0; q < cols; ++q) acc += g_row[q] * b_row[q];
    out_row[p] = acc;
  }
}

// One output row p of a^T g: sums over the batch dimension in ascending order.
inline void tn_row(const double* a, const double* g, double* out_row,
                   std::size_t p, std::size_t rows, std::size_t inner,
                   std::size_t cols) {
  std::fill(out_row, out_row + cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double a_rp = a[r * inner + p];
    const double* g_row = g + r * cols;
    for (std::size_t q = 0; q < cols; ++q) out_row[q] += a_rp * g_row[q];
  }
}

inline void xent_row(const double* logits, int label, double* probs,
                     double* loss, std::size_t cols) {
  const double shift = *std::max_element(logits, logits + cols);
  double denom = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    probs[j] = std::exp(logits[j] - shift);
    denom += probs[j];
  }
  for (std::size_t j = 0; j < cols; ++j) probs[j] /= denom;
  *loss = std::log(denom) + shift - logits[static_cast<std::size_t>(label)];
}

bool worth_parallel(std::size_t work) {
  return work >= kParallelWorkThreshold && parallel_available();
}

}  // namespace

bool parallel_available() {
#ifdef _OPENMP
  return omp_get_max_threads() > 1;
#else
  return false;
#endif
}

namespace serial {

void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i)
    nn_row(a.data() + i * inner, b.data(), out.data() + i * cols, inner, cols);
}

void matmul_nt(std::span<const double> g, std::span<const double> b,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i)
    nt_row(g.data() + i * cols, b.data(), out.data() + i * inner, inner, cols);
}

void matmul_tn(std::span<const double> a, std::span<const double> g,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols) {
  for (std::size_t p = 0; p < inner; ++p)
    tn_row(a.data(), g.data(), out.data() + p * cols, p, rows, inner, cols);
}

void softmax_xent_rows(std::span<const double> logits, std::span<const int> labels,
                       std::span<double> probs, std::span<double> row_loss,
                       std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i)
    xent_row(logits.data() + i * cols, labels[i], probs.data() + i * cols,
             row_loss.data() + i, cols);
}

}  // namespace serial

namespace parallel {

void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    nn_row(a.data() + r * inner, b.data(), out.data() + r * cols, inner, cols);
  }
}

void matmul_nt(std::span<const double> g, std::span<const double> b,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    nt_row(g.data() + r * cols, b.data(), out.data() + r * inner, inner, cols);
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> g,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols) {
  const auto n = static_cast<std::ptrdiff_t>(inner);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < n; ++p) {
    const auto c = static_cast<std::size_t>(p);
    tn_row(a.data(), g.data(), out.data() + c * cols, c, rows, inner, cols);
  }
}

void softmax_xent_rows(std::span<const double> logits, std::span<const int> labels,
                       std::span<double> probs, std::span<double> row_loss,
                       std::size_t rows, std::size_t cols) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    xent_row(logits.data() + r * cols, labels[r], probs.data() + r * cols,
             row_loss.data() + r, cols);
  }
}

}  // namespace parallel

void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols) {
  if (worth_parallel(rows * inner * cols))
    parallel::matmul_nn(a, b, out, rows, inner, cols);
  else
    serial::matmul_nn(a, b, out, rows, inner, cols);
}

void matmul_nt(std::span<const double> g, std::span<const double> b,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols) {
  if (worth_parallel(rows * inner * cols))
    parallel::matmul_nt(g, b, out, rows, inner, cols);
  else
    serial::matmul_nt(g, b, out, rows, inner, cols);
}

void matmul_tn(std::span<const double> a, std::span<const double> g,
               std::span<double> out, std::size_t rows, std::size_t inner,
               std::size_t cols) {
  if (worth_parallel(rows * inner * cols))
    parallel::matmul_tn(a, g, out, rows, inner, cols);
  else
    serial::matmul_tn(a, g, out, rows, inner, cols);
}

void softmax_xent_rows(std::span<const double> logits, std::span<const int> labels,
                       std::span<double> probs, std::span<double> row_loss,
                       std::size_t rows, std::size_t cols) {
  if (worth_parallel(rows * cols * 8))
    parallel::softmax_xent_rows(logits, labels, probs, row_loss, rows, cols);
  else
    serial::softmax_xent_rows(logits, labels, probs, row_loss, rows, cols);
}

}  // namespace enmdap::kernels
