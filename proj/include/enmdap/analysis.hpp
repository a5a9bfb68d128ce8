#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "enmdap/data.hpp"

namespace enmdap {

/// Empirical measure of one labeled domain.
struct EmpiricalDomain {
  std::size_t dim = 0;
  std::vector<double> points;  // row-major [n x dim]
  std::vector<int> labels;
  std::vector<double> class_probs;  // count_c / n

  EmpiricalDomain(std::size_t dim, std::vector<double> points, std::vector<int> labels,
                  int n_classes);
  /// Requires a labeled dataset.
  static EmpiricalDomain from_dataset(const DomainDataset& ds);

  std::size_t size() const { return labels.size(); }
  int n_classes() const { return static_cast<int>(class_probs.size()); }
};

/// All exponent tuples of length `dim` with non-negative entries summing to
/// `order`, in ascending lexicographic order.
std::vector<std::vector<int>> exponent_tuples(std::size_t dim, int order);

/// Number of such tuples, C(order + dim - 1, dim - 1).
double exponent_tuple_count(std::size_t dim, int order);

/// k-th order label-wise moment divergence between two empirical domains:
///
///   sum_c sum_{i in Delta_k} | p_a(c) E_a[prod_j x_j^{i_j} | c]
///                            - p_b(c) E_b[prod_j x_j^{i_j} | c] |
///
/// A class missing from a domain contributes zero on that side.
double lm_divergence(const EmpiricalDomain& a, const EmpiricalDomain& b, int k);

/// Independent evaluation of the same quantity (recursive tuple enumeration,
/// per-class means with std::pow). Refuses inputs with more than 1e6 tuples.
double lm_divergence_oracle(const EmpiricalDomain& a, const EmpiricalDomain& b, int k);

struct BoundInputs {
  std::vector<double> alpha;          // source weights on the simplex
  std::vector<std::size_t> n_samples; // per source
  std::size_t vc_dim = 1;
  double delta = 0.05;
};

/// Finite-sample term of the target error bound:
///   4 sqrt( (sum_i alpha_i^2 / beta_i) * (2d(ln(2m/d) + 1) + 2 ln(4/delta)) / m )
/// with m = sum n_i and beta_i = n_i / m. Requires 2m > d.
double eta_term(const BoundInputs& in);

/// sum_i alpha_i * (mismatches_i / n_i).
double weighted_empirical_error(std::span<const std::vector<int>> predictions,
                                std::span<const std::vector<int>> labels,
                                std::span<const double> alpha);

/// Fraction of positions where two prediction vectors differ.
double disagreement_ratio(std::span<const int> h1, std::span<const int> h2);

}  // namespace enmdap
