#include "enmdap/analysis.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "enmdap/error.hpp"

namespace enmdap {

EmpiricalDomain::EmpiricalDomain(std::size_t dim_, std::vector<double> points_,
                                 std::vector<int> labels_, int n_classes)
    : dim(dim_), points(std::move(points_)), labels(std::move(labels_)) {
  if (dim == 0) throw std::invalid_argument("EmpiricalDomain: dim must be >= 1");
  if (n_classes < 1) throw std::invalid_argument("EmpiricalDomain: need at least one class");
  if (points.size() != labels.size() * dim)
    throw ShapeError("EmpiricalDomain: " + std::to_string(points.size()) + " values for " +
                     std::to_string(labels.size()) + " labels of dim " + std::to_string(dim));
  if (labels.empty()) throw std::invalid_argument("EmpiricalDomain: no samples");
  class_probs.assign(static_cast<std::size_t>(n_classes), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes)
      throw LabelError("EmpiricalDomain: label " + std::to_string(labels[i]) + " at row " +
                           std::to_string(i),
                       i);
    class_probs[static_cast<std::size_t>(labels[i])] += 1.0;
  }
  for (double& p : class_probs) p /= static_cast<double>(labels.size());
}

EmpiricalDomain EmpiricalDomain::from_dataset(const DomainDataset& ds) {
  if (!ds.labeled()) throw std::invalid_argument("domain '" + ds.domain_name + "' has no labels");
  return EmpiricalDomain(ds.dim, ds.features, *ds.labels, ds.n_classes);
}

std::vector<std::vector<int>> exponent_tuples(std::size_t dim, int order) {
  if (dim == 0 || order < 0) throw std::invalid_argument("exponent_tuples: bad arguments");
  std::vector<std::vector<int>> out;
  std::vector<int> t(dim, 0);
  t.back() = order;
  for (;;) {
    out.push_back(t);
    // Lexicographic successor at a fixed sum: bump the rightmost position q
    // (not the last) whose suffix t[q+1..] still has mass, clear everything
    // after it, and park the remaining mass in the last slot.
    std::size_t q = dim - 1;
    int tail = 0;
    while (q > 0 && tail == 0) tail += t[q--];
    if (tail == 0) return out;
    ++t[q];
    std::fill(t.begin() + static_cast<std::ptrdiff_t>(q) + 1, t.end(), 0);
    t.back() = tail - 1;
  }
}

double exponent_tuple_count(std::size_t dim, int order) {
  // C(order + dim - 1, dim - 1) in floating point; only used for guards.
  double c = 1.0;
  for (std::size_t i = 1; i < dim; ++i)
    c = c * static_cast<double>(order + static_cast<int>(i)) / static_cast<double>(i);
  return c;
}

namespace {

void check_pair(const EmpiricalDomain& a, const EmpiricalDomain& b, int k) {
  if (k < 1) throw std::invalid_argument("moment order must be >= 1");
  if (a.dim != b.dim)
    throw ShapeError("lm_divergence: dim " + std::to_string(a.dim) + " vs " + std::to_string(b.dim));
  if (a.n_classes() != b.n_classes())
    throw std::invalid_argument("lm_divergence: class counts differ");
}

// moments[c][t] = (1/n) * sum over rows of class c of prod_j x_j^{t_j},
// which equals p(c) * E[prod | c].
std::vector<std::vector<double>> weighted_moments(const EmpiricalDomain& d,
                                                  const std::vector<std::vector<int>>& tuples,
                                                  int k) {
  const auto n_cls = static_cast<std::size_t>(d.n_classes());
  std::vector<std::vector<double>> moments(n_cls, std::vector<double>(tuples.size(), 0.0));
  std::vector<double> powers(d.dim * static_cast<std::size_t>(k + 1));
  const auto stride = static_cast<std::size_t>(k + 1);
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (std::size_t j = 0; j < d.dim; ++j) {
      const double x = d.points[r * d.dim + j];
      powers[j * stride] = 1.0;
      for (std::size_t e = 1; e < stride; ++e) powers[j * stride + e] = powers[j * stride + e - 1] * x;
    }
    auto& row = moments[static_cast<std::size_t>(d.labels[r])];
    for (std::size_t t = 0; t < tuples.size(); ++t) {
      double prod = 1.0;
      for (std::size_t j = 0; j < d.dim; ++j)
        prod *= powers[j * stride + static_cast<std::size_t>(tuples[t][j])];
      row[t] += prod;
    }
  }
  const double inv = 1.0 / static_cast<double>(d.size());
  for (auto& row : moments)
    for (double& v : row) v *= inv;
  return moments;
}

}  // namespace

double lm_divergence(const EmpiricalDomain& a, const EmpiricalDomain& b, int k) {
  check_pair(a, b, k);
  const auto tuples = exponent_tuples(a.dim, k);
  const auto ma = weighted_moments(a, tuples, k);
  const auto mb = weighted_moments(b, tuples, k);
  double total = 0.0;
  for (std::size_t c = 0; c < ma.size(); ++c)
    for (std::size_t t = 0; t < tuples.size(); ++t) total += std::abs(ma[c][t] - mb[c][t]);
  return total;
}

double lm_divergence_oracle(const EmpiricalDomain& a, const EmpiricalDomain& b, int k) {
  check_pair(a, b, k);
  if (exponent_tuple_count(a.dim, k) > 1e6)
    throw std::length_error("lm_divergence_oracle: more than 1e6 exponent tuples");

  std::vector<std::vector<int>> tuples;
  std::vector<int> current;
  std::function<void(int)> recurse = [&](int remaining) {
    if (current.size() + 1 == a.dim) {
      current.push_back(remaining);
      tuples.push_back(current);
      current.pop_back();
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      current.push_back(e);
      recurse(remaining - e);
      current.pop_back();
    }
  };
  recurse(k);

  auto weighted_mean = [](const EmpiricalDomain& d, int c, const std::vector<int>& t) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r = d.size(); r-- > 0;) {
      if (d.labels[r] != c) continue;
      double prod = 1.0;
      for (std::size_t j = 0; j < d.dim; ++j) prod *= std::pow(d.points[r * d.dim + j], t[j]);
      sum += prod;
      ++count;
    }
    if (count == 0) return 0.0;
    return d.class_probs[static_cast<std::size_t>(c)] * (sum / static_cast<double>(count));
  };

  double total = 0.0;
  for (const auto& t : tuples)
    for (int c = a.n_classes() - 1; c >= 0; --c)
      total += std::abs(weighted_mean(a, c, t) - weighted_mean(b, c, t));
  return total;
}

double eta_term(const BoundInputs& in) {
  const std::size_t n = in.alpha.size();
  if (n == 0 || in.n_samples.size() != n)
    throw std::invalid_argument("eta_term: alpha and n_samples must be non-empty and equal length");
  double alpha_sum = 0.0;
  for (double a : in.alpha) {
    if (!(a >= 0.0)) throw std::invalid_argument("eta_term: alpha must be non-negative");
    alpha_sum += a;
  }
  if (std::abs(alpha_sum - 1.0) > 1e-9) throw std::invalid_argument("eta_term: alpha must sum to 1");
  if (in.vc_dim < 1) throw std::invalid_argument("eta_term: VC dimension must be positive");
  if (!(in.delta > 0.0 && in.delta < 1.0)) throw std::invalid_argument("eta_term: delta must lie in (0, 1)");
  std::size_t m = 0;
  for (std::size_t s : in.n_samples) {
    if (s == 0) throw std::invalid_argument("eta_term: every source needs samples");
    m += s;
  }
  const double md = static_cast<double>(m), d = static_cast<double>(in.vc_dim);
  if (!(2.0 * md > d)) throw std::invalid_argument("eta_term: requires 2m > d");

  double weight = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    weight += in.alpha[i] * in.alpha[i] / (static_cast<double>(in.n_samples[i]) / md);
  const double complexity = 2.0 * d * (std::log(2.0 * md / d) + 1.0) + 2.0 * std::log(4.0 / in.delta);
  return 4.0 * std::sqrt(weight * complexity / md);
}

double weighted_empirical_error(std::span<const std::vector<int>> predictions,
                                std::span<const std::vector<int>> labels,
                                std::span<const double> alpha) {
  if (predictions.size() != labels.size() || predictions.size() != alpha.size())
    throw ShapeError("weighted_empirical_error: need one prediction/label vector and weight per source");
  double alpha_sum = 0.0;
  for (double a : alpha) {
    if (a < -1e-9) throw std::invalid_argument("weighted_empirical_error: negative weight");
    alpha_sum += a;
  }
  if (std::abs(alpha_sum - 1.0) > 1e-9)
    throw std::invalid_argument("weighted_empirical_error: weights must sum to 1");
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (predictions[i].size() != labels[i].size())
      throw ShapeError("weighted_empirical_error: length mismatch for source " + std::to_string(i));
    if (predictions[i].empty())
      throw std::invalid_argument("weighted_empirical_error: source " + std::to_string(i) + " is empty");
    std::size_t wrong = 0;
    for (std::size_t j = 0; j < labels[i].size(); ++j) wrong += predictions[i][j] != labels[i][j];
    total += alpha[i] * static_cast<double>(wrong) / static_cast<double>(labels[i].size());
  }
  return total;
}

double disagreement_ratio(std::span<const int> h1, std::span<const int> h2) {
  if (h1.size() != h2.size()) throw ShapeError("disagreement_ratio: length mismatch");
  if (h1.empty()) throw std::invalid_argument("disagreement_ratio: empty prediction vectors");
  std::size_t diff = 0;
  for (std::size_t i = 0; i < h1.size(); ++i) diff += h1[i] != h2[i];
  return static_cast<double>(diff) / static_cast<double>(h1.size());
}

}  // namespace enmdap
