#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "enmdap/analysis.hpp"
#include "enmdap/rng.hpp"

using namespace enmdap;

namespace {

EmpiricalDomain domain1d(std::vector<double> xs, std::vector<int> labels, int classes = 1) {
  return EmpiricalDomain(1, std::move(xs), std::move(labels), classes);
}

EmpiricalDomain random_domain(SplitMix64& rng, std::size_t dim, int classes, std::size_t n) {
  std::vector<double> pts(n * dim);
  std::vector<int> labels(n);
  for (double& v : pts) v = rng.uniform(-2, 2);
  for (int& l : labels) l = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  return EmpiricalDomain(dim, std::move(pts), std::move(labels), classes);
}

BoundInputs bound(std::vector<double> alpha, std::vector<std::size_t> n, std::size_t d, double delta) {
  return BoundInputs{std::move(alpha), std::move(n), d, delta};
}

}  // namespace

TEST_CASE("exponent tuples") {
  const auto t = exponent_tuples(3, 2);
  CHECK(t.size() == 6);
  CHECK(exponent_tuple_count(3, 2) == 6.0);
  const std::vector<std::vector<int>> expect = {{0, 0, 2}, {0, 1, 1}, {0, 2, 0},
                                                {1, 0, 1}, {1, 1, 0}, {2, 0, 0}};
  CHECK(t == expect);
  for (std::size_t dim = 1; dim <= 4; ++dim)
    for (int k = 1; k <= 4; ++k) {
      const auto tuples = exponent_tuples(dim, k);
      CHECK(static_cast<double>(tuples.size()) == exponent_tuple_count(dim, k));
      for (std::size_t i = 0; i < tuples.size(); ++i) {
        int sum = 0;
        for (int e : tuples[i]) sum += e;
        CHECK(sum == k);
        if (i > 0) CHECK(tuples[i - 1] < tuples[i]);
      }
    }
}

TEST_CASE("empirical domain") {
  const EmpiricalDomain d(1, {1, 2, 3, 4}, {0, 1, 1, 1}, 3);
  CHECK(d.class_probs == std::vector<double>{0.25, 0.75, 0.0});
  CHECK_THROWS(EmpiricalDomain(2, {1, 2, 3}, {0}, 2));
  CHECK_THROWS(EmpiricalDomain(1, {1}, {2}, 2));
  SplitMix64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto r = random_domain(rng, 2, 4, 1 + rng.below(30));
    double s = 0.0;
    for (double p : r.class_probs) s += p;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("lm_divergence hand values") {
  const auto a = domain1d({0, 2}, {0, 0}), b = domain1d({3}, {0});
  CHECK(lm_divergence(a, b, 1) == doctest::Approx(2.0));
  CHECK(lm_divergence(a, b, 2) == doctest::Approx(7.0));
  const EmpiricalDomain p(2, {1, 2}, {0}, 1), q(2, {0, 0}, {0}, 1);
  CHECK(lm_divergence(p, q, 1) == doctest::Approx(3.0));
  // Delta_2 = {(0,2),(1,1),(2,0)}: |4| + |2| + |1|.
  CHECK(lm_divergence(p, q, 2) == doctest::Approx(7.0));
  for (int k = 1; k <= 4; ++k) CHECK(lm_divergence(a, a, k) == 0.0);
}

TEST_CASE("lm_divergence missing classes") {
  // Class 1 exists only in a: its term is p_a(1) * mean = 0.5 * 4.
  const auto a = domain1d({1, 4}, {0, 1}, 3), b = domain1d({1}, {0}, 3);
  CHECK(lm_divergence(a, b, 1) == doctest::Approx(std::abs(0.5 * 1 - 1.0) + 0.5 * 4));
  CHECK(lm_divergence(b, a, 1) == lm_divergence(a, b, 1));
}

TEST_CASE("lm_divergence input checks") {
  const auto a = domain1d({1}, {0});
  const EmpiricalDomain two(2, {1, 1}, {0}, 1);
  CHECK_THROWS(lm_divergence(a, two, 1));
  CHECK_THROWS(lm_divergence(a, a, 0));
  CHECK_THROWS(lm_divergence(a, domain1d({1}, {0}, 2), 1));
  CHECK_THROWS(lm_divergence_oracle(EmpiricalDomain(60, std::vector<double>(60), {0}, 1),
                                    EmpiricalDomain(60, std::vector<double>(60), {0}, 1), 6));
}

TEST_CASE("lm_divergence agrees with the oracle") {
  SplitMix64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dim = 1 + rng.below(4);
    const int classes = 1 + static_cast<int>(rng.below(3));
    const int k = 1 + static_cast<int>(rng.below(3));
    const auto a = random_domain(rng, dim, classes, 1 + rng.below(50));
    const auto b = random_domain(rng, dim, classes, 1 + rng.below(50));
    const double fast = lm_divergence(a, b, k), slow = lm_divergence_oracle(a, b, k);
    CHECK(std::abs(fast - slow) <= 1e-10 * std::max(1.0, std::abs(slow)));
  }
}

TEST_CASE("single-point domains reduce to monomial differences") {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t dim = 1 + rng.below(3);
    const int k = 1 + static_cast<int>(rng.below(3));
    std::vector<double> x(dim), y(dim);
    for (std::size_t j = 0; j < dim; ++j) x[j] = rng.uniform(-2, 2), y[j] = rng.uniform(-2, 2);
    double expect = 0.0;
    for (const auto& t : exponent_tuples(dim, k)) {
      double px = 1.0, py = 1.0;
      for (std::size_t j = 0; j < dim; ++j) px *= std::pow(x[j], t[j]), py *= std::pow(y[j], t[j]);
      expect += std::abs(px - py);
    }
    const EmpiricalDomain a(dim, x, {0}, 1), b(dim, y, {0}, 1);
    CHECK(lm_divergence(a, b, k) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("lm_divergence is an L1 distance") {
  SplitMix64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dim = 1 + rng.below(3);
    const int classes = 1 + static_cast<int>(rng.below(3));
    const int k = 1 + static_cast<int>(rng.below(3));
    const auto a = random_domain(rng, dim, classes, 1 + rng.below(20));
    const auto b = random_domain(rng, dim, classes, 1 + rng.below(20));
    const auto c = random_domain(rng, dim, classes, 1 + rng.below(20));
    const double ab = lm_divergence(a, b, k), ba = lm_divergence(b, a, k);
    CHECK(ab >= 0.0);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(lm_divergence(a, a, k) == 0.0);
    CHECK(ab <= lm_divergence(a, c, k) + lm_divergence(c, b, k) + 1e-12);
  }
}

TEST_CASE("balanced domains scale the moment gap by 1/C") {
  // Two classes, one point each: p(c) = 1/2 on both sides.
  const auto a = domain1d({1, 5}, {0, 1}, 2), b = domain1d({2, 3}, {0, 1}, 2);
  CHECK(lm_divergence(a, b, 1) == doctest::Approx(0.5 * (1.0 + 2.0)));
  CHECK(lm_divergence(a, b, 2) == doctest::Approx(0.5 * (3.0 + 16.0)));
}

TEST_CASE("eta_term") {
  const double eta = eta_term(bound({1.0}, {1000}, 10, 0.1));
  const double oracle = 4.0 * std::sqrt((20.0 * (std::log(200.0) + 1.0) + 2.0 * std::log(40.0)) / 1000.0);
  CHECK(eta == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(eta == doctest::Approx(1.4606).epsilon(1e-4));

  double prev = eta;
  for (std::size_t m = 2000; m <= 64000; m *= 2) {
    const double e = eta_term(bound({1.0}, {m}, 10, 0.1));
    CHECK(e < prev);
    prev = e;
  }
  prev = eta;
  for (double delta = 0.05; delta > 1e-8; delta /= 10) {
    const double e = eta_term(bound({1.0}, {1000}, 10, delta));
    CHECK(e > prev);
    prev = e;
  }

  CHECK_THROWS(eta_term(bound({1.0}, {5}, 10, 0.1)));
  CHECK_THROWS(eta_term(bound({0.5, 0.6}, {10, 10}, 1, 0.1)));
  CHECK_THROWS(eta_term(bound({1.0}, {100}, 1, 1.0)));
  CHECK_THROWS(eta_term(bound({1.0}, {100, 100}, 1, 0.1)));
  CHECK_THROWS(eta_term(bound({1.0}, {0}, 1, 0.1)));
}

TEST_CASE("eta_term is minimized at alpha = beta") {
  const std::vector<std::size_t> n = {200, 300, 500};
  const double at_beta = eta_term(bound({0.2, 0.3, 0.5}, n, 5, 0.05));
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; i + j <= 100; ++j) {
      const double a0 = i / 100.0, a1 = j / 100.0, a2 = (100 - i - j) / 100.0;
      const double e = eta_term(bound({a0, a1, a2}, n, 5, 0.05));
      CHECK(e >= at_beta - 1e-12);
      best = std::min(best, e);
    }
  CHECK(best == doctest::Approx(at_beta).epsilon(1e-12));
}

TEST_CASE("weighted_empirical_error") {
  const std::vector<std::vector<int>> labels = {{0, 1, 0, 1, 0}, {1, 1, 1, 1, 1}};
  const std::vector<std::vector<int>> preds = {{1, 1, 0, 1, 0}, {0, 0, 1, 1, 1}};
  const std::vector<double> half = {0.5, 0.5}, first = {1.0, 0.0};
  CHECK(weighted_empirical_error(preds, labels, half) == doctest::Approx(0.3));
  CHECK(weighted_empirical_error(preds, labels, first) == 0.2);
  CHECK(weighted_empirical_error(labels, labels, half) == 0.0);
  const std::vector<double> off = {0.5, 0.6};
  CHECK_THROWS(weighted_empirical_error(preds, labels, off));
  const std::vector<std::vector<int>> short_preds = {{1, 1}, {0, 0, 1, 1, 1}};
  CHECK_THROWS(weighted_empirical_error(short_preds, labels, half));
  const std::vector<double> one = {1.0};
  CHECK_THROWS(weighted_empirical_error(preds, labels, one));
}

TEST_CASE("disagreement_ratio") {
  const std::vector<int> a = {0, 1, 0, 1, 1, 0, 0, 1, 1, 0};
  std::vector<int> b = a;
  CHECK(disagreement_ratio(a, b) == 0.0);
  for (int i : {1, 4, 7}) b[i] = 1 - b[i];
  CHECK(disagreement_ratio(a, b) == doctest::Approx(0.3));
  std::vector<int> flip = a;
  for (int& v : flip) v = 1 - v;
  CHECK(disagreement_ratio(a, flip) == 1.0);
  CHECK_THROWS(disagreement_ratio(std::vector<int>{}, std::vector<int>{}));
  CHECK_THROWS(disagreement_ratio(a, std::vector<int>{0}));

  SplitMix64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    std::vector<int> h1(n), h2(n), h3(n);
    for (std::size_t i = 0; i < n; ++i) {
      h1[i] = static_cast<int>(rng.below(3));
      h2[i] = static_cast<int>(rng.below(3));
      h3[i] = static_cast<int>(rng.below(3));
    }
    CHECK(disagreement_ratio(h1, h2) <= disagreement_ratio(h1, h3) + disagreement_ratio(h3, h2) + 1e-15);
  }
}
