#include "enmdap/objective.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "enmdap/error.hpp"

namespace enmdap {

std::size_t PseudolabelAssignment::included_count() const {
  return static_cast<std::size_t>(std::count(included.begin(), included.end(), true));
}

PseudolabelAssignment assign_pseudolabels(const Tensor& logits, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0, 1]");
  const std::size_t rows = logits.rows(), cols = logits.cols();
  PseudolabelAssignment out;
  out.labels.resize(rows);
  out.included.resize(rows);
  out.confidences.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    double denom = 0.0;
    for (std::size_t c = 0; c < cols; ++c) denom += std::exp(logits.at(r, c) - logits.at(r, best));
    out.labels[r] = static_cast<int>(best);
    out.confidences[r] = 1.0 / denom;
    out.included[r] = out.confidences[r] > tau;
  }
  return out;
}

void LossWeights::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0, 1]");
}

namespace {

Var zero_scalar(Tape& tape) { return tape.leaf(Tensor::scalar(0.0)); }

Var sum_or_zero(Tape& tape, const std::vector<Var>& terms) {
  return terms.empty() ? zero_scalar(tape) : add_n(terms);
}

double pair_count(std::size_t domains) {
  return static_cast<double>(domains) * static_cast<double>(domains - 1) / 2.0;
}

}  // namespace

Var lmm_loss(std::span<const DomainFeatures> domains, int n_classes, int K) {
  if (domains.size() < 2) throw std::invalid_argument("lmm_loss needs at least 2 domains");
  if (K < 1) throw std::invalid_argument("lmm_loss: K must be >= 1");
  if (n_classes < 1) throw std::invalid_argument("lmm_loss: n_classes must be >= 1");
  Tape& tape = domains[0].features.tape();
  const auto n_dom = domains.size();
  const auto n_cls = static_cast<std::size_t>(n_classes);

  // Per-domain class masks; empty masks mark classes with no included rows.
  std::vector<std::vector<std::vector<bool>>> masks(n_dom);
  for (std::size_t d = 0; d < n_dom; ++d) {
    const auto& dom = domains[d];
    const std::size_t rows = dom.features.shape().at(0);
    if (dom.labels.size() != rows || dom.include.size() != rows)
      throw ShapeError("lmm_loss: labels/mask length disagrees with features of domain " +
                       std::to_string(d));
    masks[d].assign(n_cls, std::vector<bool>(rows, false));
    for (std::size_t r = 0; r < rows; ++r) {
      if (!dom.include[r]) continue;
      const int y = dom.labels[r];
      if (y < 0 || y >= n_classes)
        throw LabelError("lmm_loss: label " + std::to_string(y) + " at row " + std::to_string(r), r);
      masks[d][static_cast<std::size_t>(y)][r] = true;
    }
  }

  std::vector<Var> terms;
  for (int k = 1; k <= K; ++k) {
    std::vector<std::vector<std::optional<Var>>> means(n_dom, std::vector<std::optional<Var>>(n_cls));
    for (std::size_t d = 0; d < n_dom; ++d) {
      const Var powered = elementwise_pow(domains[d].features, k);
      for (std::size_t c = 0; c < n_cls; ++c)
        if (std::find(masks[d][c].begin(), masks[d][c].end(), true) != masks[d][c].end())
          means[d][c] = masked_mean_rows(powered, masks[d][c]);
    }
    for (std::size_t a = 0; a < n_dom; ++a)
      for (std::size_t b = a + 1; b < n_dom; ++b)
        for (std::size_t c = 0; c < n_cls; ++c)
          if (means[a][c] && means[b][c]) terms.push_back(l2_norm_diff(*means[a][c], *means[b][c]));
  }
  const double norm = 1.0 / (static_cast<double>(n_classes) * pair_count(n_dom));
  return scale(sum_or_zero(tape, terms), norm);
}

Var marginal_moment_loss(std::span<const Var> domains, int K) {
  if (domains.size() < 2) throw std::invalid_argument("marginal_moment_loss needs at least 2 domains");
  if (K < 1) throw std::invalid_argument("marginal_moment_loss: K must be >= 1");
  std::vector<Var> terms;
  for (int k = 1; k <= K; ++k) {
    std::vector<Var> means;
    for (const Var& f : domains)
      means.push_back(masked_mean_rows(elementwise_pow(f, k), std::vector<bool>(f.shape().at(0), true)));
    for (std::size_t a = 0; a < means.size(); ++a)
      for (std::size_t b = a + 1; b < means.size(); ++b) terms.push_back(l2_norm_diff(means[a], means[b]));
  }
  return scale(add_n(terms), 1.0 / pair_count(domains.size()));
}

Var lc_loss_from_features(const BoundModel& model, std::size_t k,
                          std::span<const Var> source_features,
                          std::span<const LabeledBatch> sources) {
  if (sources.empty()) throw std::invalid_argument("lc_loss needs at least one source batch");
  if (source_features.size() != sources.size())
    throw ShapeError("lc_loss: feature/batch count mismatch");
  std::vector<Var> per_domain;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (sources[i].y.empty())
      throw std::invalid_argument("lc_loss: empty batch for source " + std::to_string(i));
    per_domain.push_back(softmax_cross_entropy(model.classify_pair(k, source_features[i]), sources[i].y));
  }
  return scale(add_n(per_domain), 1.0 / static_cast<double>(sources.size()));
}

Var lc_loss(const BoundModel& model, std::size_t k, std::span<const LabeledBatch> sources) {
  std::vector<Var> feats;
  for (const auto& b : sources) {
    if (b.y.empty())
      throw std::invalid_argument("lc_loss: empty batch for source " + std::to_string(feats.size()));
    feats.push_back(model.extract(k, model.tape().leaf(b.x)));
  }
  return lc_loss_from_features(model, k, feats, sources);
}

Var fd_loss_from_features(const BoundModel& model,
                          const std::vector<std::vector<Var>>& features) {
  const std::size_t n = model.n_extractors();
  if (features.size() != n) throw ShapeError("fd_loss: need features for every extractor");
  const std::size_t n_dom = features.at(0).size();
  if (n_dom == 0) throw std::invalid_argument("fd_loss: no domains");
  std::vector<Var> terms;
  for (std::size_t d = 0; d < n_dom; ++d) {
    for (std::size_t k = 0; k < n; ++k) {
      const Var& f = features[k].at(d);
      const std::vector<int> which(f.shape().at(0), static_cast<int>(k));
      terms.push_back(softmax_cross_entropy(model.extractor_classify(f), which));
    }
  }
  return scale(add_n(terms), 1.0 / static_cast<double>(n_dom));
}

Var fd_loss(const BoundModel& model, std::span<const Tensor> domains) {
  std::vector<std::vector<Var>> feats(model.n_extractors());
  for (const Tensor& x : domains) {
    const Var leaf = model.tape().leaf(x);
    for (std::size_t k = 0; k < model.n_extractors(); ++k) feats[k].push_back(model.extract(k, leaf));
  }
  return fd_loss_from_features(model, feats);
}

Var final_lc_loss(const BoundModel& model, std::span<const LabeledBatch> sources) {
  if (sources.empty()) throw std::invalid_argument("final_lc_loss needs at least one source batch");
  Tape& tape = model.tape();
  std::vector<Var> per_domain;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (sources[i].y.empty())
      throw std::invalid_argument("final_lc_loss: empty batch for source " + std::to_string(i));
    const Var feat = tape.leaf(model.concat_features(tape.leaf(sources[i].x)).value());
    per_domain.push_back(softmax_cross_entropy(model.classify_final_features(feat), sources[i].y));
  }
  return scale(add_n(per_domain), 1.0 / static_cast<double>(sources.size()));
}

Objective total_loss(const BoundModel& model, const StepBatches& batches,
                     const LossWeights& weights, const LossOptions& options) {
  weights.validate();
  if (batches.sources.empty()) throw std::invalid_argument("total_loss needs source batches");
  Tape& tape = model.tape();
  const std::size_t n = model.n_extractors();
  const std::size_t n_src = batches.sources.size();
  const int n_classes = static_cast<int>(model.config().n_classes);

  std::vector<Var> inputs;
  for (const auto& b : batches.sources) inputs.push_back(tape.leaf(b.x));
  inputs.push_back(tape.leaf(batches.target));

  // features[k][d]; the target is the last domain.
  std::vector<std::vector<Var>> features(n);
  for (std::size_t k = 0; k < n; ++k)
    for (const Var& x : inputs) features[k].push_back(model.extract(k, x));

  Objective out{Var{}, {}};
  auto& br = out.breakdown;
  br.target_rows = batches.target.shape().at(0);
  br.lc.assign(n, 0.0);
  br.lmm.assign(n, 0.0);
  br.pl_included.assign(n, 0);

  const bool matching = options.matching != MomentMatching::kNone && weights.alpha > 0.0;
  std::vector<Var> lc_terms, lmm_terms;
  for (std::size_t k = 0; k < n; ++k) {
    const std::span<const Var> src_feats(features[k].data(), n_src);
    const Var lc = lc_loss_from_features(model, k, src_feats, batches.sources);
    br.lc[k] = lc.value().item();
    lc_terms.push_back(lc);
    if (!matching) continue;

    Var lmm;
    if (options.matching == MomentMatching::kLabelWise) {
      std::vector<DomainFeatures> doms;
      for (std::size_t i = 0; i < n_src; ++i)
        doms.push_back({features[k][i], batches.sources[i].y,
                        std::vector<bool>(batches.sources[i].y.size(), true)});
      const Var target_feat = features[k][n_src];
      auto pl = assign_pseudolabels(model.classify_pair(k, target_feat).value(), weights.tau);
      br.pl_included[k] = pl.included_count();
      doms.push_back({target_feat, std::move(pl.labels), std::move(pl.included)});
      lmm = lmm_loss(doms, n_classes, weights.K);
    } else {
      lmm = marginal_moment_loss(features[k], weights.K);
    }
    br.lmm[k] = lmm.value().item();
    lmm_terms.push_back(lmm);
  }

  std::vector<Var> total_terms{add_n(lc_terms)};
  if (!lmm_terms.empty()) total_terms.push_back(scale(add_n(lmm_terms), weights.alpha));
  if (options.diversify && weights.beta > 0.0) {
    const Var fd = fd_loss_from_features(model, features);
    br.fd = fd.value().item();
    total_terms.push_back(scale(fd, weights.beta));
  }
  out.total = add_n(total_terms);
  br.total = out.total.value().item();
  return out;
}

}  // namespace enmdap
