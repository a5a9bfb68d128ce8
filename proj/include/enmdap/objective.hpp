#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "enmdap/model.hpp"
#include "enmdap/tensor.hpp"

namespace enmdap {

/// Pseudolabels for a target batch. `labels[j]` is meaningful only where
/// `included[j]`, which holds iff `confidences[j] > tau`.
struct PseudolabelAssignment {
  std::vector<int> labels;
  std::vector<bool> included;
  std::vector<double> confidences;

  std::size_t included_count() const;
};

/// Softmax each row, take the max probability as confidence and its argmax
/// (lowest index on ties) as the label; include the row iff confidence > tau.
PseudolabelAssignment assign_pseudolabels(const Tensor& logits, double tau);

struct LossWeights {
  double alpha = 0.1;  // weight of the moment matching terms
  double beta = 1.0;   // weight of the feature diversifying term
  int K = 2;           // highest moment order
  double tau = 0.9;    // pseudolabel confidence threshold

  void validate() const;
};

/// Features of one domain entering the moment matching loss. `include` masks
/// out rows that must not count (unconfident target rows).
struct DomainFeatures {
  Var features;  // [B x d]
  std::vector<int> labels;
  std::vector<bool> include;
};

/// Label-wise moment matching over all unordered domain pairs:
///
///   1/C * C(D,2)^-1 * sum_{k=1..K} sum_{pairs} sum_c
///       || mean_{y=c}(f^k) - mean'_{y=c}(f^k) ||_2
///
/// A (pair, class, order) term where either side has no included rows of
/// class c is dropped; the leading constants stay as they are.
Var lmm_loss(std::span<const DomainFeatures> domains, int n_classes, int K);

/// Label-agnostic variant: one moment mean per domain and order, normalized
/// by C(D,2)^-1 only.
Var marginal_moment_loss(std::span<const Var> domains, int K);

struct LabeledBatch {
  Tensor x;
  std::vector<int> y;
};

/// Mean over source domains of the batch-mean cross entropy of pair k.
Var lc_loss(const BoundModel& model, std::size_t k, std::span<const LabeledBatch> sources);
/// Same, on features already extracted by pair k's extractor.
Var lc_loss_from_features(const BoundModel& model, std::size_t k,
                          std::span<const Var> source_features,
                          std::span<const LabeledBatch> sources);

/// Extractor-classifier cross entropy, summed over extractors, averaged over
/// each batch and then over domains. `domains` holds every source batch and
/// the target batch.
Var fd_loss(const BoundModel& model, std::span<const Tensor> domains);
/// Same, with features[k][d] = extract(k, domain d) precomputed.
Var fd_loss_from_features(const BoundModel& model,
                          const std::vector<std::vector<Var>>& features);

/// Cross entropy of the final classifier on the concatenated features. The
/// features enter as constants, so only the final classifier gets gradients
/// no matter how the model was bound.
Var final_lc_loss(const BoundModel& model, std::span<const LabeledBatch> sources);

enum class MomentMatching { kLabelWise, kMarginal, kNone };

struct LossOptions {
  MomentMatching matching = MomentMatching::kLabelWise;
  bool diversify = true;  // include the extractor classifier term
};

/// One step's batches: one per source domain plus the unlabeled target.
struct StepBatches {
  std::vector<LabeledBatch> sources;
  Tensor target;
};

struct LossBreakdown {
  std::vector<double> lc;   // per pair
  std::vector<double> lmm;  // per pair, unweighted
  double fd = 0.0;          // unweighted
  double total = 0.0;
  std::vector<std::size_t> pl_included;  // per pair, target rows pseudolabeled
  std::size_t target_rows = 0;
};

struct Objective {
  Var total;
  LossBreakdown breakdown;
};

/// sum_k lc_k + alpha * sum_k lmm_k + beta * fd, where each pair computes its
/// own pseudolabels for its own moment matching term.
Objective total_loss(const BoundModel& model, const StepBatches& batches,
                     const LossWeights& weights, const LossOptions& options = {});

}  // namespace enmdap
