#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "enmdap/data.hpp"
#include "enmdap/model.hpp"
#include "enmdap/objective.hpp"
#include "enmdap/optim.hpp"

namespace enmdap {

/// Training recipes compared in the ablation study.
enum class Variant {
  kEnMDAP,          // ensemble, label-wise matching, extractor classifier
  kEnMDAP_R,        // ensemble without the extractor classifier
  kMDAP,            // single pair, label-wise matching
  kMDAP_L,          // single pair, marginal (label-agnostic) matching
  kSourceCombined,  // pooled-source classification, no adaptation
};

const char* variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view name);

using OptimizerConfig = std::variant<AdamConfig, SgdConfig>;

struct TrainConfig {
  Variant variant = Variant::kEnMDAP;
  std::size_t n_extractors = 2;
  LossWeights weights;
  OptimizerConfig optimizer = AdamConfig{};
  /// Learning rate for the final classifier; unset means the stage-1 rate.
  std::optional<double> stage2_lr;
  std::size_t epochs_stage1 = 20;
  std::size_t epochs_stage2 = 20;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;

  /// Rejects single-pair variants configured with n_extractors != 1.
  void validate() const;
  /// Loss weights after variant forcing (ENMDAP_R: beta = 0;
  /// SOURCE_COMBINED: alpha = beta = 0).
  LossWeights effective_weights() const;
  LossOptions loss_options() const;
};

/// N labeled sources and one target whose labels are withheld from training.
/// `target_eval` keeps the labels for evaluation only.
struct DomainSplit {
  std::vector<DomainDataset> sources;
  DomainDataset target;
  std::optional<DomainDataset> target_eval;
};

/// Uses domains[target_index] as the target and the rest, in order, as
/// sources. Checks that all domains agree on dim and class count.
DomainSplit make_split(std::vector<DomainDataset> domains, std::size_t target_index);

struct EpochMetrics {
  std::size_t epoch = 0;
  int stage = 1;
  Variant variant = Variant::kEnMDAP;
  double loss_total = 0.0;
  std::vector<double> loss_lc;   // per pair (stage 2: the final classifier)
  std::vector<double> loss_lmm;  // per pair, unweighted
  double loss_fd = 0.0;
  std::size_t pl_count = 0;
  double pl_rate = 0.0;
  std::optional<double> target_acc;
  double seconds = 0.0;
};

struct TrainingReport {
  std::vector<EpochMetrics> rows;
};

/// Metrics CSV:
/// epoch,stage,variant,loss_total,loss_lc,loss_lmm,loss_fd,pl_count,pl_rate,target_acc,seconds
/// loss_lc and loss_lmm are sums over pairs, so
/// loss_total = loss_lc + alpha * loss_lmm + beta * loss_fd.
void write_metrics_csv(const TrainingReport& report, std::ostream& out);

/// Trains extractors, pair classifiers and the extractor classifier with the
/// variant's combined loss. One batch per domain per step; an epoch ends when
/// the largest domain is exhausted and smaller domains reshuffle and wrap.
TrainingReport train_stage1(EnsembleModel& model, const DomainSplit& split,
                            const TrainConfig& cfg);

/// Trains only the final classifier on the concatenated, frozen features of
/// the source domains.
TrainingReport train_stage2(EnsembleModel& model, const DomainSplit& split,
                            const TrainConfig& cfg);

struct RunResult {
  EnsembleModel model;
  TrainingReport report;
  std::optional<double> target_accuracy;
  double pl_rate_final = 0.0;
};

/// Builds a model for the split (input width, class count and n from the
/// data and cfg; init seed derived from cfg.seed), runs both stages and
/// evaluates on split.target_eval when present.
RunResult run_variant(const DomainSplit& split, ModelConfig arch, const TrainConfig& cfg);

/// Fraction of rows whose `predict` matches the label. Throws for unlabeled or
/// empty datasets.
double evaluate(const EnsembleModel& model, const DomainDataset& labeled);

/// argmax of the pair classifiers' mean softmax; the stage-1 view of the
/// ensemble before the final classifier is trained.
std::vector<int> predict_pairs(const EnsembleModel& model, const Tensor& x);

}  // namespace enmdap
