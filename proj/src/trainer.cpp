#include "enmdap/trainer.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "enmdap/error.hpp"
#include "enmdap/rng.hpp"

namespace enmdap {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kEnMDAP: return "ENMDAP";
    case Variant::kEnMDAP_R: return "ENMDAP_R";
    case Variant::kMDAP: return "MDAP";
    case Variant::kMDAP_L: return "MDAP_L";
    case Variant::kSourceCombined: return "SOURCE_COMBINED";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (Variant v : {Variant::kEnMDAP, Variant::kEnMDAP_R, Variant::kMDAP, Variant::kMDAP_L,
                    Variant::kSourceCombined})
    if (name == variant_name(v)) return v;
  return std::nullopt;
}

namespace {

bool single_pair(Variant v) {
  return v == Variant::kMDAP || v == Variant::kMDAP_L || v == Variant::kSourceCombined;
}

double learning_rate(const OptimizerConfig& opt) {
  return std::visit([](const auto& o) { return o.lr; }, opt);
}

}  // namespace

void TrainConfig::validate() const {
  weights.validate();
  if (n_extractors < 1) throw std::invalid_argument("n_extractors must be >= 1");
  if (single_pair(variant) && n_extractors != 1)
    throw std::invalid_argument(std::string("variant ") + variant_name(variant) +
                                " requires n_extractors = 1, got " +
                                std::to_string(n_extractors));
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate(optimizer) > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (stage2_lr && !(*stage2_lr > 0.0)) throw std::invalid_argument("stage2_lr must be > 0");
  if (const auto* adam = std::get_if<AdamConfig>(&optimizer)) {
    if (!(adam->beta1 >= 0.0 && adam->beta1 < 1.0)) throw std::invalid_argument("adam beta1 must lie in [0, 1)");
    if (!(adam->beta2 >= 0.0 && adam->beta2 < 1.0)) throw std::invalid_argument("adam beta2 must lie in [0, 1)");
    if (!(adam->eps > 0.0)) throw std::invalid_argument("adam eps must be > 0");
  }
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (variant == Variant::kEnMDAP_R) w.beta = 0.0;
  if (variant == Variant::kSourceCombined) w.alpha = w.beta = 0.0;
  return w;
}

LossOptions TrainConfig::loss_options() const {
  LossOptions opt;
  switch (variant) {
    case Variant::kEnMDAP: break;
    case Variant::kEnMDAP_R: opt.diversify = false; break;
    case Variant::kMDAP: opt.diversify = false; break;
    case Variant::kMDAP_L:
      opt.matching = MomentMatching::kMarginal;
      opt.diversify = false;
      break;
    case Variant::kSourceCombined:
      opt.matching = MomentMatching::kNone;
      opt.diversify = false;
      break;
  }
  return opt;
}

DomainSplit make_split(std::vector<DomainDataset> domains, std::size_t target_index) {
  if (domains.size() < 2) throw std::invalid_argument("need at least one source and one target");
  if (target_index >= domains.size())
    throw std::out_of_range("target index " + std::to_string(target_index) + " out of range");
  for (const auto& d : domains) {
    d.validate();
    if (d.dim != domains[0].dim)
      throw ShapeError("domain '" + d.domain_name + "' has dim " + std::to_string(d.dim) +
                       ", expected " + std::to_string(domains[0].dim));
    if (d.n_classes != domains[0].n_classes)
      throw std::invalid_argument("domain '" + d.domain_name + "' disagrees on the class count");
  }
  DomainSplit split;
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (i == target_index) continue;
    if (!domains[i].labeled())
      throw std::invalid_argument("source domain '" + domains[i].domain_name + "' is unlabeled");
    split.sources.push_back(domains[i]);
  }
  DomainDataset& target = domains[target_index];
  if (target.labeled()) split.target_eval = target;
  split.target = target.without_labels();
  return split;
}

void write_metrics_csv(const TrainingReport& report, std::ostream& out) {
  std::ostringstream line;
  line << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "epoch,stage,variant,loss_total,loss_lc,loss_lmm,loss_fd,pl_count,pl_rate,target_acc,seconds\n";
  for (const auto& r : report.rows) {
    double lc = 0.0, lmm = 0.0;
    for (double v : r.loss_lc) lc += v;
    for (double v : r.loss_lmm) lmm += v;
    line.str("");
    line << r.epoch << ',' << r.stage << ',' << variant_name(r.variant) << ',' << r.loss_total
         << ',' << lc << ',' << lmm << ',' << r.loss_fd << ',' << r.pl_count << ',' << r.pl_rate
         << ',';
    if (r.target_acc) line << *r.target_acc;
    line << ',' << r.seconds;
    out << line.str() << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kBatchStream = 0x3000;
constexpr std::uint64_t kInitStream = 0x4000;

/// Per-domain batch cursor that reshuffles with a fresh seed on every pass.
class DomainCursor {
 public:
  DomainCursor(const DomainDataset& ds, std::size_t batch_size, std::uint64_t seed)
      : ds_(&ds), batch_size_(batch_size), seed_(seed) {
    if (ds.size() == 0) throw std::invalid_argument("domain '" + ds.domain_name + "' is empty");
  }

  const std::vector<std::size_t>& next() {
    if (pos_ == batches_.size()) {
      batches_ = batcher(*ds_, batch_size_, splitmix64_mix(seed_ + pass_++));
      pos_ = 0;
    }
    return batches_[pos_++];
  }

  std::size_t batches_per_pass() const { return (ds_->size() + batch_size_ - 1) / batch_size_; }

 private:
  const DomainDataset* ds_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::uint64_t pass_ = 0;
  std::vector<std::vector<std::size_t>> batches_;
  std::size_t pos_ = 0;
};

std::uint64_t cursor_seed(std::uint64_t seed, int stage, std::size_t domain) {
  return derive_stream(seed, kBatchStream + static_cast<std::uint64_t>(stage) * 0x100 + domain).next();
}

/// Gradients for the parameters of `group`, zero-filled where the tape has
/// none.
std::vector<Tensor> group_grads(const EnsembleModel& model, const BoundModel& bound,
                                ParamGroup group) {
  const auto all = parameters(model);
  const auto want = parameters(model, group);
  std::vector<Tensor> grads;
  std::size_t w = 0;
  for (std::size_t i = 0; i < all.size() && w < want.size(); ++i) {
    if (all[i].tensor != want[w].tensor) continue;
    const Tensor* g = bound.vars()[i].grad();
    grads.push_back(g ? *g : Tensor(all[i].tensor->shape()));
    ++w;
  }
  return grads;
}

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (const auto* adam = std::get_if<AdamConfig>(&cfg_))
      adam_step(params, grads, adam_state_, *adam);
    else
      sgd_step(params, grads, std::get<SgdConfig>(cfg_).lr);
  }

 private:
  OptimizerConfig cfg_;
  AdamState adam_state_;
};

std::vector<Tensor*> group_tensors(EnsembleModel& model, ParamGroup group) {
  std::vector<Tensor*> out;
  for (auto& p : parameters(model, group)) out.push_back(p.tensor);
  return out;
}

std::string describe(const LossBreakdown& br) {
  std::ostringstream out;
  out << "total=" << br.total;
  for (std::size_t k = 0; k < br.lc.size(); ++k)
    out << " lc[" << k << "]=" << br.lc[k] << " lmm[" << k << "]=" << br.lmm[k];
  out << " fd=" << br.fd;
  return out.str();
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

/// Pseudolabel inclusion on the whole target set, summed over pairs.
std::size_t count_pseudolabels(const EnsembleModel& model, const DomainDataset& target, double tau) {
  Tape tape;
  BoundModel bound(tape, model, ParamGroup::kNone);
  const Var x = tape.leaf(target.all_features());
  std::size_t total = 0;
  for (std::size_t k = 0; k < bound.n_extractors(); ++k)
    total += assign_pseudolabels(bound.classify_pair(k, bound.extract(k, x)).value(), tau).included_count();
  return total;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

std::vector<int> predict_pairs(const EnsembleModel& model, const Tensor& x) {
  Tape tape;
  BoundModel bound(tape, model, ParamGroup::kNone);
  const Var xv = tape.leaf(x);
  const std::size_t rows = x.rows(), classes = model.config.n_classes;
  Tensor mean_probs({rows, classes});
  for (std::size_t k = 0; k < bound.n_extractors(); ++k) {
    const Tensor logits = bound.classify_pair(k, bound.extract(k, xv)).value();
    for (std::size_t r = 0; r < rows; ++r) {
      double shift = logits.at(r, 0);
      for (std::size_t c = 1; c < classes; ++c) shift = std::max(shift, logits.at(r, c));
      double denom = 0.0;
      for (std::size_t c = 0; c < classes; ++c) denom += std::exp(logits.at(r, c) - shift);
      for (std::size_t c = 0; c < classes; ++c)
        mean_probs.at(r, c) += std::exp(logits.at(r, c) - shift) / denom;
    }
  }
  return argmax_rows(mean_probs);
}

TrainingReport train_stage1(EnsembleModel& model, const DomainSplit& split,
                            const TrainConfig& cfg) {
  cfg.validate();
  if (split.sources.empty()) throw std::invalid_argument("stage 1 needs at least one source domain");
  if (model.config.n_extractors != cfg.n_extractors)
    throw std::invalid_argument("model has " + std::to_string(model.config.n_extractors) +
                                " extractors, config asks for " + std::to_string(cfg.n_extractors));
  const LossWeights weights = cfg.effective_weights();
  const LossOptions options = cfg.loss_options();
  const bool pseudolabels = options.matching == MomentMatching::kLabelWise && weights.alpha > 0.0;

  std::vector<DomainCursor> cursors;
  std::size_t steps = 0;
  for (std::size_t d = 0; d <= split.sources.size(); ++d) {
    const DomainDataset& ds = d < split.sources.size() ? split.sources[d] : split.target;
    cursors.emplace_back(ds, cfg.batch_size, cursor_seed(cfg.seed, 1, d));
    steps = std::max(steps, cursors.back().batches_per_pass());
  }

  Optimizer optimizer(cfg.optimizer);
  const auto params = group_tensors(model, ParamGroup::kStage1);
  const std::size_t n = cfg.n_extractors;
  TrainingReport report;
  for (std::size_t epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
    const auto start = Clock::now();
    EpochMetrics row;
    row.epoch = epoch;
    row.stage = 1;
    row.variant = cfg.variant;
    row.loss_lc.assign(n, 0.0);
    row.loss_lmm.assign(n, 0.0);

    for (std::size_t step = 0; step < steps; ++step) {
      StepBatches batches;
      for (std::size_t d = 0; d < split.sources.size(); ++d) {
        const auto& idx = cursors[d].next();
        batches.sources.push_back({split.sources[d].gather(idx), split.sources[d].gather_labels(idx)});
      }
      batches.target = split.target.gather(cursors.back().next());

      Tape tape;
      BoundModel bound(tape, model, ParamGroup::kStage1);
      Objective obj = total_loss(bound, batches, weights, options);
      if (!std::isfinite(obj.breakdown.total))
        throw NonFiniteLossError("non-finite stage-1 loss at epoch " + std::to_string(epoch) +
                                 " step " + std::to_string(step) + ": " + describe(obj.breakdown));
      tape.backward(obj.total);
      optimizer.step(params, group_grads(model, bound, ParamGroup::kStage1));

      row.loss_total += obj.breakdown.total;
      for (std::size_t k = 0; k < n; ++k) {
        row.loss_lc[k] += obj.breakdown.lc[k];
        row.loss_lmm[k] += obj.breakdown.lmm[k];
      }
      row.loss_fd += obj.breakdown.fd;
    }

    const double inv = 1.0 / static_cast<double>(steps);
    row.loss_total *= inv;
    row.loss_fd *= inv;
    for (std::size_t k = 0; k < n; ++k) {
      row.loss_lc[k] *= inv;
      row.loss_lmm[k] *= inv;
    }
    if (pseudolabels) {
      row.pl_count = count_pseudolabels(model, split.target, weights.tau);
      row.pl_rate = static_cast<double>(row.pl_count) /
                    static_cast<double>(n * split.target.size());
    }
    if (split.target_eval)
      row.target_acc = accuracy(predict_pairs(model, split.target_eval->all_features()),
                                *split.target_eval->labels);
    row.seconds = seconds_since(start);
    report.rows.push_back(std::move(row));
  }
  return report;
}

TrainingReport train_stage2(EnsembleModel& model, const DomainSplit& split,
                            const TrainConfig& cfg) {
  cfg.validate();
  if (split.sources.empty()) throw std::invalid_argument("stage 2 needs at least one source domain");

  std::vector<DomainCursor> cursors;
  std::size_t steps = 0;
  for (std::size_t d = 0; d < split.sources.size(); ++d) {
    cursors.emplace_back(split.sources[d], cfg.batch_size, cursor_seed(cfg.seed, 2, d));
    steps = std::max(steps, cursors.back().batches_per_pass());
  }

  OptimizerConfig opt = cfg.optimizer;
  if (cfg.stage2_lr) std::visit([&](auto& o) { o.lr = *cfg.stage2_lr; }, opt);
  Optimizer optimizer(opt);
  const auto params = group_tensors(model, ParamGroup::kFinal);
  TrainingReport report;
  for (std::size_t epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
    const auto start = Clock::now();
    double loss = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<LabeledBatch> batches;
      for (std::size_t d = 0; d < split.sources.size(); ++d) {
        const auto& idx = cursors[d].next();
        batches.push_back({split.sources[d].gather(idx), split.sources[d].gather_labels(idx)});
      }
      Tape tape;
      BoundModel bound(tape, model, ParamGroup::kFinal);
      const Var l = final_lc_loss(bound, batches);
      const double value = l.value().item();
      if (!std::isfinite(value))
        throw NonFiniteLossError("non-finite stage-2 loss at epoch " + std::to_string(epoch) +
                                 " step " + std::to_string(step) + ": final_lc=" + std::to_string(value));
      tape.backward(l);
      optimizer.step(params, group_grads(model, bound, ParamGroup::kFinal));
      loss += value;
    }
    EpochMetrics row;
    row.epoch = epoch;
    row.stage = 2;
    row.variant = cfg.variant;
    row.loss_total = loss / static_cast<double>(steps);
    row.loss_lc = {row.loss_total};
    if (split.target_eval) row.target_acc = evaluate(model, *split.target_eval);
    row.seconds = seconds_since(start);
    report.rows.push_back(std::move(row));
  }
  return report;
}

RunResult run_variant(const DomainSplit& split, ModelConfig arch, const TrainConfig& cfg) {
  cfg.validate();
  arch.n_extractors = cfg.n_extractors;
  arch.input_dim = split.target.dim;
  arch.n_classes = static_cast<std::size_t>(split.target.n_classes);
  arch.init_seed = derive_stream(cfg.seed, kInitStream).next();

  RunResult result{init_model(arch), {}, std::nullopt, 0.0};
  auto stage1 = train_stage1(result.model, split, cfg);
  auto stage2 = train_stage2(result.model, split, cfg);
  result.report.rows = std::move(stage1.rows);
  result.report.rows.insert(result.report.rows.end(), std::make_move_iterator(stage2.rows.begin()),
                            std::make_move_iterator(stage2.rows.end()));
  for (const auto& r : result.report.rows)
    if (r.stage == 1) result.pl_rate_final = r.pl_rate;
  if (split.target_eval) result.target_accuracy = evaluate(result.model, *split.target_eval);
  return result;
}

double evaluate(const EnsembleModel& model, const DomainDataset& labeled) {
  if (!labeled.labeled())
    throw std::invalid_argument("evaluate: domain '" + labeled.domain_name + "' has no labels");
  if (labeled.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  return accuracy(predict(model, labeled.all_features()), *labeled.labels);
}

}  // namespace enmdap
