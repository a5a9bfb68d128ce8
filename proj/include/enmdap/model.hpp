#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "enmdap/tensor.hpp"

namespace enmdap {

struct ModelConfig {
  std::size_t n_extractors = 1;
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t feature_dim = 1;
  std::size_t n_classes = 2;
  std::uint64_t init_seed = 0;

  void validate() const;
};

/// Affine map x * weight + bias with weight [in x out] and bias [out].
struct Linear {
  Tensor weight;
  Tensor bias;

  std::size_t in_dim() const { return weight.shape()[0]; }
  std::size_t out_dim() const { return weight.shape()[1]; }
};

/// MLP feature extractor: relu after every hidden layer, linear output layer.
struct Extractor {
  std::vector<Linear> layers;
};

/// n (extractor, pair classifier) pairs, the extractor classifier, and the
/// final classifier over the concatenated features.
struct EnsembleModel {
  ModelConfig config;
  std::vector<Extractor> extractors;
  std::vector<Linear> pair_classifiers;
  Linear extractor_classifier;
  Linear final_classifier;
};

/// Which parameters a training stage updates.
enum class ParamGroup {
  kStage1,  // extractors, pair classifiers, extractor classifier
  kFinal,   // final classifier only
  kAll,
  kNone,
};

struct NamedParam {
  std::string name;
  Tensor* tensor;
};
struct ConstNamedParam {
  std::string name;
  const Tensor* tensor;
};

/// Parameters in a fixed order: extractors (layer by layer, weight then bias),
/// pair classifiers, extractor classifier, final classifier.
std::vector<NamedParam> parameters(EnsembleModel& model, ParamGroup group = ParamGroup::kAll);
std::vector<ConstNamedParam> parameters(const EnsembleModel& model,
                                        ParamGroup group = ParamGroup::kAll);

/// Closed-form number of scalars in a model with this config.
std::size_t parameter_count(const ModelConfig& cfg);

/// Glorot-uniform weights from a stream seeded by cfg.init_seed; zero biases.
EnsembleModel init_model(const ModelConfig& cfg);

/// A model's parameters placed on a tape as leaves. Parameters in
/// `trainable` require grad; the rest are constants.
///
/// Extractor and pair indices are 0-based.
class BoundModel {
 public:
  BoundModel(Tape& tape, const EnsembleModel& model, ParamGroup trainable);
  /// Binds caller-supplied Vars, one per parameter in `parameters(model)`
  /// order. Used to differentiate with respect to arbitrary parameter leaves.
  BoundModel(const EnsembleModel& model, std::span<const Var> params);

  Tape& tape() const { return *tape_; }
  const ModelConfig& config() const { return config_; }
  std::size_t n_extractors() const { return config_.n_extractors; }

  /// Features of extractor k: [B x feature_dim].
  Var extract(std::size_t k, Var x) const;
  /// Logits of pair classifier k: [B x n_classes].
  Var classify_pair(std::size_t k, Var feat) const;
  /// Logits over extractors: [B x n_extractors].
  Var extractor_classify(Var feat) const;
  /// Final classifier on concat(extract(0, x), ..., extract(n-1, x)).
  Var final_classify(Var x) const;
  /// Concatenated features [B x n * feature_dim].
  Var concat_features(Var x) const;
  /// Final classifier applied to already concatenated features.
  Var classify_final_features(Var feat) const;

  /// Bound parameters in `parameters()` order.
  const std::vector<Var>& vars() const { return all_; }

 private:
  struct BoundLinear {
    Var weight, bias;
  };
  void bind(const EnsembleModel& model, std::span<const Var> params);
  static Var apply(const BoundLinear& layer, Var x);
  void check_index(std::size_t k) const;

  Tape* tape_ = nullptr;
  ModelConfig config_;
  std::vector<std::vector<BoundLinear>> extractors_;
  std::vector<BoundLinear> pair_classifiers_;
  BoundLinear extractor_classifier_;
  BoundLinear final_classifier_;
  std::vector<Var> all_;
};

/// Final-classifier logits for a plain feature matrix, no gradients.
Tensor final_logits(const EnsembleModel& model, const Tensor& x);
/// Row-wise argmax with ties resolved to the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);
/// argmax of the final classifier's logits.
std::vector<int> predict(const EnsembleModel& model, const Tensor& x);

/// FNV-1a hash over the bit patterns of every value in a group, in
/// `parameters()` order. Any change to any parameter changes it.
std::uint64_t parameter_checksum(const EnsembleModel& model, ParamGroup group);

// Checkpoint:
//   n=<n>,input_dim=<d>,feature_dim=<f>,classes=<C>
//   <name> <shape> v1 v2 ...      (one line per parameter tensor)
// Shapes are written as AxB; hidden widths are recovered from the
// extractor layer shapes.
void save_checkpoint(const EnsembleModel& model, std::ostream& out);
void save_checkpoint(const EnsembleModel& model, const std::filesystem::path& path);
EnsembleModel load_checkpoint(std::istream& in);
EnsembleModel load_checkpoint(const std::filesystem::path& path);

}  // namespace enmdap
