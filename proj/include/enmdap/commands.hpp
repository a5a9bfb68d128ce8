#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "enmdap/config.hpp"
#include "enmdap/trainer.hpp"

namespace enmdap {

/// Domains named by a config: generated, or loaded from its files (sources
/// first, target last).
std::vector<DomainDataset> load_domains(const RunConfig& cfg);
/// The source/target split for a config.
DomainSplit load_split(const RunConfig& cfg);

/// Writes one dataset CSV per domain into `out_dir` (<domain>.csv). Returns
/// the written paths.
std::vector<std::filesystem::path> cmd_gen(const RunConfig& cfg,
                                           const std::filesystem::path& out_dir);

/// Runs both training stages and writes metrics.csv, model.ckpt and
/// summary.json into `out_dir`.
RunResult cmd_train(const RunConfig& cfg, std::uint64_t seed,
                    const std::filesystem::path& out_dir);

/// Accuracy of a checkpoint on a labeled dataset file.
double cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data);

/// Concatenated extractor features of a checkpoint on a dataset, written as a
/// dataset CSV (dim = n * feature_dim, labels kept when present).
DomainDataset cmd_features(const std::filesystem::path& checkpoint,
                           const std::filesystem::path& data, const std::filesystem::path& out);

struct AblationRow {
  Variant variant;
  std::size_t n_extractors;
  double mean_acc;
  double std_acc;  // sample standard deviation; 0 for a single seed
  std::vector<std::uint64_t> seeds;
  std::vector<double> accuracies;
};

/// Runs every ablation cell for seeds cfg.train.seed + 0 .. + (n_seeds-1).
/// Cells run in parallel when OpenMP is available; rows come back in cell
/// order. Per-cell metrics land in out_dir/cells/, the table in
/// out_dir/ablation.csv.
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, std::size_t n_seeds,
                                    const std::filesystem::path& out_dir);

/// Table CSV: variant,n,mean_acc,std_acc,seeds (seeds separated by ';').
void write_ablation_csv(const std::vector<AblationRow>& rows, std::ostream& out);

/// d_LM,k for k = 1..k_max between two labeled dataset files.
std::vector<std::pair<int, double>> cmd_divergence(const std::filesystem::path& a,
                                                   const std::filesystem::path& b, int k_max);

}  // namespace enmdap
