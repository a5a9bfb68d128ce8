#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "enmdap/data.hpp"
#include "enmdap/model.hpp"
#include "enmdap/trainer.hpp"

namespace enmdap {

enum class Generator { kGaussian, kMoons };

/// One (variant, n) row of an ablation table.
struct AblationCell {
  Variant variant;
  std::size_t n_extractors;
};

/// Everything an experiment needs. Parsed from `key = value` lines; `#`
/// starts a comment. Unknown keys are rejected.
///
/// Data comes either from the synthetic generator (`generator`, `n_domains`,
/// ... with `target_domain` picking the target, default last) or from files
/// (`source_files` as a comma list plus `target_file`).
struct RunConfig {
  Generator generator = Generator::kGaussian;
  SyntheticSpec synthetic;
  std::optional<std::size_t> target_domain;
  std::vector<std::filesystem::path> source_files;
  std::optional<std::filesystem::path> target_file;

  ModelConfig model;  // hidden_dims and feature_dim; the rest is filled per run
  TrainConfig train;

  std::filesystem::path out_dir = "out";
  std::vector<AblationCell> ablate_cells;
};

/// Default hidden widths, feature width and training schedule used when a
/// config leaves them out.
RunConfig default_run_config();

/// Throws ConfigError carrying the key and 1-based line number.
RunConfig parse_config_text(std::string_view text);
RunConfig parse_config(const std::filesystem::path& path);

}  // namespace enmdap
