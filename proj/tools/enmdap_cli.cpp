#include <cstdint>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "enmdap/commands.hpp"
#include "enmdap/error.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Ensemble multi-source domain adaptation with pseudolabels"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, data, file_a, file_b;
  std::uint64_t seed = 0;
  std::size_t n_seeds = 0;
  int k_max = 0;

  auto* gen = app.add_subcommand("gen", "write one CSV per synthetic domain");
  gen->add_option("--config", config_path, "config file")->required();
  gen->add_option("--out", out_dir, "output directory (default: out_dir from the config)");

  auto* train = app.add_subcommand("train", "run both training stages for one seed");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--seed", seed, "training seed")->required();
  train->add_option("--out", out_dir, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "accuracy of a checkpoint on a labeled dataset");
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--data", data, "labeled dataset CSV")->required();

  auto* features = app.add_subcommand("features", "export concatenated extractor features as a dataset CSV");
  features->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  features->add_option("--data", data, "dataset CSV")->required();
  features->add_option("--out", out_dir, "output CSV")->required();

  auto* ablate = app.add_subcommand("ablate", "run every ablation cell over a seed range");
  ablate->add_option("--config", config_path, "config file")->required();
  ablate->add_option("--seeds", n_seeds, "number of seeds (seed, seed+1, ...)")->required()->check(CLI::PositiveNumber);
  ablate->add_option("--out", out_dir, "output directory")->required();

  auto* div = app.add_subcommand("divergence", "label-wise moment divergence between two datasets");
  div->add_option("--a", file_a, "first labeled dataset CSV")->required();
  div->add_option("--b", file_b, "second labeled dataset CSV")->required();
  div->add_option("--k-max", k_max, "highest moment order")->required()->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  std::cout << std::setprecision(std::numeric_limits<double>::max_digits10);
  try {
    if (gen->parsed()) {
      const auto cfg = enmdap::parse_config(config_path);
      const fs::path dir = out_dir.empty() ? cfg.out_dir : fs::path(out_dir);
      for (const auto& p : enmdap::cmd_gen(cfg, dir)) std::cout << p.string() << '\n';
    } else if (train->parsed()) {
      const auto cfg = enmdap::parse_config(config_path);
      const auto result = enmdap::cmd_train(cfg, seed, out_dir);
      std::cout << "variant=" << enmdap::variant_name(cfg.train.variant) << " seed=" << seed;
      if (result.target_accuracy) std::cout << " target_accuracy=" << *result.target_accuracy;
      std::cout << " pl_rate_final=" << result.pl_rate_final << '\n';
    } else if (eval->parsed()) {
      std::cout << enmdap::cmd_eval(checkpoint, data) << '\n';
    } else if (features->parsed()) {
      const auto ds = enmdap::cmd_features(checkpoint, data, out_dir);
      std::cout << ds.size() << " rows, dim " << ds.dim << '\n';
    } else if (ablate->parsed()) {
      const auto cfg = enmdap::parse_config(config_path);
      const auto rows = enmdap::cmd_ablate(cfg, n_seeds, out_dir);
      enmdap::write_ablation_csv(rows, std::cout);
    } else if (div->parsed()) {
      std::cout << "k,d_lm\n";
      for (const auto& [k, d] : enmdap::cmd_divergence(file_a, file_b, k_max))
        std::cout << k << ',' << d << '\n';
    }
  } catch (const enmdap::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
