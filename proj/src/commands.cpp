#include "enmdap/commands.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "enmdap/analysis.hpp"

namespace enmdap {

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string summary_json(const RunResult& result, Variant variant, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["variant"] = variant_name(variant);
  j["seed"] = seed;
  if (result.target_accuracy)
    j["target_accuracy"] = *result.target_accuracy;
  else
    j["target_accuracy"] = nullptr;
  j["pl_rate_final"] = result.pl_rate_final;
  return j.dump(2) + "\n";
}

std::string cell_dir_name(const AblationCell& cell, std::uint64_t seed) {
  return std::string(variant_name(cell.variant)) + "_n" + std::to_string(cell.n_extractors) +
         "_seed" + std::to_string(seed);
}

}  // namespace

std::vector<DomainDataset> load_domains(const RunConfig& cfg) {
  if (cfg.target_file) {
    std::vector<DomainDataset> out;
    for (const auto& p : cfg.source_files) out.push_back(load_csv(p));
    out.push_back(load_csv(*cfg.target_file));
    return out;
  }
  return cfg.generator == Generator::kMoons ? gen_moons_domains(cfg.synthetic)
                                            : gen_gaussian_domains(cfg.synthetic);
}

DomainSplit load_split(const RunConfig& cfg) {
  auto domains = load_domains(cfg);
  const std::size_t target = cfg.target_file ? domains.size() - 1
                                             : cfg.target_domain.value_or(domains.size() - 1);
  return make_split(std::move(domains), target);
}

std::vector<std::filesystem::path> cmd_gen(const RunConfig& cfg,
                                           const std::filesystem::path& out_dir) {
  const auto domains = load_domains(cfg);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& d : domains) {
    const auto path = out_dir / (d.domain_name + ".csv");
    save_csv(d, path);
    written.push_back(path);
  }
  return written;
}

RunResult cmd_train(const RunConfig& cfg, std::uint64_t seed,
                    const std::filesystem::path& out_dir) {
  TrainConfig train = cfg.train;
  train.seed = seed;
  train.validate();
  const DomainSplit split = load_split(cfg);
  RunResult result = run_variant(split, cfg.model, train);

  std::filesystem::create_directories(out_dir);
  std::ostringstream metrics;
  write_metrics_csv(result.report, metrics);
  write_file(out_dir / "metrics.csv", metrics.str());
  save_checkpoint(result.model, out_dir / "model.ckpt");
  write_file(out_dir / "summary.json", summary_json(result, train.variant, seed));
  return result;
}

double cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data) {
  const EnsembleModel model = load_checkpoint(checkpoint);
  const DomainDataset ds = load_csv(data);
  if (ds.dim != model.config.input_dim)
    throw std::invalid_argument("dataset dim " + std::to_string(ds.dim) +
                                " does not match model input_dim " +
                                std::to_string(model.config.input_dim));
  return evaluate(model, ds);
}

DomainDataset cmd_features(const std::filesystem::path& checkpoint,
                           const std::filesystem::path& data, const std::filesystem::path& out) {
  const EnsembleModel model = load_checkpoint(checkpoint);
  const DomainDataset ds = load_csv(data);
  if (ds.dim != model.config.input_dim)
    throw std::invalid_argument("dataset dim " + std::to_string(ds.dim) +
                                " does not match model input_dim " +
                                std::to_string(model.config.input_dim));
  Tape tape;
  BoundModel bound(tape, model, ParamGroup::kNone);
  const Tensor feat = bound.concat_features(tape.leaf(ds.all_features())).value();
  DomainDataset result{ds.domain_name, feat.shape()[1], ds.n_classes,
                       {feat.values().begin(), feat.values().end()}, ds.labels};
  save_csv(result, out);
  return result;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, std::size_t n_seeds,
                                    const std::filesystem::path& out_dir) {
  if (n_seeds < 1) throw std::invalid_argument("ablate needs at least one seed");
  struct Job {
    std::size_t cell;
    std::uint64_t seed;
    TrainConfig train;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cfg.ablate_cells.size(); ++c) {
    for (std::size_t s = 0; s < n_seeds; ++s) {
      TrainConfig t = cfg.train;
      t.variant = cfg.ablate_cells[c].variant;
      t.n_extractors = cfg.ablate_cells[c].n_extractors;
      t.seed = cfg.train.seed + s;
      t.validate();
      jobs.push_back({c, t.seed, t});
    }
  }
  const DomainSplit split = load_split(cfg);
  if (!split.target_eval) throw std::invalid_argument("ablate needs target labels for evaluation");
  std::filesystem::create_directories(out_dir / "cells");

  std::vector<double> acc(jobs.size(), 0.0);
  std::vector<std::exception_ptr> errors(jobs.size());
  const auto n_jobs = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n_jobs; ++i) {
    const auto& job = jobs[static_cast<std::size_t>(i)];
    try {
      const RunResult r = run_variant(split, cfg.model, job.train);
      acc[static_cast<std::size_t>(i)] = *r.target_accuracy;
      const auto dir = out_dir / "cells" / cell_dir_name(cfg.ablate_cells[job.cell], job.seed);
      std::filesystem::create_directories(dir);
      std::ostringstream metrics;
      write_metrics_csv(r.report, metrics);
      write_file(dir / "metrics.csv", metrics.str());
      write_file(dir / "summary.json", summary_json(r, job.train.variant, job.seed));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<AblationRow> rows;
  for (std::size_t c = 0; c < cfg.ablate_cells.size(); ++c) {
    AblationRow row{cfg.ablate_cells[c].variant, cfg.ablate_cells[c].n_extractors, 0.0, 0.0, {}, {}};
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (jobs[j].cell != c) continue;
      row.seeds.push_back(jobs[j].seed);
      row.accuracies.push_back(acc[j]);
    }
    const double count = static_cast<double>(row.accuracies.size());
    for (double a : row.accuracies) row.mean_acc += a / count;
    if (row.accuracies.size() > 1) {
      double ss = 0.0;
      for (double a : row.accuracies) ss += (a - row.mean_acc) * (a - row.mean_acc);
      row.std_acc = std::sqrt(ss / (count - 1.0));
    }
    rows.push_back(std::move(row));
  }

  std::ostringstream table;
  write_ablation_csv(rows, table);
  write_file(out_dir / "ablation.csv", table.str());
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, std::ostream& out) {
  std::ostringstream line;
  line << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "variant,n,mean_acc,std_acc,seeds\n";
  for (const auto& r : rows) {
    line.str("");
    line << variant_name(r.variant) << ',' << r.n_extractors << ',' << r.mean_acc << ','
         << r.std_acc << ',';
    for (std::size_t i = 0; i < r.seeds.size(); ++i) line << (i ? ";" : "") << r.seeds[i];
    out << line.str() << '\n';
  }
}

std::vector<std::pair<int, double>> cmd_divergence(const std::filesystem::path& a,
                                                   const std::filesystem::path& b, int k_max) {
  if (k_max < 1) throw std::invalid_argument("k-max must be >= 1");
  const auto da = EmpiricalDomain::from_dataset(load_csv(a));
  const auto db = EmpiricalDomain::from_dataset(load_csv(b));
  std::vector<std::pair<int, double>> rows;
  for (int k = 1; k <= k_max; ++k) rows.emplace_back(k, lm_divergence(da, db, k));
  return rows;
}

}  // namespace enmdap
