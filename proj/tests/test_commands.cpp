#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "enmdap/commands.hpp"
#include "enmdap/config.hpp"

using namespace enmdap;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kSmall =
    "n_domains = 3\n"
    "n_classes = 2\n"
    "dim = 3\n"
    "samples_per_class = 30\n"
    "class_separation = 4\n"
    "domain_shift_scale = 0.5\n"
    "hidden_dims = 8\n"
    "feature_dim = 4\n"
    "lr = 0.01\n"
    "epochs_stage1 = 3\n"
    "epochs_stage2 = 2\n"
    "batch_size = 16\n"
    "ablate = MDAP_L, MDAP, ENMDAP:2\n";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Metrics CSV with the trailing seconds column dropped from every row.
std::string without_seconds(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + '\n';
  return out;
}

}  // namespace

TEST_CASE("gen writes one csv per domain") {
  TempDir dir("enmdap_cmd_gen");
  const auto cfg = parse_config_text(kSmall);
  const auto files = cmd_gen(cfg, dir.path);
  REQUIRE(files.size() == 3);
  for (const auto& f : files) CHECK(fs::exists(f));
  CHECK(files[0].filename() == "domain0.csv");
  CHECK(load_csv(files[2]).features == load_domains(cfg)[2].features);
}

TEST_CASE("train outputs are reproducible and eval is stateless") {
  TempDir dir("enmdap_cmd_train");
  const auto cfg = parse_config_text(kSmall);
  const RunResult a = cmd_train(cfg, 3, dir.path / "a");
  const RunResult b = cmd_train(cfg, 3, dir.path / "b");
  for (const char* name : {"model.ckpt", "summary.json"})
    CHECK(slurp(dir.path / "a" / name) == slurp(dir.path / "b" / name));
  CHECK(without_seconds(slurp(dir.path / "a" / "metrics.csv")) ==
        without_seconds(slurp(dir.path / "b" / "metrics.csv")));

  const auto summary = nlohmann::json::parse(slurp(dir.path / "a" / "summary.json"));
  CHECK(summary["variant"] == "ENMDAP");
  CHECK(summary["seed"] == 3);
  CHECK(summary["target_accuracy"].get<double>() == *a.target_accuracy);
  CHECK(summary["pl_rate_final"].get<double>() == a.pl_rate_final);

  cmd_gen(cfg, dir.path / "data");
  const fs::path target = dir.path / "data" / "domain2.csv";
  const double e1 = cmd_eval(dir.path / "a" / "model.ckpt", target);
  const double e2 = cmd_eval(dir.path / "a" / "model.ckpt", target);
  CHECK(e1 == e2);
  CHECK(e1 == *a.target_accuracy);
  CHECK_THROWS(cmd_eval(dir.path / "a" / "missing.ckpt", target));

  const DomainDataset feat = cmd_features(dir.path / "a" / "model.ckpt", target, dir.path / "feat.csv");
  CHECK(feat.dim == 2 * 4);
  CHECK(feat.size() == 60);
  CHECK(feat.labels == load_csv(target).labels);
  const DomainDataset back = load_csv(dir.path / "feat.csv");
  CHECK(back.features == feat.features);
  CHECK(cmd_divergence(dir.path / "feat.csv", dir.path / "feat.csv", 1)[0].second == 0.0);
}

TEST_CASE("invalid configs produce no output") {
  TempDir dir("enmdap_cmd_invalid");
  auto cfg = parse_config_text(kSmall);
  cfg.train.variant = Variant::kMDAP;
  cfg.train.n_extractors = 2;
  CHECK_THROWS(cmd_train(cfg, 0, dir.path / "t"));
  CHECK_FALSE(fs::exists(dir.path / "t"));
  cfg = parse_config_text(kSmall);
  cfg.ablate_cells.push_back({Variant::kMDAP_L, 3});
  CHECK_THROWS(cmd_ablate(cfg, 2, dir.path / "ab"));
  CHECK_FALSE(fs::exists(dir.path / "ab"));
  cfg = parse_config_text(kSmall);
  cfg.source_files = {dir.path / "nope.csv"};
  cfg.target_file = dir.path / "nope2.csv";
  CHECK_THROWS(cmd_train(cfg, 0, dir.path / "f"));
  CHECK_FALSE(fs::exists(dir.path / "f"));
}

TEST_CASE("training from files matches training from the generator") {
  TempDir dir("enmdap_cmd_files");
  const auto cfg = parse_config_text(kSmall);
  const auto files = cmd_gen(cfg, dir.path / "data");
  auto from_files = cfg;
  from_files.source_files = {files[0], files[1]};
  from_files.target_file = files[2];
  const RunResult a = cmd_train(cfg, 1, dir.path / "gen");
  const RunResult b = cmd_train(from_files, 1, dir.path / "files");
  CHECK(a.target_accuracy == b.target_accuracy);
  CHECK(parameter_checksum(a.model, ParamGroup::kAll) == parameter_checksum(b.model, ParamGroup::kAll));
}

TEST_CASE("ablate writes a row per cell") {
  TempDir dir("enmdap_cmd_ablate");
  const auto cfg = parse_config_text(kSmall);
  const auto rows = cmd_ablate(cfg, 3, dir.path);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].variant == Variant::kMDAP_L);
  CHECK(rows[2].n_extractors == 2);
  for (const auto& r : rows) {
    CHECK(r.seeds == std::vector<std::uint64_t>{0, 1, 2});
    REQUIRE(r.accuracies.size() == 3);
    double mean = 0.0;
    for (double a : r.accuracies) mean += a;
    mean /= 3.0;
    double ss = 0.0;
    for (double a : r.accuracies) ss += (a - mean) * (a - mean);
    CHECK(r.mean_acc == doctest::Approx(mean).epsilon(1e-14));
    CHECK(r.std_acc == doctest::Approx(std::sqrt(ss / 2.0)).epsilon(1e-12));
  }
  // Each cell equals a standalone training run with the same seed.
  auto single = cfg;
  single.train.variant = Variant::kMDAP;
  single.train.n_extractors = 1;
  CHECK(*cmd_train(single, 2, dir.path / "single").target_accuracy == rows[1].accuracies[2]);

  const std::string table = slurp(dir.path / "ablation.csv");
  std::istringstream in(table);
  std::string line;
  std::getline(in, line);
  CHECK(line == "variant,n,mean_acc,std_acc,seeds");
  std::size_t count = 0;
  while (std::getline(in, line)) {
    CHECK(line.ends_with(",0;1;2"));
    ++count;
  }
  CHECK(count == 3);
  CHECK(fs::exists(dir.path / "cells" / "ENMDAP_n2_seed1" / "summary.json"));
  CHECK(fs::exists(dir.path / "cells" / "MDAP_L_n1_seed0" / "metrics.csv"));
}

TEST_CASE("ablation csv with one seed reports zero std") {
  std::ostringstream out;
  write_ablation_csv({{Variant::kEnMDAP, 3, 0.5, 0.0, {7}, {0.5}}}, out);
  CHECK(out.str() == "variant,n,mean_acc,std_acc,seeds\nENMDAP,3,0.5,0,7\n");
}

TEST_CASE("divergence") {
  TempDir dir("enmdap_cmd_div");
  const auto files = cmd_gen(parse_config_text(kSmall), dir.path);
  const auto self = cmd_divergence(files[0], files[0], 4);
  REQUIRE(self.size() == 4);
  for (std::size_t i = 0; i < self.size(); ++i) {
    CHECK(self[i].first == static_cast<int>(i + 1));
    CHECK(self[i].second == 0.0);
  }
  const auto other = cmd_divergence(files[0], files[1], 2);
  CHECK(other[0].second > 0.0);
  CHECK(other[0].second == cmd_divergence(files[1], files[0], 2)[0].second);
  CHECK_THROWS(cmd_divergence(files[0], files[1], 0));
}
