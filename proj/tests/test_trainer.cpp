#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "enmdap/error.hpp"
#include "enmdap/trainer.hpp"

using namespace enmdap;

namespace {

// Three 2-class domains of 40 samples each in 3 dimensions.
std::vector<DomainDataset> small_domains(double shift = 0.5) {
  SyntheticSpec spec;
  spec.n_domains = 3;
  spec.n_classes = 2;
  spec.dim = 3;
  spec.samples_per_class = 20;
  spec.class_separation = 3.0;
  spec.domain_shift_scale = shift;
  spec.seed = 11;
  return gen_gaussian_domains(spec);
}

ModelConfig small_arch() {
  ModelConfig arch;
  arch.hidden_dims = {8};
  arch.feature_dim = 4;
  return arch;
}

TrainConfig small_config(Variant v, std::size_t n) {
  TrainConfig cfg;
  cfg.variant = v;
  cfg.n_extractors = n;
  cfg.weights.alpha = 0.1;
  cfg.optimizer = AdamConfig{0.01};
  cfg.epochs_stage1 = 2;
  cfg.epochs_stage2 = 1;
  cfg.batch_size = 16;
  cfg.seed = 5;
  return cfg;
}

EnsembleModel model_for(const DomainSplit& split, const TrainConfig& cfg) {
  ModelConfig arch = small_arch();
  arch.n_extractors = cfg.n_extractors;
  arch.input_dim = split.target.dim;
  arch.n_classes = static_cast<std::size_t>(split.target.n_classes);
  return init_model(arch);
}

bool same_rows(const TrainingReport& a, const TrainingReport& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto &x = a.rows[i], &y = b.rows[i];
    if (x.loss_total != y.loss_total || x.loss_lc != y.loss_lc || x.loss_lmm != y.loss_lmm ||
        x.loss_fd != y.loss_fd || x.pl_count != y.pl_count || x.target_acc != y.target_acc)
      return false;
  }
  return true;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

TEST_CASE("variant names round trip") {
  for (Variant v : {Variant::kEnMDAP, Variant::kEnMDAP_R, Variant::kMDAP, Variant::kMDAP_L,
                    Variant::kSourceCombined})
    CHECK(parse_variant(variant_name(v)) == v);
  CHECK_FALSE(parse_variant("enmdap").has_value());
  CHECK_FALSE(parse_variant("").has_value());
}

TEST_CASE("config validation and variant forcing") {
  CHECK_THROWS_AS(small_config(Variant::kMDAP, 2).validate(), std::invalid_argument);
  CHECK_THROWS_AS(small_config(Variant::kMDAP_L, 3).validate(), std::invalid_argument);
  CHECK_THROWS_AS(small_config(Variant::kSourceCombined, 2).validate(), std::invalid_argument);
  CHECK_NOTHROW(small_config(Variant::kMDAP, 1).validate());
  CHECK_NOTHROW(small_config(Variant::kEnMDAP, 1).validate());
  auto cfg = small_config(Variant::kEnMDAP, 2);
  cfg.batch_size = 0;
  CHECK_THROWS(cfg.validate());
  cfg = small_config(Variant::kEnMDAP, 2);
  cfg.stage2_lr = 0.0;
  CHECK_THROWS(cfg.validate());
  cfg = small_config(Variant::kEnMDAP, 2);
  cfg.optimizer = SgdConfig{-1.0};
  CHECK_THROWS(cfg.validate());

  cfg = small_config(Variant::kEnMDAP_R, 2);
  cfg.weights.beta = 3.0;
  CHECK(cfg.effective_weights().beta == 0.0);
  CHECK(cfg.effective_weights().alpha == 0.1);
  CHECK_FALSE(cfg.loss_options().diversify);
  cfg = small_config(Variant::kSourceCombined, 1);
  CHECK(cfg.effective_weights().alpha == 0.0);
  CHECK(cfg.effective_weights().beta == 0.0);
  CHECK(small_config(Variant::kMDAP_L, 1).loss_options().matching == MomentMatching::kMarginal);
  CHECK(small_config(Variant::kEnMDAP, 2).loss_options().diversify);
}

TEST_CASE("make_split") {
  const auto domains = small_domains();
  const DomainSplit split = make_split(domains, 1);
  REQUIRE(split.sources.size() == 2);
  CHECK(split.sources[0].domain_name == "domain0");
  CHECK(split.sources[1].domain_name == "domain2");
  CHECK_FALSE(split.target.labeled());
  REQUIRE(split.target_eval.has_value());
  CHECK(split.target_eval->labels == domains[1].labels);
  CHECK(split.target.features == domains[1].features);
  CHECK_THROWS_AS(make_split(domains, 3), std::out_of_range);
  CHECK_THROWS(make_split({domains[0]}, 0));
  auto bad = domains;
  bad[2] = DomainDataset{"odd", 2, 2, {}, std::vector<int>{}};
  CHECK_THROWS_AS(make_split(bad, 0), ShapeError);
}

TEST_CASE("stage 1 writes one row per epoch") {
  const DomainSplit split = make_split(small_domains(), 2);
  const auto cfg = small_config(Variant::kEnMDAP, 2);
  EnsembleModel m = model_for(split, cfg);
  const auto report = train_stage1(m, split, cfg);
  REQUIRE(report.rows.size() == 2);
  for (std::size_t e = 0; e < 2; ++e) {
    const auto& r = report.rows[e];
    CHECK(r.epoch == e);
    CHECK(r.stage == 1);
    CHECK(r.loss_lc.size() == 2);
    CHECK(r.loss_lmm.size() == 2);
    CHECK(std::isfinite(r.loss_total));
    CHECK(r.pl_rate >= 0.0);
    CHECK(r.pl_rate <= 1.0);
    CHECK(r.target_acc.has_value());
  }
  auto two = cfg;
  two.epochs_stage2 = 3;
  CHECK(train_stage2(m, split, two).rows.size() == 3);
  CHECK(train_stage2(m, split, cfg).rows.size() == 1);
}

TEST_CASE("variant mappings in the breakdown") {
  const DomainSplit split = make_split(small_domains(), 0);
  SUBCASE("SOURCE_COMBINED has no adaptation terms") {
    const auto cfg = small_config(Variant::kSourceCombined, 1);
    EnsembleModel m = model_for(split, cfg);
    for (const auto& r : train_stage1(m, split, cfg).rows) {
      for (double v : r.loss_lmm) CHECK(v == 0.0);
      CHECK(r.loss_fd == 0.0);
      CHECK(r.pl_count == 0);
      CHECK(r.loss_total == doctest::Approx(r.loss_lc[0]).epsilon(1e-12));
    }
  }
  SUBCASE("ENMDAP_R reports fd identically 0") {
    auto cfg = small_config(Variant::kEnMDAP_R, 3);
    cfg.epochs_stage1 = 3;
    EnsembleModel m = model_for(split, cfg);
    for (const auto& r : train_stage1(m, split, cfg).rows) CHECK(r.loss_fd == 0.0);
  }
  SUBCASE("ENMDAP trains a nonzero fd term") {
    const auto cfg = small_config(Variant::kEnMDAP, 2);
    EnsembleModel m = model_for(split, cfg);
    for (const auto& r : train_stage1(m, split, cfg).rows) CHECK(r.loss_fd > 0.0);
  }
  SUBCASE("model width must match n_extractors") {
    const auto cfg = small_config(Variant::kEnMDAP, 2);
    EnsembleModel m = model_for(split, small_config(Variant::kEnMDAP, 3));
    CHECK_THROWS(train_stage1(m, split, cfg));
  }
}

TEST_CASE("training is deterministic in the seed") {
  const DomainSplit split = make_split(small_domains(), 1);
  for (Variant v : {Variant::kEnMDAP, Variant::kMDAP_L}) {
    const auto cfg = small_config(v, v == Variant::kEnMDAP ? 2 : 1);
    const RunResult a = run_variant(split, small_arch(), cfg);
    const RunResult b = run_variant(split, small_arch(), cfg);
    CHECK(same_rows(a.report, b.report));
    CHECK(parameter_checksum(a.model, ParamGroup::kAll) == parameter_checksum(b.model, ParamGroup::kAll));
    CHECK(a.target_accuracy == b.target_accuracy);
    auto other = cfg;
    other.seed = 6;
    CHECK_FALSE(same_rows(a.report, run_variant(split, small_arch(), other).report));
  }
}

TEST_CASE("stage 2 freezes everything but the final classifier") {
  const DomainSplit split = make_split(small_domains(), 2);
  auto cfg = small_config(Variant::kEnMDAP, 3);
  cfg.epochs_stage2 = 3;
  EnsembleModel m = model_for(split, cfg);
  train_stage1(m, split, cfg);
  const auto stage1 = parameter_checksum(m, ParamGroup::kStage1);
  const auto final = parameter_checksum(m, ParamGroup::kFinal);
  const std::vector<Tensor> before = [&] {
    std::vector<Tensor> out;
    for (const auto& p : parameters(m, ParamGroup::kStage1)) out.push_back(*p.tensor);
    return out;
  }();
  train_stage2(m, split, cfg);
  CHECK(parameter_checksum(m, ParamGroup::kStage1) == stage1);
  CHECK(parameter_checksum(m, ParamGroup::kFinal) != final);
  const auto after = parameters(m, ParamGroup::kStage1);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(*after[i].tensor == before[i]);
}

TEST_CASE("stage 2 loss is non-increasing at small lr with full batches") {
  // n = 1 and an identity-free linear head: the loss is convex in the final
  // layer, and one full-batch gradient step per epoch cannot raise it.
  const DomainSplit split = make_split(small_domains(1.0), 0);
  TrainConfig cfg = small_config(Variant::kMDAP, 1);
  cfg.optimizer = SgdConfig{0.01};
  cfg.batch_size = 1000;
  cfg.epochs_stage2 = 30;
  ModelConfig arch;
  arch.hidden_dims = {};
  arch.feature_dim = 3;
  arch.n_extractors = 1;
  arch.input_dim = 3;
  arch.n_classes = 2;
  arch.init_seed = 4;
  EnsembleModel m = init_model(arch);
  const auto report = train_stage2(m, split, cfg);
  REQUIRE(report.rows.size() == 30);
  for (std::size_t e = 1; e < report.rows.size(); ++e)
    CHECK(report.rows[e].loss_total <= report.rows[e - 1].loss_total);
  CHECK(report.rows.back().loss_total < report.rows.front().loss_total);
}

TEST_CASE("non-finite loss aborts") {
  DomainSplit split = make_split(small_domains(), 0);
  split.sources[0].features[0] = std::numeric_limits<double>::quiet_NaN();
  const auto cfg = small_config(Variant::kMDAP, 1);
  EnsembleModel m = model_for(split, cfg);
  CHECK_THROWS_AS(train_stage1(m, split, cfg), NonFiniteLossError);
  CHECK_THROWS_AS(train_stage2(m, split, cfg), NonFiniteLossError);
}

TEST_CASE("empty source domain is rejected") {
  DomainSplit split = make_split(small_domains(), 0);
  split.sources[1] = DomainDataset{"empty", 3, 2, {}, std::vector<int>{}};
  const auto cfg = small_config(Variant::kMDAP, 1);
  EnsembleModel m = model_for(split, cfg);
  CHECK_THROWS(train_stage1(m, split, cfg));
}

TEST_CASE("evaluate") {
  // n = 1, no hidden layer, identity extractor and identity head: logits = x.
  ModelConfig arch;
  arch.n_extractors = 1;
  arch.input_dim = 2;
  arch.hidden_dims = {};
  arch.feature_dim = 2;
  arch.n_classes = 2;
  EnsembleModel m = init_model(arch);
  for (auto& p : parameters(m)) std::fill(p.tensor->values().begin(), p.tensor->values().end(), 0.0);
  const DomainDataset balanced{"t", 2, 2, {1, 0, 0, 1, 2, 0, 0, 3}, std::vector<int>{0, 1, 0, 1}};
  // All-zero weights tie every logit, and ties resolve to class 0.
  CHECK(evaluate(m, balanced) == 0.5);
  m.extractors[0].layers[0].weight = Tensor::matrix({{1, 0}, {0, 1}});
  m.final_classifier.weight = Tensor::matrix({{1, 0}, {0, 1}});
  CHECK(evaluate(m, balanced) == 1.0);
  CHECK_THROWS(evaluate(m, balanced.without_labels()));
  CHECK_THROWS(evaluate(m, DomainDataset{"e", 2, 2, {}, std::vector<int>{}}));
}

TEST_CASE("metrics csv") {
  const DomainSplit split = make_split(small_domains(), 1);
  auto cfg = small_config(Variant::kEnMDAP, 2);
  cfg.weights.beta = 0.7;
  const RunResult run = run_variant(split, small_arch(), cfg);
  std::stringstream csv;
  write_metrics_csv(run.report, csv);
  std::string line;
  std::getline(csv, line);
  CHECK(line == "epoch,stage,variant,loss_total,loss_lc,loss_lmm,loss_fd,pl_count,pl_rate,target_acc,seconds");
  std::size_t rows = 0;
  const auto w = cfg.effective_weights();
  while (std::getline(csv, line)) {
    const auto cells = split_csv(line);
    REQUIRE(cells.size() == 11);
    CHECK(cells[2] == "ENMDAP");
    const double total = std::stod(cells[3]), lc = std::stod(cells[4]), lmm = std::stod(cells[5]),
                 fd = std::stod(cells[6]);
    if (cells[1] == "1") CHECK(total == doctest::Approx(lc + w.alpha * lmm + w.beta * fd).epsilon(1e-12));
    else CHECK(total == doctest::Approx(lc).epsilon(1e-12));
    CHECK_FALSE(cells[9].empty());
    ++rows;
  }
  CHECK(rows == cfg.epochs_stage1 + cfg.epochs_stage2);
  CHECK(run.target_accuracy.has_value());
}

TEST_CASE("zero shift: adaptation stays within two points of the baseline") {
  SyntheticSpec spec;
  spec.n_domains = 4;
  spec.n_classes = 4;
  spec.dim = 8;
  spec.samples_per_class = 250;
  spec.class_separation = 5.0;
  spec.domain_shift_scale = 0.0;
  spec.seed = 7;
  const DomainSplit split = make_split(gen_gaussian_domains(spec), 3);
  ModelConfig arch;
  arch.hidden_dims = {32};
  arch.feature_dim = 16;
  double sc = 0.0, en = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainConfig cfg;
    cfg.weights.alpha = 0.1;
    cfg.optimizer = AdamConfig{0.002};
    cfg.stage2_lr = 0.005;
    cfg.epochs_stage1 = 10;
    cfg.epochs_stage2 = 10;
    cfg.seed = seed;
    cfg.variant = Variant::kSourceCombined;
    cfg.n_extractors = 1;
    sc += *run_variant(split, arch, cfg).target_accuracy / 5.0;
    cfg.variant = Variant::kEnMDAP;
    cfg.n_extractors = 2;
    en += *run_variant(split, arch, cfg).target_accuracy / 5.0;
  }
  MESSAGE("zero-shift mean accuracy SOURCE_COMBINED=", sc, " ENMDAP=", en);
  CHECK(std::abs(sc - en) <= 0.02);
}
