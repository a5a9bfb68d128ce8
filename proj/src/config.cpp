#include "enmdap/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "enmdap/error.hpp"

namespace enmdap {

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.synthetic.n_domains = 4;
  cfg.synthetic.n_classes = 4;
  cfg.synthetic.dim = 8;
  cfg.synthetic.samples_per_class = 500;
  cfg.synthetic.class_separation = 3.0;
  cfg.synthetic.domain_shift_scale = 1.0;
  cfg.synthetic.noise_sigma = 1.0;
  cfg.model.hidden_dims = {32};
  cfg.model.feature_dim = 16;
  cfg.ablate_cells = {{Variant::kSourceCombined, 1}, {Variant::kMDAP_L, 1}, {Variant::kMDAP, 1},
                      {Variant::kEnMDAP_R, 2},       {Variant::kEnMDAP, 2}, {Variant::kEnMDAP, 3},
                      {Variant::kEnMDAP, 4}};
  return cfg;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Field {
  const std::string& key;
  const std::string& value;
  std::size_t line;

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(key, line, what); }

  template <typename T>
  T number() const {
    T v{};
    const char* first = value.data();
    const char* last = first + value.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) fail("expected a number, got '" + value + "'");
    return v;
  }

  std::size_t count(std::size_t min) const {
    if (!value.empty() && value[0] == '-') fail("must be a non-negative integer");
    const auto v = number<std::size_t>();
    if (v < min) fail("must be >= " + std::to_string(min));
    return v;
  }
};

using Handler = std::function<void(RunConfig&, const Field&)>;

AdamConfig& adam(RunConfig& cfg, const Field& f) {
  auto* a = std::get_if<AdamConfig>(&cfg.train.optimizer);
  if (!a) f.fail("only valid with optimizer = adam (set optimizer first)");
  return *a;
}

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table = {
      // data
      {"generator",
       [](RunConfig& c, const Field& f) {
         if (f.value == "gaussian") c.generator = Generator::kGaussian;
         else if (f.value == "moons") c.generator = Generator::kMoons;
         else f.fail("expected gaussian or moons");
       }},
      {"n_domains", [](RunConfig& c, const Field& f) { c.synthetic.n_domains = static_cast<int>(f.count(2)); }},
      {"n_classes", [](RunConfig& c, const Field& f) { c.synthetic.n_classes = static_cast<int>(f.count(2)); }},
      {"dim", [](RunConfig& c, const Field& f) { c.synthetic.dim = f.count(1); }},
      {"samples_per_class", [](RunConfig& c, const Field& f) { c.synthetic.samples_per_class = f.count(1); }},
      {"class_separation", [](RunConfig& c, const Field& f) { c.synthetic.class_separation = f.number<double>(); }},
      {"domain_shift_scale", [](RunConfig& c, const Field& f) { c.synthetic.domain_shift_scale = f.number<double>(); }},
      {"noise_sigma", [](RunConfig& c, const Field& f) { c.synthetic.noise_sigma = f.number<double>(); }},
      {"data_seed", [](RunConfig& c, const Field& f) { c.synthetic.seed = f.number<std::uint64_t>(); }},
      {"target_domain", [](RunConfig& c, const Field& f) { c.target_domain = f.count(0); }},
      {"source_files",
       [](RunConfig& c, const Field& f) {
         c.source_files.clear();
         for (const auto& p : split_list(f.value)) c.source_files.emplace_back(p);
         if (c.source_files.empty()) f.fail("empty list");
       }},
      {"target_file", [](RunConfig& c, const Field& f) { c.target_file = f.value; }},
      // model
      {"hidden_dims",
       [](RunConfig& c, const Field& f) {
         c.model.hidden_dims.clear();
         for (const auto& item : split_list(f.value)) {
           Field sub{f.key, item, f.line};
           c.model.hidden_dims.push_back(sub.count(1));
         }
       }},
      {"feature_dim", [](RunConfig& c, const Field& f) { c.model.feature_dim = f.count(1); }},
      // training
      {"variant",
       [](RunConfig& c, const Field& f) {
         const auto v = parse_variant(f.value);
         if (!v) f.fail("unknown variant '" + f.value + "'");
         c.train.variant = *v;
       }},
      {"n_extractors", [](RunConfig& c, const Field& f) { c.train.n_extractors = f.count(1); }},
      {"alpha", [](RunConfig& c, const Field& f) { c.train.weights.alpha = f.number<double>(); }},
      {"beta", [](RunConfig& c, const Field& f) { c.train.weights.beta = f.number<double>(); }},
      {"K", [](RunConfig& c, const Field& f) { c.train.weights.K = static_cast<int>(f.count(1)); }},
      {"tau", [](RunConfig& c, const Field& f) { c.train.weights.tau = f.number<double>(); }},
      {"optimizer",
       [](RunConfig& c, const Field& f) {
         const double lr = std::visit([](const auto& o) { return o.lr; }, c.train.optimizer);
         if (f.value == "adam") c.train.optimizer = AdamConfig{lr};
         else if (f.value == "sgd") c.train.optimizer = SgdConfig{lr};
         else f.fail("expected adam or sgd");
       }},
      {"lr",
       [](RunConfig& c, const Field& f) {
         const double lr = f.number<double>();
         std::visit([lr](auto& o) { o.lr = lr; }, c.train.optimizer);
       }},
      {"adam_beta1", [](RunConfig& c, const Field& f) { adam(c, f).beta1 = f.number<double>(); }},
      {"adam_beta2", [](RunConfig& c, const Field& f) { adam(c, f).beta2 = f.number<double>(); }},
      {"adam_eps", [](RunConfig& c, const Field& f) { adam(c, f).eps = f.number<double>(); }},
      {"stage2_lr", [](RunConfig& c, const Field& f) { c.train.stage2_lr = f.number<double>(); }},
      {"epochs_stage1", [](RunConfig& c, const Field& f) { c.train.epochs_stage1 = f.count(0); }},
      {"epochs_stage2", [](RunConfig& c, const Field& f) { c.train.epochs_stage2 = f.count(0); }},
      {"batch_size", [](RunConfig& c, const Field& f) { c.train.batch_size = f.count(1); }},
      {"seed", [](RunConfig& c, const Field& f) { c.train.seed = f.number<std::uint64_t>(); }},
      // outputs
      {"out_dir", [](RunConfig& c, const Field& f) { c.out_dir = f.value; }},
      {"ablate",
       [](RunConfig& c, const Field& f) {
         c.ablate_cells.clear();
         for (const auto& item : split_list(f.value)) {
           const auto colon = item.find(':');
           const std::string name = item.substr(0, colon);
           const auto v = parse_variant(name);
           if (!v) f.fail("unknown variant '" + name + "'");
           std::size_t n = (*v == Variant::kEnMDAP || *v == Variant::kEnMDAP_R) ? 2 : 1;
           if (colon != std::string::npos) {
             const std::string count = item.substr(colon + 1);
             n = Field{f.key, count, f.line}.count(1);
           }
           c.ablate_cells.push_back({*v, n});
         }
         if (c.ablate_cells.empty()) f.fail("empty list");
       }},
  };
  return table;
}

}  // namespace

RunConfig parse_config_text(std::string_view text) {
  RunConfig cfg = default_run_config();
  std::map<std::string, std::size_t> seen;  // key -> line
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("", line_no, "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto it = handlers().find(key);
    if (it == handlers().end()) throw ConfigError(key, line_no, "unknown key");
    if (seen.count(key)) throw ConfigError(key, line_no, "duplicate key");
    if (value.empty()) throw ConfigError(key, line_no, "missing value");
    seen[key] = line_no;
    it->second(cfg, Field{key, value, line_no});
  }

  // Cross-field validation, reported against the most specific key.
  auto line_of = [&](const std::string& key) { return seen.count(key) ? seen[key] : 0; };
  auto check = [&](const std::string& key, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(key, line_of(key), e.what());
    }
  };
  const Variant v = cfg.train.variant;
  if (!seen.count("n_extractors") &&
      (v == Variant::kMDAP || v == Variant::kMDAP_L || v == Variant::kSourceCombined))
    cfg.train.n_extractors = 1;
  // Validate each weight alone so the error names the offending key.
  const LossWeights& w = cfg.train.weights;
  const LossWeights base;
  check("alpha", [&] { LossWeights t = base; t.alpha = w.alpha; t.validate(); });
  check("beta", [&] { LossWeights t = base; t.beta = w.beta; t.validate(); });
  check("K", [&] { LossWeights t = base; t.K = w.K; t.validate(); });
  check("tau", [&] { LossWeights t = base; t.tau = w.tau; t.validate(); });
  check("n_extractors", [&] { cfg.train.validate(); });
  if (!cfg.source_files.empty() || cfg.target_file) {
    if (cfg.source_files.empty()) throw ConfigError("source_files", line_of("target_file"), "target_file needs source_files");
    if (!cfg.target_file) throw ConfigError("target_file", line_of("source_files"), "source_files needs target_file");
  } else {
    check("n_domains", [&] { cfg.synthetic.validate(); });
    if (cfg.generator == Generator::kMoons && (cfg.synthetic.n_classes != 2 || cfg.synthetic.dim != 2))
      throw ConfigError("generator", line_of("generator"), "moons needs n_classes = 2 and dim = 2");
    if (cfg.target_domain && *cfg.target_domain >= static_cast<std::size_t>(cfg.synthetic.n_domains))
      throw ConfigError("target_domain", line_of("target_domain"), "must be < n_domains");
  }
  for (const auto& cell : cfg.ablate_cells) {
    TrainConfig t = cfg.train;
    t.variant = cell.variant;
    t.n_extractors = cell.n_extractors;
    check("ablate", [&] { t.validate(); });
  }
  check("feature_dim", [&] {
    ModelConfig m = cfg.model;
    m.validate();
  });
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", 0, "cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

}  // namespace enmdap
