#include "enmdap/model.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "enmdap/error.hpp"
#include "enmdap/rng.hpp"

namespace enmdap {

void ModelConfig::validate() const {
  if (n_extractors < 1) throw std::invalid_argument("n_extractors must be >= 1");
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");
  if (n_classes < 1) throw std::invalid_argument("n_classes must be >= 1");
  for (std::size_t h : hidden_dims)
    if (h < 1) throw std::invalid_argument("hidden widths must be >= 1");
}

namespace {

template <typename Model, typename Out>
void collect(Model& model, ParamGroup group, Out& out) {
  const bool stage1 = group == ParamGroup::kStage1 || group == ParamGroup::kAll;
  const bool final = group == ParamGroup::kFinal || group == ParamGroup::kAll;
  auto add_linear = [&](const std::string& prefix, auto& layer) {
    out.push_back({prefix + ".weight", &layer.weight});
    out.push_back({prefix + ".bias", &layer.bias});
  };
  if (stage1) {
    for (std::size_t k = 0; k < model.extractors.size(); ++k)
      for (std::size_t l = 0; l < model.extractors[k].layers.size(); ++l)
        add_linear("extractor" + std::to_string(k) + ".layer" + std::to_string(l),
                   model.extractors[k].layers[l]);
    for (std::size_t k = 0; k < model.pair_classifiers.size(); ++k)
      add_linear("pair" + std::to_string(k), model.pair_classifiers[k]);
    add_linear("extractor_classifier", model.extractor_classifier);
  }
  if (final) add_linear("final_classifier", model.final_classifier);
}

Linear make_linear(std::size_t in, std::size_t out) {
  return Linear{Tensor({in, out}), Tensor({out})};
}

EnsembleModel zero_model(const ModelConfig& cfg) {
  cfg.validate();
  EnsembleModel model;
  model.config = cfg;
  for (std::size_t k = 0; k < cfg.n_extractors; ++k) {
    Extractor ex;
    std::size_t in = cfg.input_dim;
    for (std::size_t h : cfg.hidden_dims) {
      ex.layers.push_back(make_linear(in, h));
      in = h;
    }
    ex.layers.push_back(make_linear(in, cfg.feature_dim));
    model.extractors.push_back(std::move(ex));
    model.pair_classifiers.push_back(make_linear(cfg.feature_dim, cfg.n_classes));
  }
  model.extractor_classifier = make_linear(cfg.feature_dim, cfg.n_extractors);
  model.final_classifier = make_linear(cfg.n_extractors * cfg.feature_dim, cfg.n_classes);
  return model;
}

}  // namespace

std::vector<NamedParam> parameters(EnsembleModel& model, ParamGroup group) {
  std::vector<NamedParam> out;
  collect(model, group, out);
  return out;
}

std::vector<ConstNamedParam> parameters(const EnsembleModel& model, ParamGroup group) {
  std::vector<ConstNamedParam> out;
  collect(model, group, out);
  return out;
}

std::size_t parameter_count(const ModelConfig& cfg) {
  auto linear = [](std::size_t in, std::size_t out) { return in * out + out; };
  std::size_t extractor = 0;
  std::size_t in = cfg.input_dim;
  for (std::size_t h : cfg.hidden_dims) {
    extractor += linear(in, h);
    in = h;
  }
  extractor += linear(in, cfg.feature_dim);
  const std::size_t n = cfg.n_extractors;
  return n * (extractor + linear(cfg.feature_dim, cfg.n_classes)) +
         linear(cfg.feature_dim, n) + linear(n * cfg.feature_dim, cfg.n_classes);
}

EnsembleModel init_model(const ModelConfig& cfg) {
  EnsembleModel model = zero_model(cfg);
  auto rng = derive_stream(cfg.init_seed, 0);
  for (auto& p : parameters(model)) {
    if (p.tensor->rank() != 2) continue;  // biases stay zero
    const double fan_in = static_cast<double>(p.tensor->shape()[0]);
    const double fan_out = static_cast<double>(p.tensor->shape()[1]);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : p.tensor->values()) w = rng.uniform(-limit, limit);
  }
  return model;
}

// ---------------------------------------------------------------------------
// BoundModel

BoundModel::BoundModel(Tape& tape, const EnsembleModel& model, ParamGroup trainable)
    : tape_(&tape), config_(model.config) {
  const auto train = parameters(model, trainable);
  std::vector<Var> vars;
  std::size_t t = 0;
  for (const auto& p : parameters(model)) {
    const bool grad = t < train.size() && train[t].tensor == p.tensor;
    if (grad) ++t;
    vars.push_back(tape.leaf(*p.tensor, grad));
  }
  bind(model, vars);
}

BoundModel::BoundModel(const EnsembleModel& model, std::span<const Var> params)
    : config_(model.config) {
  if (params.empty()) throw std::invalid_argument("BoundModel: no parameters supplied");
  tape_ = &params[0].tape();
  bind(model, params);
}

void BoundModel::bind(const EnsembleModel& model, std::span<const Var> params) {
  const auto expected = parameters(model);
  if (params.size() != expected.size())
    throw ShapeError("BoundModel: expected " + std::to_string(expected.size()) +
                     " parameters, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].shape() != expected[i].tensor->shape())
      throw ShapeError("BoundModel: " + expected[i].name + " has shape " +
                       shape_string(params[i].shape()) + ", expected " +
                       shape_string(expected[i].tensor->shape()));
  all_.assign(params.begin(), params.end());
  std::size_t i = 0;
  auto next = [&]() { return BoundLinear{params[i++], params[i++]}; };
  extractors_.clear();
  pair_classifiers_.clear();
  for (const auto& ex : model.extractors) {
    std::vector<BoundLinear> layers;
    for (std::size_t l = 0; l < ex.layers.size(); ++l) layers.push_back(next());
    extractors_.push_back(std::move(layers));
  }
  for (std::size_t k = 0; k < model.pair_classifiers.size(); ++k)
    pair_classifiers_.push_back(next());
  extractor_classifier_ = next();
  final_classifier_ = next();
}

Var BoundModel::apply(const BoundLinear& layer, Var x) {
  return add_row_bias(matmul(x, layer.weight), layer.bias);
}

void BoundModel::check_index(std::size_t k) const {
  if (k >= config_.n_extractors)
    throw std::out_of_range("extractor index " + std::to_string(k) + " out of range [0, " +
                            std::to_string(config_.n_extractors) + ")");
}

Var BoundModel::extract(std::size_t k, Var x) const {
  check_index(k);
  const auto& layers = extractors_[k];
  Var h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = apply(layers[l], h);
    if (l + 1 < layers.size()) h = relu(h);
  }
  return h;
}

Var BoundModel::classify_pair(std::size_t k, Var feat) const {
  check_index(k);
  return apply(pair_classifiers_[k], feat);
}

Var BoundModel::extractor_classify(Var feat) const { return apply(extractor_classifier_, feat); }

Var BoundModel::concat_features(Var x) const {
  std::vector<Var> parts;
  for (std::size_t k = 0; k < config_.n_extractors; ++k) parts.push_back(extract(k, x));
  return concat_cols(parts);
}

Var BoundModel::classify_final_features(Var feat) const { return apply(final_classifier_, feat); }

Var BoundModel::final_classify(Var x) const { return classify_final_features(concat_features(x)); }

// ---------------------------------------------------------------------------
// Inference helpers

Tensor final_logits(const EnsembleModel& model, const Tensor& x) {
  Tape tape;
  BoundModel bound(tape, model, ParamGroup::kNone);
  return bound.final_classify(tape.leaf(x)).value();
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  std::vector<int> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const EnsembleModel& model, const Tensor& x) {
  return argmax_rows(final_logits(model, x));
}

std::uint64_t parameter_checksum(const EnsembleModel& model, ParamGroup group) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : parameters(model, group)) {
    for (double v : p.tensor->values()) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        h ^= bits & 0xFF;
        h *= 0x100000001b3ULL;
        bits >>= 8;
      }
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const EnsembleModel& model, std::ostream& out) {
  const auto& cfg = model.config;
  out << "n=" << cfg.n_extractors << ",input_dim=" << cfg.input_dim
      << ",feature_dim=" << cfg.feature_dim << ",classes=" << cfg.n_classes << '\n';
  std::ostringstream line;
  line.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& p : parameters(model)) {
    line.str("");
    line << p.name << ' ';
    const auto& shape = p.tensor->shape();
    for (std::size_t i = 0; i < shape.size(); ++i) line << (i ? "x" : "") << shape[i];
    for (double v : p.tensor->values()) line << ' ' << v;
    out << line.str() << '\n';
  }
}

void save_checkpoint(const EnsembleModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_checkpoint(model, out);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

std::size_t parse_size(const std::string& text, std::size_t line, const std::string& what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw FormatError("bad " + what + " '" + text + "'", line);
  return v;
}

struct RawParam {
  Shape shape;
  std::vector<double> values;
  std::size_t line;
};

}  // namespace

EnsembleModel load_checkpoint(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw FormatError("missing header", 1);
  std::map<std::string, std::size_t> fields;
  {
    std::istringstream hs(header);
    std::string field;
    while (std::getline(hs, field, ',')) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw FormatError("header field '" + field + "' lacks '='", 1);
      fields[field.substr(0, eq)] = parse_size(field.substr(eq + 1), 1, field.substr(0, eq));
    }
  }
  for (const char* key : {"n", "input_dim", "feature_dim", "classes"})
    if (!fields.count(key)) throw FormatError(std::string("header lacks '") + key + "'", 1);

  std::map<std::string, RawParam> raw;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, shape_text;
    if (!(ls >> name >> shape_text)) throw FormatError("expected '<name> <shape> values'", line_no);
    RawParam p;
    p.line = line_no;
    std::istringstream ss(shape_text);
    std::string dim;
    while (std::getline(ss, dim, 'x')) p.shape.push_back(parse_size(dim, line_no, "shape"));
    std::string token;
    while (ls >> token) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc() || ptr != token.data() + token.size())
        throw FormatError("non-numeric value '" + token + "'", line_no);
      p.values.push_back(v);
    }
    if (shape_size(p.shape) != p.values.size())
      throw FormatError(name + ": shape " + shape_string(p.shape) + " but " +
                            std::to_string(p.values.size()) + " values",
                        line_no);
    raw[name] = std::move(p);
  }

  ModelConfig cfg;
  cfg.n_extractors = fields["n"];
  cfg.input_dim = fields["input_dim"];
  cfg.feature_dim = fields["feature_dim"];
  cfg.n_classes = fields["classes"];
  for (std::size_t l = 0;; ++l) {
    auto it = raw.find("extractor0.layer" + std::to_string(l) + ".weight");
    if (it == raw.end()) break;
    if (raw.count("extractor0.layer" + std::to_string(l + 1) + ".weight")) {
      if (it->second.shape.size() != 2) throw FormatError("layer weight must be a matrix", it->second.line);
      cfg.hidden_dims.push_back(it->second.shape[1]);
    }
  }

  EnsembleModel model = zero_model(cfg);
  for (auto& p : parameters(model)) {
    auto it = raw.find(p.name);
    if (it == raw.end()) throw FormatError("missing parameter " + p.name, line_no);
    if (it->second.shape != p.tensor->shape())
      throw FormatError(p.name + " has shape " + shape_string(it->second.shape) + ", expected " +
                            shape_string(p.tensor->shape()),
                        it->second.line);
    *p.tensor = Tensor(p.tensor->shape(), std::move(it->second.values));
    raw.erase(it);
  }
  if (!raw.empty())
    throw FormatError("unexpected parameter " + raw.begin()->first, raw.begin()->second.line);
  return model;
}

EnsembleModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return load_checkpoint(in);
}

}  // namespace enmdap
