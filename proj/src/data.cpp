#include "enmdap/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "enmdap/error.hpp"
#include "enmdap/rng.hpp"

namespace enmdap {

// ---------------------------------------------------------------------------
// DomainDataset

Tensor DomainDataset::gather(std::span<const std::size_t> indices) const {
  Tensor out({indices.size(), dim});
  auto dst = out.values();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = row(indices[r]);
    std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(r * dim));
  }
  return out;
}

std::vector<int> DomainDataset::gather_labels(std::span<const std::size_t> indices) const {
  if (!labels) throw std::invalid_argument("domain '" + domain_name + "' has no labels");
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back((*labels)[i]);
  return out;
}

Tensor DomainDataset::all_features() const { return Tensor({size(), dim}, features); }

DomainDataset DomainDataset::without_labels() const {
  DomainDataset out = *this;
  out.labels.reset();
  return out;
}

void DomainDataset::validate() const {
  if (dim == 0) throw std::invalid_argument("dataset dim must be >= 1");
  if (features.size() % dim != 0)
    throw std::invalid_argument("feature buffer is not a multiple of dim");
  if (labels) {
    if (labels->size() != size())
      throw std::invalid_argument("label count " + std::to_string(labels->size()) +
                                  " != row count " + std::to_string(size()));
    for (std::size_t i = 0; i < labels->size(); ++i)
      if ((*labels)[i] < 0 || (*labels)[i] >= n_classes)
        throw LabelError("label " + std::to_string((*labels)[i]) + " out of range at row " +
                             std::to_string(i),
                         i);
  }
}

// ---------------------------------------------------------------------------
// Generators

void SyntheticSpec::validate() const {
  if (n_domains < 2) throw std::invalid_argument("n_domains must be >= 2");
  if (n_classes < 2) throw std::invalid_argument("n_classes must be >= 2");
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (samples_per_class < 1) throw std::invalid_argument("samples_per_class must be >= 1");
  if (!(class_separation > 0.0)) throw std::invalid_argument("class_separation must be > 0");
  if (!(domain_shift_scale >= 0.0)) throw std::invalid_argument("domain_shift_scale must be >= 0");
  if (!(noise_sigma > 0.0)) throw std::invalid_argument("noise_sigma must be > 0");
}

namespace {

// Stream ids; fixed so generated bytes never depend on call order.
constexpr std::uint64_t kShiftStream = 0x1000;
constexpr std::uint64_t kSampleStream = 0x2000;

DomainDataset empty_domain(const SyntheticSpec& spec, int index) {
  DomainDataset ds;
  ds.domain_name = "domain" + std::to_string(index);
  ds.dim = spec.dim;
  ds.n_classes = spec.n_classes;
  ds.features.reserve(spec.samples_per_class * static_cast<std::size_t>(spec.n_classes) * spec.dim);
  ds.labels.emplace();
  return ds;
}

}  // namespace

std::vector<DomainDataset> gen_gaussian_domains(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t dim = spec.dim;
  std::vector<std::vector<double>> base(static_cast<std::size_t>(spec.n_classes),
                                        std::vector<double>(dim, 0.0));
  for (int c = 0; c < spec.n_classes; ++c) {
    const auto uc = static_cast<std::size_t>(c);
    const double sign = (uc / dim) % 2 == 0 ? 1.0 : -1.0;
    base[uc][uc % dim] = sign * spec.class_separation;
  }

  std::vector<DomainDataset> out;
  for (int i = 0; i < spec.n_domains; ++i) {
    auto shift_rng = derive_stream(spec.seed, kShiftStream + static_cast<std::uint64_t>(i));
    std::vector<double> translation(dim), scaling(dim);
    for (std::size_t j = 0; j < dim; ++j) translation[j] = spec.domain_shift_scale * shift_rng.normal();
    for (std::size_t j = 0; j < dim; ++j)
      scaling[j] = std::exp(0.25 * spec.domain_shift_scale * shift_rng.normal());

    auto sample_rng = derive_stream(spec.seed, kSampleStream + static_cast<std::uint64_t>(i));
    DomainDataset ds = empty_domain(spec, i);
    for (int c = 0; c < spec.n_classes; ++c) {
      const auto& mu = base[static_cast<std::size_t>(c)];
      for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
        for (std::size_t j = 0; j < dim; ++j)
          ds.features.push_back(scaling[j] * mu[j] + translation[j] +
                                spec.noise_sigma * sample_rng.normal());
        ds.labels->push_back(c);
      }
    }
    out.push_back(std::move(ds));
  }
  return out;
}

std::vector<DomainDataset> gen_moons_domains(const SyntheticSpec& spec) {
  spec.validate();
  if (spec.n_classes != 2) throw std::invalid_argument("moons generator needs n_classes == 2");
  if (spec.dim != 2) throw std::invalid_argument("moons generator needs dim == 2");

  std::vector<DomainDataset> out;
  for (int i = 0; i < spec.n_domains; ++i) {
    const double angle = i * spec.domain_shift_scale;
    const double ca = std::cos(angle), sa = std::sin(angle);
    auto rng = derive_stream(spec.seed, kSampleStream + static_cast<std::uint64_t>(i));
    DomainDataset ds = empty_domain(spec, i);
    for (int c = 0; c < 2; ++c) {
      for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
        const double t = std::numbers::pi * rng.uniform();
        // Upper arc centered at the origin; lower arc mirrored and offset so the
        // two interleave, then the pair is centered on the origin.
        double x = c == 0 ? std::cos(t) - 0.5 : 0.5 - std::cos(t);
        double y = c == 0 ? std::sin(t) - 0.25 : 0.25 - std::sin(t);
        x += spec.noise_sigma * rng.normal();
        y += spec.noise_sigma * rng.normal();
        ds.features.push_back(ca * x - sa * y);
        ds.features.push_back(sa * x + ca * y);
        ds.labels->push_back(c);
      }
    }
    out.push_back(std::move(ds));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

void save_csv(const DomainDataset& ds, std::ostream& out) {
  ds.validate();
  out << "dim=" << ds.dim << ",labeled=" << (ds.labeled() ? 1 : 0)
      << ",classes=" << ds.n_classes << ",domain=" << ds.domain_name << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const auto values = ds.row(r);
    for (std::size_t j = 0; j < values.size(); ++j) {
      if (j) out << ',';
      out << values[j];
    }
    if (ds.labels) out << ',' << (*ds.labels)[r];
    out << '\n';
  }
}

void save_csv(const DomainDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_csv(ds, out);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!line.empty() && line.back() == sep) parts.emplace_back();
  return parts;
}

template <typename T>
bool parse_number(const std::string& text, T& value) {
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last;
}

}  // namespace

DomainDataset load_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  DomainDataset ds;
  bool labeled = false;
  bool seen_dim = false, seen_labeled = false, seen_classes = false, seen_domain = false;
  for (const std::string& field : split(line, ',')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw FormatError("header field '" + field + "' lacks '='", 1);
    const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "dim") {
      if (!parse_number(value, ds.dim) || ds.dim == 0) throw FormatError("bad dim '" + value + "'", 1);
      seen_dim = true;
    } else if (key == "labeled") {
      if (value != "0" && value != "1") throw FormatError("labeled must be 0 or 1", 1);
      labeled = value == "1";
      seen_labeled = true;
    } else if (key == "classes") {
      if (!parse_number(value, ds.n_classes) || ds.n_classes < 1)
        throw FormatError("bad classes '" + value + "'", 1);
      seen_classes = true;
    } else if (key == "domain") {
      ds.domain_name = value;
      seen_domain = true;
    } else {
      throw FormatError("unknown header key '" + key + "'", 1);
    }
  }
  if (!(seen_dim && seen_labeled && seen_classes && seen_domain))
    throw FormatError("header needs dim, labeled, classes and domain", 1);
  if (labeled) ds.labels.emplace();

  const std::size_t expected = ds.dim + (labeled ? 1 : 0);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != expected)
      throw FormatError("expected " + std::to_string(expected) + " cells, got " +
                            std::to_string(cells.size()),
                        line_no);
    for (std::size_t j = 0; j < ds.dim; ++j) {
      double v = 0.0;
      if (!parse_number(cells[j], v) || !std::isfinite(v))
        throw FormatError("non-numeric cell '" + cells[j] + "'", line_no);
      ds.features.push_back(v);
    }
    if (labeled) {
      int label = 0;
      if (!parse_number(cells[ds.dim], label))
        throw FormatError("non-integer label '" + cells[ds.dim] + "'", line_no);
      if (label < 0 || label >= ds.n_classes)
        throw FormatError("label " + std::to_string(label) + " outside [0, " +
                              std::to_string(ds.n_classes) + ")",
                          line_no);
      ds.labels->push_back(label);
    }
  }
  return ds;
}

DomainDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return load_csv(in);
}

// ---------------------------------------------------------------------------
// Batching

std::vector<std::vector<std::size_t>> batcher(std::size_t n, std::size_t batch_size,
                                              std::uint64_t epoch_seed) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(splitmix64_mix(epoch_seed));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace enmdap
