#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "enmdap/tensor.hpp"

namespace enmdap {

/// One domain's samples: a row-major feature matrix and, for labeled domains,
/// one class label per row.
struct DomainDataset {
  std::string domain_name;
  std::size_t dim = 0;
  int n_classes = 0;
  std::vector<double> features;  // size() * dim values
  std::optional<std::vector<int>> labels;

  std::size_t size() const { return dim ? features.size() / dim : 0; }
  bool labeled() const { return labels.has_value(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }

  /// Features of the given rows as a [indices.size() x dim] tensor.
  Tensor gather(std::span<const std::size_t> indices) const;
  /// Labels of the given rows; throws if the dataset is unlabeled.
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
  /// All rows as a [size() x dim] tensor.
  Tensor all_features() const;

  /// Copy with labels removed.
  DomainDataset without_labels() const;

  /// Throws std::invalid_argument for a broken layout and LabelError for a
  /// label outside [0, n_classes).
  void validate() const;
};

/// Parameters of the synthetic multi-domain generators. Identical specs
/// produce bit-identical datasets.
struct SyntheticSpec {
  int n_domains = 4;
  int n_classes = 4;
  std::size_t dim = 8;
  std::size_t samples_per_class = 500;
  double class_separation = 3.0;
  double domain_shift_scale = 1.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Gaussian class clusters per domain. Class c has base mean
/// class_separation * (+/-e_{c mod dim}); domain i applies its own diagonal
/// scaling and translation (both scaled by domain_shift_scale) to every class
/// mean; samples are mean + noise_sigma * N(0, I). Rows are ordered by class.
std::vector<DomainDataset> gen_gaussian_domains(const SyntheticSpec& spec);

/// Two interleaved half circles in 2-D; domain i is rotated by
/// i * domain_shift_scale radians about the origin. Requires n_classes == 2 and
/// dim == 2.
std::vector<DomainDataset> gen_moons_domains(const SyntheticSpec& spec);

// Dataset CSV:
//   dim=<d>,labeled=<0|1>,classes=<C>,domain=<name>
//   <f1>,...,<fd>[,<label>]
// Values are written with 17 significant digits so a save/load round trip is
// exact.
void save_csv(const DomainDataset& ds, std::ostream& out);
void save_csv(const DomainDataset& ds, const std::filesystem::path& path);
DomainDataset load_csv(std::istream& in);
DomainDataset load_csv(const std::filesystem::path& path);

/// Seeded Fisher-Yates permutation of [0, n) cut into consecutive batches of
/// `batch_size`; the last batch may be short.
std::vector<std::vector<std::size_t>> batcher(std::size_t n, std::size_t batch_size,
                                              std::uint64_t epoch_seed);
inline std::vector<std::vector<std::size_t>> batcher(const DomainDataset& ds,
                                                     std::size_t batch_size,
                                                     std::uint64_t epoch_seed) {
  return batcher(ds.size(), batch_size, epoch_seed);
}

}  // namespace enmdap
