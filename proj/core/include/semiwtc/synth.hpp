#pragma once

// Synthetic stand-in for the NSL-KDD traffic records: same 43-column layout
// (41 features, label, difficulty), the same categorical vocabularies and a
// long-tailed label distribution. Each raw label is a Gaussian mixture in a
// low-dimensional latent space; features are fixed random
// projections of the latent pushed through count, byte, rate, flag and
// categorical link functions.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "semiwtc/dataflow.hpp"

namespace semiwtc {

struct SurrogateConfig {
  std::uint64_t seed = 7;
  /// Multiplies every per-label row count.
  double scale = 1.0;
  std::size_t latent_dim = 10;
  /// Standard deviation of the label means around the origin.
  double class_spread = 1.0;
  /// Sub-populations per raw label; mode k has weight proportional to
  /// mode_decay^k.
  std::size_t modes = 10;
  double mode_decay = 0.75;
  /// Offset of each mode from its label mean.
  double mode_spread = 0.5;
  /// Within-mode noise.
  double noise = 0.45;
  /// Gumbel temperature for categorical columns.
  double categorical_temperature = 0.5;
};

struct SurrogateLabel {
  std::string name;
  std::size_t count;
};

/// Raw labels and row counts before merging and downsampling.
std::vector<SurrogateLabel> surrogate_label_counts();

/// Feature column names in file order (41 entries).
const std::vector<std::string>& nsl_kdd_feature_names();
const std::vector<std::string>& nsl_kdd_services();
const std::vector<std::string>& nsl_kdd_flags();

/// Schema matching the NSL-KDD file layout, with the ten kept labels.
Schema nsl_kdd_schema();

RawTable make_surrogate_table(const SurrogateConfig& config);
void write_surrogate_csv(std::ostream& out, const SurrogateConfig& config);
void write_surrogate_csv(const std::filesystem::path& path, const SurrogateConfig& config);

}  // namespace semiwtc
