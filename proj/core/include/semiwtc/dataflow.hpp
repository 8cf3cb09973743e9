#pragma once

// Tabular ingestion and preprocessing: schema-driven CSV loading, rare-label
// merging, per-class downsampling, log transform, one-hot encoding and
// reproducible stratified splits.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semiwtc/types.hpp"

namespace semiwtc {

enum class ColumnKind { numeric, categorical, label, ignore };

std::string_view to_string(ColumnKind kind);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  bool log_transform = false;
};

/// Column layout plus label handling for one dataset.
///
/// Text form, one directive per line ('#' starts a comment):
///
///     delimiter ,
///     header false
///     log_xi 1e-6
///     standardize false
///     merged_label other
///     keep_labels normal,neptune,satan
///     column duration numeric log
///     column protocol_type categorical
///     column label label
///     column difficulty ignore
struct Schema {
  std::vector<ColumnSpec> columns;
  std::set<std::string> keep_labels;
  std::string merged_label_name = "other";
  char delimiter = ',';
  bool has_header = false;
  double log_xi = 1e-6;
  bool standardize = false;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
  std::size_t label_column() const;
  std::size_t column_index(std::string_view name) const;

  static Schema parse(std::string_view text);
  static Schema load(const std::filesystem::path& path);
  std::string to_text() const;
};

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<RowId> row_ids;
  /// Per column: true when the schema marks it `ignore`.
  std::vector<bool> ignored;

  std::size_t size() const { return rows.size(); }
  RawTable subset(std::span<const std::size_t> indices) const;
};

RawTable load_csv(const std::filesystem::path& path, const Schema& schema);
RawTable parse_csv(std::istream& in, const Schema& schema, std::string_view source = "<stream>");

/// ln(v + xi) per element. Throws DomainError when v + xi <= 0.
std::vector<float> log_transform(std::span<const float> values, double xi);

std::vector<std::string> merge_rare_labels(std::span<const std::string> labels, const Schema& schema);
/// Rewrites the label column in place; returns the number of relabelled rows.
std::size_t merge_rare_labels(RawTable& table, const Schema& schema);

std::vector<std::string> label_column_values(const RawTable& table, const Schema& schema);

/// Keeps min(count, cap) rows per class, chosen uniformly without replacement.
/// Output rows stay in original order.
RawTable downsample(const RawTable& table, const Schema& schema, std::size_t per_class_cap, std::uint64_t seed);

struct FeatureMatrix {
  Matrix data;
  std::vector<std::string> feature_names;

  std::size_t rows() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(data.cols()); }
};

struct LabelVector {
  std::vector<ClassIndex> labels;
  std::vector<std::string> class_vocab;

  std::size_t size() const { return labels.size(); }
  std::size_t num_classes() const { return class_vocab.size(); }
};

/// Sorted distinct labels of the (already merged) table.
std::vector<std::string> build_class_vocab(const RawTable& table, const Schema& schema);
LabelVector encode_labels(const RawTable& table, const Schema& schema, const std::vector<std::string>& vocab);

/// Fitted preprocessing state: numeric pass-through (optionally log and
/// z-scored) and one-hot vocabularies, in schema column order.
class Encoder {
 public:
  static constexpr std::string_view kMagic = "SEMIWTC-ENCODER";
  static constexpr int kVersion = 1;

  static Encoder fit(const RawTable& train, const Schema& schema);

  FeatureMatrix encode(const RawTable& table) const;

  std::size_t width() const;
  std::vector<std::string> feature_names() const;
  std::size_t one_hot_width() const;
  std::size_t numeric_width() const { return numeric_.size(); }

  std::string serialize() const;
  static Encoder deserialize(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Encoder load(const std::filesystem::path& path);

  bool operator==(const Encoder&) const = default;

 private:
  struct NumericColumn {
    std::string name;
    std::size_t column = 0;
    bool log = false;
    float mean = 0.0f;
    float inv_scale = 1.0f;
    bool operator==(const NumericColumn&) const = default;
  };
  struct CategoricalColumn {
    std::string name;
    std::size_t column = 0;
    std::vector<std::string> vocab;
    bool operator==(const CategoricalColumn&) const = default;
  };
  // Output order follows schema column order; `order_` holds (is_categorical, index).
  std::vector<std::pair<bool, std::size_t>> order_;
  std::vector<NumericColumn> numeric_;
  std::vector<CategoricalColumn> categorical_;
  double xi_ = 1e-6;
  bool standardize_ = false;
  std::size_t arity_ = 0;
};

std::pair<FeatureMatrix, Encoder> one_hot_encode(const RawTable& table, const Schema& schema);

// ---------------------------------------------------------------------------
// Splits

struct LabeledSet {
  FeatureMatrix x;
  LabelVector y;
  std::vector<RowId> row_ids;
  std::size_t size() const { return row_ids.size(); }
};

/// Rows without labels. Training code only ever sees this type for the
/// unlabeled pool; the true labels live in SealedLabels.
struct UnlabeledSet {
  FeatureMatrix x;
  std::vector<RowId> row_ids;
  std::size_t size() const { return row_ids.size(); }
};

/// Ground truth for unlabeled rows, kept apart from the training path.
/// Used by evaluation harnesses and as the annotation oracle for active
/// resampling.
class SealedLabels {
 public:
  void insert(RowId id, ClassIndex label) { labels_[id] = label; }
  ClassIndex at(RowId id) const;
  bool contains(RowId id) const { return labels_.count(id) != 0; }
  void erase(RowId id) { labels_.erase(id); }
  std::vector<ClassIndex> lookup(std::span<const RowId> ids) const;
  std::size_t size() const { return labels_.size(); }
  const std::map<RowId, ClassIndex>& entries() const { return labels_; }

 private:
  std::map<RowId, ClassIndex> labels_;
};

struct SplitRatios {
  double label_ratio = 0.01;  // of the training pool
  double val_ratio = 0.2;     // of the non-test rows
  double test_ratio = 0.2;    // of all rows
};

/// Row positions (indices into the source table) of each partition.
struct SplitIndices {
  std::vector<std::size_t> labeled_train;
  std::vector<std::size_t> unlabeled_train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::vector<std::size_t> unseen_pool;
};

struct DatasetSplit {
  LabeledSet labeled_train;
  UnlabeledSet unlabeled_train;
  LabeledSet validation;
  LabeledSet test;
  /// Rows of held-out classes available for active resampling (empty unless
  /// an unseen-class setup asks for it).
  UnlabeledSet unseen_pool;
  SealedLabels sealed;
  std::vector<std::string> class_vocab;
  std::uint64_t seed = 0;

  std::size_t num_classes() const { return class_vocab.size(); }
  std::size_t input_dim() const { return labeled_train.x.cols(); }
  std::size_t total_rows() const;
};

/// Stratified partition of `labels` (class indices) into test, validation,
/// labeled and unlabeled training sets. Classes with fewer than two rows are
/// pooled and sampled globally.
SplitIndices split_indices(std::span<const ClassIndex> labels, std::size_t num_classes, const SplitRatios& ratios,
                           std::uint64_t seed);

/// Largest-remainder allocation of round(fraction * sum(counts)) across strata.
std::vector<std::size_t> allocate_stratified(std::span<const std::size_t> counts, double fraction);

struct PreparedSplit {
  DatasetSplit split;
  Encoder encoder;
  SplitIndices indices;
};

/// Encodes a table given a precomputed partition. The encoder is fitted on the
/// training rows (labeled and unlabeled) only.
PreparedSplit materialize_split(const RawTable& table, const Schema& schema, const std::vector<std::string>& vocab,
                                const SplitIndices& indices, std::uint64_t seed);

/// Full split: stratified partition followed by encoding.
PreparedSplit split_dataset(const RawTable& table, const Schema& schema, const SplitRatios& ratios,
                            std::uint64_t seed);

/// Same as split_dataset but every row of `heldout` classes is kept out of
/// training. With `pool_fraction` = 0 all held-out rows go to test; otherwise
/// that share of them is routed to the unseen pool instead.
PreparedSplit split_dataset_with_holdout(const RawTable& table, const Schema& schema, const SplitRatios& ratios,
                                         const std::set<std::string>& heldout, double pool_fraction,
                                         std::uint64_t seed);

/// Picks ceil(N/10) classes at random, never the most frequent class.
std::set<std::string> choose_heldout_classes(const RawTable& table, const Schema& schema, std::uint64_t seed);

void write_manifests(const std::filesystem::path& dir, const DatasetSplit& split);
std::vector<RowId> read_manifest(const std::filesystem::path& file);

}  // namespace semiwtc
