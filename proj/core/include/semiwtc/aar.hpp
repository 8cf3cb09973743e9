#pragma once

// Active adaption resampling: spread the embeddings of unseen samples with a
// learned linear projection, locate the dominant density center with mean
// shift, take the samples nearest that center, and move them (with oracle
// labels) into the labeled training set.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "semiwtc/dataflow.hpp"
#include "semiwtc/eval.hpp"
#include "semiwtc/netcore.hpp"
#include "semiwtc/rpm.hpp"

namespace semiwtc {

/// Bias-free linear map from embedding space to the projection space.
struct DilationProjector {
  DenseLayer layer;
  bool trained = false;

  Matrix project(const Matrix& embeddings) const { return layer.infer(embeddings); }
  static DilationProjector identity(std::size_t dim);
};

struct DilationConfig {
  float margin = 1.0f;
  std::size_t epochs = 20;
  std::size_t batch_size = 512;
  AdamConfig adam{};
  /// Projection width; 0 keeps the embedding width.
  std::size_t projection_dim = 0;
};

struct DilationReport {
  std::vector<double> epoch_losses;  // mean over usable minibatches
  double initial_loss = 0.0;         // full-set loss before training
  double final_loss = 0.0;           // full-set loss after training
  std::size_t skipped_batches = 0;   // batches with fewer than two classes
};

/// Per-class mean rows of `points` for the classes present; `present`
/// receives the class ids in ascending order.
Matrix class_means(const Matrix& points, std::span<const ClassIndex> classes, std::vector<ClassIndex>* present = nullptr);

/// Trains the projector with Adam on the dilation loss, where each class
/// vector is the minibatch mean of that class's projected embeddings. The
/// projector starts as the identity when widths match. Throws DomainError if
/// no minibatch holds two classes.
DilationProjector fit_dilation(const Matrix& embeddings, std::span<const ClassIndex> classes,
                               const DilationConfig& config, std::uint64_t seed, DilationReport* report = nullptr);

enum class Kernel { flat, gaussian };

struct MeanShiftConfig {
  double bandwidth = 1.0;
  std::size_t max_iters = 300;
  double tol = 1e-4;
  /// Converged positions closer than this collapse into one center; <= 0
  /// means bandwidth / 2.
  double merge_radius = 0.0;
  Kernel kernel = Kernel::flat;

  void validate() const;

  double effective_merge_radius() const { return merge_radius > 0.0 ? merge_radius : bandwidth / 2.0; }
};

struct MeanShiftResult {
  /// Centers ordered by descending member count (ties: lexicographic).
  Matrix centers;
  std::vector<std::size_t> center_sizes;
  std::vector<std::size_t> assignment;  // center index per input point
  std::vector<std::size_t> iterations;  // iterations used per point
  std::size_t dominant() const { return 0; }
};

/// Mean shift from every point. With the flat kernel each step moves a point
/// to the mean of the input points strictly within `bandwidth`; iteration
/// stops once the displacement falls below `tol`. Converged positions are
/// merged in input order. Throws ConfigError unless bandwidth > 0 and tol > 0.
MeanShiftResult mean_shift(const Matrix& points, const MeanShiftConfig& config);

/// One update of a single position. Returns the position unchanged when the
/// window holds no points.
RowVector mean_shift_step(const Matrix& points, const RowVector& position, const MeanShiftConfig& config);

/// Median pairwise Euclidean distance over a seeded subsample.
double estimate_bandwidth(const Matrix& points, std::uint64_t seed, std::size_t sample = 512);

/// Indices of the `count` points nearest `center`; ties by lower index.
std::vector<std::size_t> extract_core_samples(const Matrix& points, const RowVector& center, std::size_t count);

/// Moves unseen-pool rows (by position in split.unseen_pool) into the labeled
/// training set with the given labels.
void resample_and_update(DatasetSplit& split, std::span<const std::size_t> pool_indices,
                         std::span<const ClassIndex> labels);

struct AarConfig {
  double sample_fraction = 0.01;
  /// Outer training iterations between resampling rounds.
  std::size_t cadence_epochs = 5;
  DilationConfig dilation{};
  /// <= 0 selects the median-pairwise-distance estimate.
  double bandwidth = 0.0;
  MeanShiftConfig mean_shift{};
  std::size_t bandwidth_sample = 512;

  void validate() const;
};

struct AarRoundReport {
  std::size_t round = 0;
  std::size_t pool_size_before = 0;
  std::size_t injected = 0;
  std::size_t center_count = 0;
  std::size_t labeled_size_after = 0;
  double bandwidth = 0.0;
  bool pool_exhausted = false;
  bool dilation_skipped = false;
  Metrics metrics;  // test metrics after retraining
};

/// One round: dilation, mean shift, extraction, injection (labels from the
/// split's sealed oracle), then `cadence_epochs` outer training iterations.
AarRoundReport aar_round(RpmTrainer& trainer, DatasetSplit& split, const AarConfig& config, std::size_t round,
                         std::uint64_t seed);

void write_aar_report(std::ostream& out, const std::vector<AarRoundReport>& rounds);

}  // namespace semiwtc
