#include "semiwtc/aar.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include "semiwtc/log.hpp"
#include "semiwtc/losses.hpp"
#include "semiwtc/rng.hpp"

namespace semiwtc {

namespace {

using MatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowD = Eigen::Matrix<double, 1, Eigen::Dynamic>;

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

bool rows_nonzero(const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (m.row(i).squaredNorm() == 0.0f) return false;
  return true;
}

// Full-set dilation loss, or 0 when it is undefined.
double set_loss(const Matrix& projected, std::span<const ClassIndex> classes, float margin) {
  std::vector<ClassIndex> present;
  const Matrix means = class_means(projected, classes, &present);
  if (present.size() < 2 || !rows_nonzero(means)) return 0.0;
  return dilation_loss(means, margin);
}

}  // namespace

DilationProjector DilationProjector::identity(std::size_t dim) {
  DilationProjector p{DenseLayer("dilation", dim, dim, false)};
  p.layer.weight().value = Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  return p;
}

Matrix class_means(const Matrix& points, std::span<const ClassIndex> classes, std::vector<ClassIndex>* present) {
  if (classes.size() != static_cast<std::size_t>(points.rows()))
    throw DimensionError("class_means: class count does not match row count");
  std::map<ClassIndex, std::pair<RowD, std::size_t>> acc;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    auto [it, fresh] = acc.try_emplace(classes[i], RowD::Zero(points.cols()), 0);
    it->second.first += points.row(static_cast<Eigen::Index>(i)).cast<double>();
    ++it->second.second;
  }
  Matrix out(static_cast<Eigen::Index>(acc.size()), points.cols());
  if (present) present->clear();
  Eigen::Index r = 0;
  for (const auto& [cls, sum] : acc) {
    out.row(r++) = (sum.first / static_cast<double>(sum.second)).cast<float>();
    if (present) present->push_back(cls);
  }
  return out;
}

DilationProjector fit_dilation(const Matrix& embeddings, std::span<const ClassIndex> classes,
                               const DilationConfig& config, std::uint64_t seed, DilationReport* report) {
  if (classes.size() != static_cast<std::size_t>(embeddings.rows()))
    throw DimensionError("fit_dilation: class count does not match row count");
  if (config.batch_size < 2) throw ConfigError("fit_dilation: batch_size must be at least 2");
  const auto dim = static_cast<std::size_t>(embeddings.cols());
  const std::size_t out_dim = config.projection_dim == 0 ? dim : config.projection_dim;

  DilationProjector proj;
  if (out_dim == dim) {
    proj = DilationProjector::identity(dim);
  } else {
    proj.layer = DenseLayer("dilation", dim, out_dim, false);
    Rng init = Rng::substream(seed, "dilation-init");
    proj.layer.init_he_uniform(init);
  }

  DilationReport rep;
  rep.initial_loss = set_loss(proj.project(embeddings), classes, config.margin);

  Adam adam(config.adam);
  Rng rng = Rng::substream(seed, "dilation");
  const std::size_t n = classes.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Param& W = proj.layer.weight();
  std::vector<ClassIndex> yb;
  std::vector<ClassIndex> present;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Matrix eb = gather_rows(embeddings, idx);
      yb.clear();
      for (std::size_t i : idx) yb.push_back(classes[i]);
      const Matrix z = proj.project(eb);
      const Matrix means = class_means(z, yb, &present);
      if (present.size() < 2 || !rows_nonzero(means)) {
        ++rep.skipped_batches;
        continue;
      }
      const LossGrad g = dilation_loss_grad(means, config.margin);
      total += g.value;
      ++used;

      // Each class mean averages its rows, so each row gets 1/n_k of the gradient.
      std::map<ClassIndex, Eigen::Index> slot;
      std::vector<float> inv_count(present.size(), 0.0f);
      for (std::size_t k = 0; k < present.size(); ++k) slot[present[k]] = static_cast<Eigen::Index>(k);
      for (ClassIndex c : yb) inv_count[static_cast<std::size_t>(slot[c])] += 1.0f;
      for (float& v : inv_count) v = 1.0f / v;
      Matrix grad_z(z.rows(), z.cols());
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const Eigen::Index k = slot[yb[static_cast<std::size_t>(r)]];
        grad_z.row(r) = g.grad.row(k) * inv_count[static_cast<std::size_t>(k)];
      }
      W.grad = grad_z.transpose() * eb;
      Param* params[] = {&W};
      adam.step(params);
    }
    if (epoch == 0 && used == 0)
      throw DomainError("fit_dilation: every minibatch holds a single class");
    rep.epoch_losses.push_back(used ? total / static_cast<double>(used) : 0.0);
  }
  if (!all_finite(W.value)) throw NumericError("fit_dilation: projector weights are not finite");
  rep.final_loss = set_loss(proj.project(embeddings), classes, config.margin);
  proj.trained = true;
  if (report) *report = std::move(rep);
  return proj;
}

void MeanShiftConfig::validate() const {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw ConfigError("mean shift bandwidth must be positive");
  if (!(tol > 0.0)) throw ConfigError("mean shift tol must be positive");
  if (max_iters == 0) throw ConfigError("mean shift max_iters must be positive");
}

namespace {

// One synchronous update of `pos` rows against all points. Rows whose window
// is empty keep their position.
MatrixD shift_rows(const MatrixD& pts, const RowD& pts_sq, const MatrixD& pos, const MeanShiftConfig& cfg) {
  const double h2 = cfg.bandwidth * cfg.bandwidth;
  MatrixD d2 = (-2.0 * pos * pts.transpose());
  d2.colwise() += pos.rowwise().squaredNorm();
  d2.rowwise() += pts_sq;
  MatrixD w(d2.rows(), d2.cols());
  if (cfg.kernel == Kernel::flat) {
    w = (d2.array() < h2).cast<double>();
  } else {
    w = (-d2.array().max(0.0) / (2.0 * h2)).exp();
  }
  const Eigen::VectorXd mass = w.rowwise().sum();
  MatrixD out = w * pts;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (mass(i) > 0.0)
      out.row(i) /= mass(i);
    else
      out.row(i) = pos.row(i);
  }
  return out;
}

}  // namespace

RowVector mean_shift_step(const Matrix& points, const RowVector& position, const MeanShiftConfig& config) {
  config.validate();
  if (position.size() != points.cols()) throw DimensionError("mean_shift_step: position width mismatch");
  const MatrixD pts = points.cast<double>();
  const RowD sq = pts.rowwise().squaredNorm().transpose();
  const MatrixD pos = position.cast<double>();
  return shift_rows(pts, sq, pos, config).cast<float>();
}

MeanShiftResult mean_shift(const Matrix& points, const MeanShiftConfig& config) {
  config.validate();
  const auto n = static_cast<std::size_t>(points.rows());
  if (n == 0) throw DimensionError("mean_shift: no points");
  const MatrixD pts = points.cast<double>();
  const RowD sq = pts.rowwise().squaredNorm().transpose();

  MatrixD pos = pts;
  std::vector<std::size_t> iters(n, 0);
  std::vector<std::size_t> active(n);
  std::iota(active.begin(), active.end(), std::size_t{0});
  constexpr std::size_t kChunk = 256;

  for (std::size_t it = 0; it < config.max_iters && !active.empty(); ++it) {
    std::vector<std::size_t> still;
    for (std::size_t start = 0; start < active.size(); start += kChunk) {
      const std::size_t end = std::min(active.size(), start + kChunk);
      MatrixD block(static_cast<Eigen::Index>(end - start), pts.cols());
      for (std::size_t k = start; k < end; ++k) block.row(static_cast<Eigen::Index>(k - start)) = pos.row(static_cast<Eigen::Index>(active[k]));
      const MatrixD next = shift_rows(pts, sq, block, config);
      for (std::size_t k = start; k < end; ++k) {
        const auto i = static_cast<Eigen::Index>(active[k]);
        const auto r = static_cast<Eigen::Index>(k - start);
        const double moved = (next.row(r) - pos.row(i)).norm();
        pos.row(i) = next.row(r);
        ++iters[active[k]];
        if (moved >= config.tol) still.push_back(active[k]);
      }
    }
    active = std::move(still);
  }
  if (!active.empty())
    log_debug("mean shift: " + std::to_string(active.size()) + " points hit max_iters");

  // Merge converged positions in input order.
  const double radius = config.effective_merge_radius();
  std::vector<RowD> reps;
  std::vector<RowD> sums;
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> group(n);
  for (std::size_t i = 0; i < n; ++i) {
    const RowD p = pos.row(static_cast<Eigen::Index>(i));
    std::size_t found = reps.size();
    for (std::size_t g = 0; g < reps.size(); ++g) {
      if ((reps[g] - p).norm() < radius) {
        found = g;
        break;
      }
    }
    if (found == reps.size()) {
      reps.push_back(p);
      sums.push_back(RowD::Zero(pts.cols()));
      sizes.push_back(0);
    }
    sums[found] += p;
    ++sizes[found];
    group[i] = found;
  }

  const std::size_t k = reps.size();
  std::vector<RowD> centers(k);
  for (std::size_t g = 0; g < k; ++g) centers[g] = sums[g] / static_cast<double>(sizes[g]);
  std::vector<std::size_t> rank(k);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    if (sizes[a] != sizes[b]) return sizes[a] > sizes[b];
    return std::lexicographical_compare(centers[a].data(), centers[a].data() + centers[a].size(), centers[b].data(),
                                        centers[b].data() + centers[b].size());
  });
  std::vector<std::size_t> new_index(k);
  for (std::size_t r = 0; r < k; ++r) new_index[rank[r]] = r;

  MeanShiftResult res;
  res.centers.resize(static_cast<Eigen::Index>(k), points.cols());
  res.center_sizes.resize(k);
  for (std::size_t r = 0; r < k; ++r) {
    res.centers.row(static_cast<Eigen::Index>(r)) = centers[rank[r]].cast<float>();
    res.center_sizes[r] = sizes[rank[r]];
  }
  res.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) res.assignment[i] = new_index[group[i]];
  res.iterations = std::move(iters);
  return res;
}

double estimate_bandwidth(const Matrix& points, std::uint64_t seed, std::size_t sample) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (n < 2) return 0.0;
  std::vector<std::size_t> idx;
  if (n > sample) {
    Rng rng = Rng::substream(seed, "bandwidth");
    idx = rng.sample_indices(n, sample);
  } else {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
  }
  std::vector<double> d;
  d.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = a + 1; b < idx.size(); ++b)
      d.push_back((points.row(static_cast<Eigen::Index>(idx[a])).cast<double>() -
                   points.row(static_cast<Eigen::Index>(idx[b])).cast<double>())
                      .norm());
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  const double hi = d[mid];
  if (d.size() % 2 == 1) return hi;
  const double lo = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

std::vector<std::size_t> extract_core_samples(const Matrix& points, const RowVector& center, std::size_t count) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (count > n) throw DimensionError("extract_core_samples: count exceeds the number of points");
  if (center.size() != points.cols()) throw DimensionError("extract_core_samples: center width mismatch");
  std::vector<double> dist(n);
  const RowD c = center.cast<double>();
  for (std::size_t i = 0; i < n; ++i) dist[i] = (points.row(static_cast<Eigen::Index>(i)).cast<double>() - c).squaredNorm();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  order.resize(count);
  return order;
}

void resample_and_update(DatasetSplit& split, std::span<const std::size_t> pool_indices,
                         std::span<const ClassIndex> labels) {
  if (pool_indices.size() != labels.size())
    throw DimensionError("resample_and_update: one label is required per index");
  if (pool_indices.empty()) return;
  UnlabeledSet& pool = split.unseen_pool;
  const std::size_t C = split.num_classes();
  std::set<std::size_t> chosen;
  for (std::size_t i = 0; i < pool_indices.size(); ++i) {
    if (pool_indices[i] >= pool.size()) throw DimensionError("resample_and_update: index outside the unseen pool");
    if (!chosen.insert(pool_indices[i]).second) throw DomainError("resample_and_update: duplicate index");
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= C)
      throw DomainError("resample_and_update: label outside the class vocabulary");
  }

  LabeledSet& lab = split.labeled_train;
  const Eigen::Index old_rows = lab.x.data.rows();
  const Eigen::Index add = static_cast<Eigen::Index>(pool_indices.size());
  Matrix grown(old_rows + add, pool.x.data.cols());
  if (old_rows > 0) grown.topRows(old_rows) = lab.x.data;
  for (std::size_t i = 0; i < pool_indices.size(); ++i) {
    grown.row(old_rows + static_cast<Eigen::Index>(i)) = pool.x.data.row(static_cast<Eigen::Index>(pool_indices[i]));
    const RowId id = pool.row_ids[pool_indices[i]];
    lab.row_ids.push_back(id);
    lab.y.labels.push_back(labels[i]);
    split.sealed.erase(id);
  }
  lab.x.data = std::move(grown);
  if (lab.x.feature_names.empty()) lab.x.feature_names = pool.x.feature_names;

  std::vector<std::size_t> keep;
  keep.reserve(pool.size() - chosen.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!chosen.count(i)) keep.push_back(i);
  Matrix rest = gather_rows(pool.x.data, keep);
  std::vector<RowId> rest_ids;
  rest_ids.reserve(keep.size());
  for (std::size_t i : keep) rest_ids.push_back(pool.row_ids[i]);
  pool.x.data = std::move(rest);
  pool.row_ids = std::move(rest_ids);
}

void AarConfig::validate() const {
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) throw ConfigError("aar sample_fraction must be in (0, 1]");
  if (!(dilation.margin >= 0.0f)) throw ConfigError("aar margin must be non-negative");
}

AarRoundReport aar_round(RpmTrainer& trainer, DatasetSplit& split, const AarConfig& config, std::size_t round,
                         std::uint64_t seed) {
  config.validate();
  AarRoundReport rep;
  rep.round = round;
  rep.pool_size_before = split.unseen_pool.size();
  rep.labeled_size_after = split.labeled_train.size();
  if (split.unseen_pool.size() == 0) {
    rep.pool_exhausted = true;
    if (split.test.size() > 0) rep.metrics = evaluate_model(trainer.model(), split.test);
    return rep;
  }
  const std::uint64_t round_seed = splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * (round + 1)));
  const RBMLPModel& model = trainer.model();
  const Matrix emb = model.embed(split.unseen_pool.x.data);
  const std::vector<ClassIndex> predicted = predict(model, split.unseen_pool.x.data, Head::sup);

  DilationProjector proj;
  try {
    proj = fit_dilation(emb, predicted, config.dilation, round_seed);
  } catch (const DomainError& e) {
    log_info(std::string("aar: dilation skipped: ") + e.what());
    proj = DilationProjector::identity(static_cast<std::size_t>(emb.cols()));
    rep.dilation_skipped = true;
  }
  const Matrix projected = proj.project(emb);

  MeanShiftConfig ms = config.mean_shift;
  ms.bandwidth = config.bandwidth > 0.0 ? config.bandwidth
                                        : estimate_bandwidth(projected, round_seed, config.bandwidth_sample);
  // Coincident points give a zero estimate; any positive radius then works.
  if (!(ms.bandwidth > 0.0)) ms.bandwidth = 1.0;
  rep.bandwidth = ms.bandwidth;
  const MeanShiftResult clusters = mean_shift(projected, ms);
  rep.center_count = clusters.centers.rows();

  const std::size_t pool_n = split.unseen_pool.size();
  const auto count = std::min(
      pool_n, static_cast<std::size_t>(std::ceil(config.sample_fraction * static_cast<double>(pool_n) - 1e-9)));
  const RowVector center = clusters.centers.row(static_cast<Eigen::Index>(clusters.dominant()));
  const std::vector<std::size_t> picked = extract_core_samples(projected, center, count);
  std::vector<RowId> ids;
  ids.reserve(picked.size());
  for (std::size_t i : picked) ids.push_back(split.unseen_pool.row_ids[i]);
  const std::vector<ClassIndex> oracle = split.sealed.lookup(ids);
  resample_and_update(split, picked, oracle);
  rep.injected = picked.size();
  rep.labeled_size_after = split.labeled_train.size();

  trainer.run(split, config.cadence_epochs, false);
  if (split.test.size() > 0) rep.metrics = evaluate_model(trainer.model(), split.test);
  return rep;
}

void write_aar_report(std::ostream& out, const std::vector<AarRoundReport>& rounds) {
  out << "round\tpool_size\tinjected\tcenters\tlabeled\tbandwidth\taccuracy\tmacro_f1\ttpr\tfpr\texhausted\n";
  for (const auto& r : rounds) {
    out << r.round << '\t' << r.pool_size_before << '\t' << r.injected << '\t' << r.center_count << '\t'
        << r.labeled_size_after << '\t' << r.bandwidth << '\t' << r.metrics.accuracy << '\t' << r.metrics.macro_f1
        << '\t' << r.metrics.tpr << '\t' << r.metrics.fpr << '\t' << (r.pool_exhausted ? 1 : 0) << '\n';
  }
}

}  // namespace semiwtc
