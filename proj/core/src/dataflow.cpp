#include "semiwtc/dataflow.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "semiwtc/log.hpp"
#include "semiwtc/rng.hpp"
#include "semiwtc/util.hpp"

namespace semiwtc {

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::numeric:
      return "numeric";
    case ColumnKind::categorical:
      return "categorical";
    case ColumnKind::label:
      return "label";
    case ColumnKind::ignore:
      return "ignore";
  }
  return "?";
}

namespace {

ColumnKind parse_kind(std::string_view s) {
  if (s == "numeric") return ColumnKind::numeric;
  if (s == "categorical") return ColumnKind::categorical;
  if (s == "label") return ColumnKind::label;
  if (s == "ignore") return ColumnKind::ignore;
  throw ConfigError("unknown column kind '" + std::string(s) + "'");
}

float parse_float_field(const std::string& field, std::size_t row, std::string_view column) {
  float v = 0.0f;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("row " + std::to_string(row) + ": column '" + std::string(column) + "' is not numeric: '" +
                     field + "'");
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Schema

void Schema::validate() const {
  if (columns.empty()) throw ConfigError("schema has no columns");
  std::size_t labels = 0;
  std::set<std::string> names;
  for (const auto& c : columns) {
    if (c.name.empty()) throw ConfigError("schema column with empty name");
    if (!names.insert(c.name).second) throw ConfigError("duplicate schema column '" + c.name + "'");
    if (c.kind == ColumnKind::label) ++labels;
    if (c.log_transform && c.kind != ColumnKind::numeric)
      throw ConfigError("log flag on non-numeric column '" + c.name + "'");
  }
  if (labels != 1) throw ConfigError("schema must have exactly one label column, found " + std::to_string(labels));
  if (keep_labels.empty()) throw ConfigError("schema keep_labels is empty");
  if (merged_label_name.empty()) throw ConfigError("schema merged_label is empty");
  if (!(log_xi > 0.0)) throw ConfigError("schema log_xi must be positive");
}

std::size_t Schema::label_column() const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].kind == ColumnKind::label) return i;
  throw ConfigError("schema has no label column");
}

std::size_t Schema::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return i;
  throw ConfigError("schema has no column '" + std::string(name) + "'");
}

Schema Schema::parse(std::string_view text) {
  Schema s;
  std::size_t line_no = 0;
  for (const auto& raw : split_lines(text)) {
    ++line_no;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    auto tok = split_ws(line);
    const std::string& key = tok[0];
    auto need = [&](std::size_t n) {
      if (tok.size() < n) throw ConfigError("schema line " + std::to_string(line_no) + ": too few fields");
    };
    if (key == "column") {
      need(3);
      ColumnSpec c;
      c.name = tok[1];
      c.kind = parse_kind(tok[2]);
      for (std::size_t i = 3; i < tok.size(); ++i) {
        if (tok[i] == "log")
          c.log_transform = true;
        else
          throw ConfigError("schema line " + std::to_string(line_no) + ": unknown flag '" + tok[i] + "'");
      }
      s.columns.push_back(std::move(c));
    } else if (key == "keep_labels") {
      need(2);
      for (std::size_t i = 1; i < tok.size(); ++i)
        for (auto& l : split(tok[i], ','))
          if (!trim(l).empty()) s.keep_labels.insert(trim(l));
    } else if (key == "merged_label") {
      need(2);
      s.merged_label_name = tok[1];
    } else if (key == "delimiter") {
      need(2);
      if (tok[1] == "tab" || tok[1] == "\\t")
        s.delimiter = '\t';
      else if (tok[1].size() == 1)
        s.delimiter = tok[1][0];
      else
        throw ConfigError("schema line " + std::to_string(line_no) + ": delimiter must be one character");
    } else if (key == "header") {
      need(2);
      s.has_header = parse_bool(tok[1]);
    } else if (key == "log_xi") {
      need(2);
      s.log_xi = std::stod(tok[1]);
    } else if (key == "standardize") {
      need(2);
      s.standardize = parse_bool(tok[1]);
    } else {
      throw ConfigError("schema line " + std::to_string(line_no) + ": unknown directive '" + key + "'");
    }
  }
  s.validate();
  return s;
}

Schema Schema::load(const std::filesystem::path& path) {
  return parse(read_text_file(path));
}

std::string Schema::to_text() const {
  std::ostringstream out;
  out << "delimiter " << (delimiter == '\t' ? std::string("tab") : std::string(1, delimiter)) << '\n';
  out << "header " << (has_header ? "true" : "false") << '\n';
  out << "log_xi " << std::setprecision(17) << log_xi << '\n';
  out << "standardize " << (standardize ? "true" : "false") << '\n';
  out << "merged_label " << merged_label_name << '\n';
  out << "keep_labels " << join(std::vector<std::string>(keep_labels.begin(), keep_labels.end()), ",") << '\n';
  for (const auto& c : columns) {
    out << "column " << c.name << ' ' << to_string(c.kind);
    if (c.log_transform) out << " log";
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// CSV

RawTable RawTable::subset(std::span<const std::size_t> indices) const {
  RawTable out;
  out.header = header;
  out.ignored = ignored;
  out.rows.reserve(indices.size());
  out.row_ids.reserve(indices.size());
  for (std::size_t i : indices) {
    out.rows.push_back(rows.at(i));
    out.row_ids.push_back(row_ids.at(i));
  }
  return out;
}

RawTable parse_csv(std::istream& in, const Schema& schema, std::string_view source) {
  RawTable table;
  const std::size_t arity = schema.columns.size();
  for (const auto& c : schema.columns) {
    table.header.push_back(c.name);
    table.ignored.push_back(c.kind == ColumnKind::ignore);
  }
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = schema.has_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line, schema.delimiter);
    for (auto& f : fields) f = trim(f);
    if (header_pending) {
      header_pending = false;
      if (fields.size() != arity) {
        throw ParseError(std::string(source) + ": header has " + std::to_string(fields.size()) +
                         " fields, schema expects " + std::to_string(arity));
      }
      continue;
    }
    if (fields.size() != arity) {
      throw ParseError(std::string(source) + ": row " + std::to_string(line_no) + " has " +
                       std::to_string(fields.size()) + " fields, expected " + std::to_string(arity));
    }
    table.row_ids.push_back(static_cast<RowId>(table.rows.size()));
    table.rows.push_back(std::move(fields));
  }
  if (in.bad()) throw IoError(std::string(source) + ": read failure");
  return table;
}

RawTable load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return parse_csv(in, schema, path.string());
}

// ---------------------------------------------------------------------------
// Transforms

std::vector<float> log_transform(std::span<const float> values, double xi) {
  if (!(xi > 0.0)) throw DomainError("log_transform: xi must be positive");
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double shifted = static_cast<double>(values[i]) + xi;
    if (!(shifted > 0.0) || !std::isfinite(shifted)) {
      throw DomainError("log_transform: value " + std::to_string(values[i]) + " at position " + std::to_string(i) +
                        " gives non-positive argument");
    }
    out[i] = static_cast<float>(std::log(shifted));
  }
  return out;
}

std::vector<std::string> merge_rare_labels(std::span<const std::string> labels, const Schema& schema) {
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(schema.keep_labels.count(l) ? l : schema.merged_label_name);
  return out;
}

std::size_t merge_rare_labels(RawTable& table, const Schema& schema) {
  const std::size_t col = schema.label_column();
  std::size_t changed = 0;
  for (auto& row : table.rows) {
    if (!schema.keep_labels.count(row[col])) {
      if (row[col] != schema.merged_label_name) ++changed;
      row[col] = schema.merged_label_name;
    }
  }
  return changed;
}

std::vector<std::string> label_column_values(const RawTable& table, const Schema& schema) {
  const std::size_t col = schema.label_column();
  std::vector<std::string> out;
  out.reserve(table.size());
  for (const auto& row : table.rows) out.push_back(row[col]);
  return out;
}

RawTable downsample(const RawTable& table, const Schema& schema, std::size_t per_class_cap, std::uint64_t seed) {
  if (per_class_cap == 0) throw ConfigError("downsample: cap must be positive");
  const std::size_t col = schema.label_column();
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < table.size(); ++i) by_class[table.rows[i][col]].push_back(i);

  Rng rng = Rng::substream(seed, "downsample");
  std::vector<std::size_t> keep;
  for (auto& [label, idx] : by_class) {
    if (idx.size() <= per_class_cap) {
      keep.insert(keep.end(), idx.begin(), idx.end());
      continue;
    }
    for (std::size_t pos : rng.sample_indices(idx.size(), per_class_cap)) keep.push_back(idx[pos]);
  }
  std::sort(keep.begin(), keep.end());
  return table.subset(keep);
}

// ---------------------------------------------------------------------------
// Labels

std::vector<std::string> build_class_vocab(const RawTable& table, const Schema& schema) {
  const std::size_t col = schema.label_column();
  std::set<std::string> names;
  for (const auto& row : table.rows) names.insert(row[col]);
  return {names.begin(), names.end()};
}

LabelVector encode_labels(const RawTable& table, const Schema& schema, const std::vector<std::string>& vocab) {
  const std::size_t col = schema.label_column();
  std::unordered_map<std::string, ClassIndex> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(vocab[i], static_cast<ClassIndex>(i));
  LabelVector out;
  out.class_vocab = vocab;
  out.labels.reserve(table.size());
  for (std::size_t r = 0; r < table.size(); ++r) {
    auto it = index.find(table.rows[r][col]);
    if (it == index.end())
      throw ParseError("row " + std::to_string(table.row_ids[r]) + ": label '" + table.rows[r][col] +
                       "' not in class vocabulary");
    out.labels.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Encoder

Encoder Encoder::fit(const RawTable& train, const Schema& schema) {
  schema.validate();
  Encoder enc;
  enc.xi_ = schema.log_xi;
  enc.standardize_ = schema.standardize;
  enc.arity_ = schema.columns.size();
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& spec = schema.columns[c];
    if (spec.kind == ColumnKind::numeric) {
      NumericColumn col{spec.name, c, spec.log_transform, 0.0f, 1.0f};
      if (enc.standardize_ && train.size() > 0) {
        std::vector<float> values;
        values.reserve(train.size());
        for (std::size_t r = 0; r < train.size(); ++r)
          values.push_back(parse_float_field(train.rows[r][c], train.row_ids[r], spec.name));
        if (col.log) values = log_transform(values, enc.xi_);
        double mean = 0.0;
        for (float v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (float v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(values.size());
        col.mean = static_cast<float>(mean);
        col.inv_scale = var > 1e-12 ? static_cast<float>(1.0 / std::sqrt(var)) : 1.0f;
      }
      enc.order_.emplace_back(false, enc.numeric_.size());
      enc.numeric_.push_back(std::move(col));
    } else if (spec.kind == ColumnKind::categorical) {
      std::set<std::string> values;
      for (const auto& row : train.rows) values.insert(row[c]);
      enc.order_.emplace_back(true, enc.categorical_.size());
      enc.categorical_.push_back({spec.name, c, {values.begin(), values.end()}});
    }
  }
  return enc;
}

std::size_t Encoder::one_hot_width() const {
  std::size_t w = 0;
  for (const auto& c : categorical_) w += c.vocab.size();
  return w;
}

std::size_t Encoder::width() const { return numeric_.size() + one_hot_width(); }

std::vector<std::string> Encoder::feature_names() const {
  std::vector<std::string> names;
  names.reserve(width());
  for (auto [is_cat, i] : order_) {
    if (!is_cat) {
      names.push_back(numeric_[i].name);
    } else {
      for (const auto& v : categorical_[i].vocab) names.push_back(categorical_[i].name + "=" + v);
    }
  }
  return names;
}

FeatureMatrix Encoder::encode(const RawTable& table) const {
  for (const auto& row : table.rows)
    if (row.size() != arity_)
      throw DimensionError("encode: row arity " + std::to_string(row.size()) + " != " + std::to_string(arity_));

  FeatureMatrix fm;
  fm.feature_names = feature_names();
  fm.data = Matrix::Zero(static_cast<Eigen::Index>(table.size()), static_cast<Eigen::Index>(width()));

  std::vector<std::unordered_map<std::string, std::size_t>> lookups;
  lookups.reserve(categorical_.size());
  for (const auto& c : categorical_) {
    std::unordered_map<std::string, std::size_t> m;
    for (std::size_t i = 0; i < c.vocab.size(); ++i) m.emplace(c.vocab[i], i);
    lookups.push_back(std::move(m));
  }

  std::size_t offset = 0;
  for (auto [is_cat, i] : order_) {
    if (!is_cat) {
      const auto& col = numeric_[i];
      std::vector<float> values(table.size());
      for (std::size_t r = 0; r < table.size(); ++r)
        values[r] = parse_float_field(table.rows[r][col.column], table.row_ids[r], col.name);
      if (col.log) values = log_transform(values, xi_);
      for (std::size_t r = 0; r < table.size(); ++r) {
        float v = values[r];
        if (standardize_) v = (v - col.mean) * col.inv_scale;
        if (!std::isfinite(v))
          throw DomainError("row " + std::to_string(table.row_ids[r]) + ": non-finite value in '" + col.name + "'");
        fm.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(offset)) = v;
      }
      offset += 1;
    } else {
      const auto& col = categorical_[i];
      const auto& lookup = lookups[i];
      for (std::size_t r = 0; r < table.size(); ++r) {
        auto it = lookup.find(table.rows[r][col.column]);
        if (it != lookup.end())
          fm.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(offset + it->second)) = 1.0f;
      }
      offset += col.vocab.size();
    }
  }
  return fm;
}

std::string Encoder::serialize() const {
  std::ostringstream out;
  out << kMagic << ' ' << kVersion << '\n';
  out << "xi " << hexfloat(xi_) << '\n';
  out << "standardize " << (standardize_ ? 1 : 0) << '\n';
  out << "arity " << arity_ << '\n';
  out << "columns " << order_.size() << '\n';
  for (auto [is_cat, i] : order_) {
    if (!is_cat) {
      const auto& c = numeric_[i];
      out << "numeric " << c.name << ' ' << c.column << ' ' << (c.log ? 1 : 0) << ' ' << hexfloat(c.mean) << ' '
          << hexfloat(c.inv_scale) << '\n';
    } else {
      const auto& c = categorical_[i];
      out << "categorical " << c.name << ' ' << c.column << ' ' << c.vocab.size() << '\n';
      for (const auto& v : c.vocab) out << v << '\n';
    }
  }
  out << "end\n";
  return out.str();
}

Encoder Encoder::deserialize(std::string_view text) {
  auto lines = split_lines(text);
  std::size_t pos = 0;
  auto next = [&]() -> std::string {
    if (pos >= lines.size()) throw ParseError("encoder state truncated");
    std::string l = lines[pos++];
    if (!l.empty() && l.back() == '\r') l.pop_back();
    return l;
  };
  auto head = split_ws(next());
  if (head.size() != 2 || head[0] != kMagic) throw ParseError("encoder state: bad magic");
  if (std::stoi(head[1]) != kVersion) throw ParseError("encoder state: unsupported version " + head[1]);

  Encoder enc;
  auto expect = [&](std::string_view key) {
    auto tok = split_ws(next());
    if (tok.size() != 2 || tok[0] != key) throw ParseError("encoder state: expected '" + std::string(key) + "'");
    return tok[1];
  };
  enc.xi_ = parse_hexfloat(expect("xi"));
  enc.standardize_ = expect("standardize") == "1";
  enc.arity_ = std::stoul(expect("arity"));
  const std::size_t n = std::stoul(expect("columns"));
  for (std::size_t k = 0; k < n; ++k) {
    auto tok = split_ws(next());
    if (tok.size() == 6 && tok[0] == "numeric") {
      NumericColumn c{tok[1], std::stoul(tok[2]), tok[3] == "1", static_cast<float>(parse_hexfloat(tok[4])),
                      static_cast<float>(parse_hexfloat(tok[5]))};
      enc.order_.emplace_back(false, enc.numeric_.size());
      enc.numeric_.push_back(std::move(c));
    } else if (tok.size() == 4 && tok[0] == "categorical") {
      CategoricalColumn c{tok[1], std::stoul(tok[2]), {}};
      const std::size_t k_vals = std::stoul(tok[3]);
      for (std::size_t v = 0; v < k_vals; ++v) c.vocab.push_back(next());
      enc.order_.emplace_back(true, enc.categorical_.size());
      enc.categorical_.push_back(std::move(c));
    } else {
      throw ParseError("encoder state: malformed column record");
    }
  }
  if (next() != "end") throw ParseError("encoder state: missing end marker");
  return enc;
}

void Encoder::save(const std::filesystem::path& path) const { write_text_file(path, serialize()); }

Encoder Encoder::load(const std::filesystem::path& path) { return deserialize(read_text_file(path)); }

std::pair<FeatureMatrix, Encoder> one_hot_encode(const RawTable& table, const Schema& schema) {
  Encoder enc = Encoder::fit(table, schema);
  FeatureMatrix fm = enc.encode(table);
  return {std::move(fm), std::move(enc)};
}

// ---------------------------------------------------------------------------
// Splits

ClassIndex SealedLabels::at(RowId id) const {
  auto it = labels_.find(id);
  if (it == labels_.end()) throw StateError("no sealed label for row " + std::to_string(id));
  return it->second;
}

std::vector<ClassIndex> SealedLabels::lookup(std::span<const RowId> ids) const {
  std::vector<ClassIndex> out;
  out.reserve(ids.size());
  for (RowId id : ids) out.push_back(at(id));
  return out;
}

std::size_t DatasetSplit::total_rows() const {
  return labeled_train.size() + unlabeled_train.size() + validation.size() + test.size() + unseen_pool.size();
}

std::vector<std::size_t> allocate_stratified(std::span<const std::size_t> counts, double fraction) {
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
  std::vector<std::size_t> quota(counts.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const double exact = fraction * static_cast<double>(counts[c]);
    quota[c] = std::min(counts[c], static_cast<std::size_t>(std::floor(exact)));
    assigned += quota[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  // Largest remainder first; ties go to the lower stratum index.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t k = 0;
  while (assigned < target && k < remainders.size() * 2) {
    const std::size_t c = remainders[k % remainders.size()].second;
    if (quota[c] < counts[c]) {
      ++quota[c];
      ++assigned;
    }
    ++k;
  }
  return quota;
}

namespace {

constexpr std::size_t kMinStratum = 2;

// Draws round(fraction * |pool|) rows from `pool`, stratified by label.
// Returns (selected, rest), both sorted.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_take(
    const std::vector<std::size_t>& pool, std::span<const ClassIndex> labels, std::size_t num_classes,
    double fraction, Rng& rng, std::string_view what) {
  // Strata: one per class with enough rows, plus one shared stratum for the rest.
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i : pool) by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);
  std::vector<std::vector<std::size_t>> strata;
  std::vector<std::size_t> pooled;
  for (auto& rows : by_class) {
    if (rows.empty()) continue;
    if (rows.size() < kMinStratum && fraction < 1.0) {
      pooled.insert(pooled.end(), rows.begin(), rows.end());
    } else {
      strata.push_back(std::move(rows));
    }
  }
  if (!pooled.empty()) {
    log_warn(std::string(what) + ": " + std::to_string(pooled.size()) +
             " rows from classes too small to stratify are sampled globally");
    std::sort(pooled.begin(), pooled.end());
    strata.push_back(std::move(pooled));
  }
  std::vector<std::size_t> counts;
  for (const auto& s : strata) counts.push_back(s.size());
  const auto quota = allocate_stratified(counts, fraction);

  std::vector<std::size_t> selected;
  std::vector<std::size_t> rest;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    auto chosen = rng.sample_indices(strata[s].size(), quota[s]);
    std::vector<bool> mark(strata[s].size(), false);
    for (std::size_t c : chosen) mark[c] = true;
    for (std::size_t j = 0; j < strata[s].size(); ++j) (mark[j] ? selected : rest).push_back(strata[s][j]);
  }
  std::sort(selected.begin(), selected.end());
  std::sort(rest.begin(), rest.end());
  return {std::move(selected), std::move(rest)};
}

void check_ratios(const SplitRatios& r) {
  auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!(r.label_ratio > 0.0 && r.label_ratio <= 1.0)) throw ConfigError("label_ratio must be in (0, 1]");
  if (!in_unit(r.val_ratio)) throw ConfigError("val_ratio must be in (0, 1)");
  if (!in_unit(r.test_ratio)) throw ConfigError("test_ratio must be in (0, 1)");
  if (r.val_ratio + r.test_ratio >= 1.0) throw ConfigError("val_ratio + test_ratio must be < 1");
}

LabeledSet make_labeled(const RawTable& table, const Schema& schema, const std::vector<std::string>& vocab,
                        const Encoder& enc, const std::vector<std::size_t>& rows) {
  RawTable sub = table.subset(rows);
  LabeledSet s;
  s.x = enc.encode(sub);
  s.y = encode_labels(sub, schema, vocab);
  s.row_ids = sub.row_ids;
  return s;
}

UnlabeledSet make_unlabeled(const RawTable& table, const Schema& schema, const std::vector<std::string>& vocab,
                            const Encoder& enc, const std::vector<std::size_t>& rows, SealedLabels& sealed) {
  RawTable sub = table.subset(rows);
  UnlabeledSet s;
  s.x = enc.encode(sub);
  s.row_ids = sub.row_ids;
  const LabelVector y = encode_labels(sub, schema, vocab);
  for (std::size_t i = 0; i < sub.size(); ++i) sealed.insert(sub.row_ids[i], y.labels[i]);
  return s;
}

}  // namespace

SplitIndices split_indices(std::span<const ClassIndex> labels, std::size_t num_classes, const SplitRatios& ratios,
                           std::uint64_t seed) {
  check_ratios(ratios);
  Rng rng = Rng::substream(seed, "split");
  std::vector<std::size_t> all(labels.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  SplitIndices out;
  auto [test, rest] = stratified_take(all, labels, num_classes, ratios.test_ratio, rng, "test split");
  auto [val, train] = stratified_take(rest, labels, num_classes, ratios.val_ratio, rng, "validation split");
  auto [labeled, unlabeled] = stratified_take(train, labels, num_classes, ratios.label_ratio, rng, "label split");
  out.test = std::move(test);
  out.validation = std::move(val);
  out.labeled_train = std::move(labeled);
  out.unlabeled_train = std::move(unlabeled);
  return out;
}

PreparedSplit materialize_split(const RawTable& table, const Schema& schema, const std::vector<std::string>& vocab,
                                const SplitIndices& indices, std::uint64_t seed) {
  std::vector<std::size_t> train_rows = indices.labeled_train;
  train_rows.insert(train_rows.end(), indices.unlabeled_train.begin(), indices.unlabeled_train.end());
  std::sort(train_rows.begin(), train_rows.end());
  if (train_rows.empty()) throw ConfigError("split has no training rows");

  PreparedSplit out{DatasetSplit{}, Encoder::fit(table.subset(train_rows), schema), indices};
  DatasetSplit& s = out.split;
  s.seed = seed;
  s.class_vocab = vocab;
  s.labeled_train = make_labeled(table, schema, vocab, out.encoder, indices.labeled_train);
  s.unlabeled_train = make_unlabeled(table, schema, vocab, out.encoder, indices.unlabeled_train, s.sealed);
  s.validation = make_labeled(table, schema, vocab, out.encoder, indices.validation);
  s.test = make_labeled(table, schema, vocab, out.encoder, indices.test);
  s.unseen_pool = make_unlabeled(table, schema, vocab, out.encoder, indices.unseen_pool, s.sealed);
  return out;
}

PreparedSplit split_dataset(const RawTable& table, const Schema& schema, const SplitRatios& ratios,
                            std::uint64_t seed) {
  const auto vocab = build_class_vocab(table, schema);
  const LabelVector y = encode_labels(table, schema, vocab);
  return materialize_split(table, schema, vocab, split_indices(y.labels, vocab.size(), ratios, seed), seed);
}

PreparedSplit split_dataset_with_holdout(const RawTable& table, const Schema& schema, const SplitRatios& ratios,
                                         const std::set<std::string>& heldout, double pool_fraction,
                                         std::uint64_t seed) {
  if (pool_fraction < 0.0 || pool_fraction > 1.0) throw ConfigError("pool_fraction must be in [0, 1]");
  const auto vocab = build_class_vocab(table, schema);
  const LabelVector y = encode_labels(table, schema, vocab);
  std::vector<bool> is_heldout(vocab.size(), false);
  for (std::size_t c = 0; c < vocab.size(); ++c) is_heldout[c] = heldout.count(vocab[c]) != 0;

  std::vector<std::size_t> seen_rows;
  std::vector<std::size_t> heldout_rows;
  for (std::size_t i = 0; i < y.size(); ++i)
    (is_heldout[static_cast<std::size_t>(y.labels[i])] ? heldout_rows : seen_rows).push_back(i);
  if (seen_rows.empty()) throw ConfigError("holdout removes every class");

  std::vector<ClassIndex> seen_labels;
  seen_labels.reserve(seen_rows.size());
  for (std::size_t i : seen_rows) seen_labels.push_back(y.labels[i]);
  SplitIndices local = split_indices(seen_labels, vocab.size(), ratios, seed);

  SplitIndices out;
  auto remap = [&](const std::vector<std::size_t>& v) {
    std::vector<std::size_t> r;
    r.reserve(v.size());
    for (std::size_t i : v) r.push_back(seen_rows[i]);
    return r;
  };
  out.labeled_train = remap(local.labeled_train);
  out.unlabeled_train = remap(local.unlabeled_train);
  out.validation = remap(local.validation);
  out.test = remap(local.test);

  if (pool_fraction > 0.0 && !heldout_rows.empty()) {
    Rng rng = Rng::substream(seed, "holdout-pool");
    auto [pool, to_test] = stratified_take(heldout_rows, y.labels, vocab.size(), pool_fraction, rng, "unseen pool");
    out.unseen_pool = std::move(pool);
    out.test.insert(out.test.end(), to_test.begin(), to_test.end());
  } else {
    out.test.insert(out.test.end(), heldout_rows.begin(), heldout_rows.end());
  }
  std::sort(out.test.begin(), out.test.end());
  return materialize_split(table, schema, vocab, out, seed);
}

std::set<std::string> choose_heldout_classes(const RawTable& table, const Schema& schema, std::uint64_t seed) {
  const std::size_t col = schema.label_column();
  std::map<std::string, std::size_t> counts;
  for (const auto& row : table.rows) ++counts[row[col]];
  if (counts.size() < 2) throw ConfigError("unseen-class holdout needs at least two classes");
  const std::size_t n_pick = (counts.size() + 9) / 10;

  std::string majority;
  std::size_t best = 0;
  for (const auto& [name, n] : counts)
    if (n > best) {
      best = n;
      majority = name;
    }
  std::vector<std::string> candidates;
  for (const auto& [name, n] : counts)
    if (name != majority) candidates.push_back(name);

  Rng rng = Rng::substream(seed, "holdout");
  std::set<std::string> out;
  for (std::size_t i : rng.sample_indices(candidates.size(), n_pick)) out.insert(candidates[i]);
  return out;
}

void write_manifests(const std::filesystem::path& dir, const DatasetSplit& split) {
  std::filesystem::create_directories(dir);
  auto write_ids = [&](const std::string& name, const std::vector<RowId>& ids) {
    std::ostringstream out;
    for (RowId id : ids) out << id << '\n';
    write_text_file(dir / name, out.str());
  };
  write_ids("labeled_train.ids", split.labeled_train.row_ids);
  write_ids("unlabeled_train.ids", split.unlabeled_train.row_ids);
  write_ids("validation.ids", split.validation.row_ids);
  write_ids("test.ids", split.test.row_ids);
  if (split.unseen_pool.size() > 0) write_ids("unseen_pool.ids", split.unseen_pool.row_ids);

  std::ostringstream sealed;
  sealed << "# row_id\tlabel\n";
  for (const auto& [id, label] : split.sealed.entries())
    sealed << id << '\t' << split.class_vocab.at(static_cast<std::size_t>(label)) << '\n';
  write_text_file(dir / "sealed_labels.tsv", sealed.str());
}

std::vector<RowId> read_manifest(const std::filesystem::path& file) {
  std::vector<RowId> ids;
  for (const auto& line : split_lines(read_text_file(file))) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    ids.push_back(std::stoull(t));
  }
  return ids;
}

}  // namespace semiwtc
