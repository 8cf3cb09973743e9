#include "semiwtc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "semiwtc/rng.hpp"

namespace semiwtc {

namespace {

enum class FeatureKind { heavy, binary, small_int, rate, constant };

struct FeatureSpec {
  const char* name;
  FeatureKind kind;
  double magnitude;  // log-scale location for heavy columns
  double cap;        // upper clamp, 0 for none
};

// Numeric columns in file order; protocol_type, service and flag are
// inserted after duration.
const std::vector<FeatureSpec>& numeric_specs() {
  static const std::vector<FeatureSpec> specs = {
      {"duration", FeatureKind::heavy, 2.0, 0},
      {"src_bytes", FeatureKind::heavy, 6.0, 0},
      {"dst_bytes", FeatureKind::heavy, 6.0, 0},
      {"land", FeatureKind::binary, 0, 0},
      {"wrong_fragment", FeatureKind::small_int, 0, 3},
      {"urgent", FeatureKind::small_int, 0, 3},
      {"hot", FeatureKind::heavy, 0.5, 0},
      {"num_failed_logins", FeatureKind::small_int, 0, 5},
      {"logged_in", FeatureKind::binary, 0, 0},
      {"num_compromised", FeatureKind::heavy, 0.5, 0},
      {"root_shell", FeatureKind::binary, 0, 0},
      {"su_attempted", FeatureKind::binary, 0, 0},
      {"num_root", FeatureKind::heavy, 0.5, 0},
      {"num_file_creations", FeatureKind::heavy, 0.3, 0},
      {"num_shells", FeatureKind::small_int, 0, 2},
      {"num_access_files", FeatureKind::small_int, 0, 5},
      {"num_outbound_cmds", FeatureKind::constant, 0, 0},
      {"is_host_login", FeatureKind::binary, 0, 0},
      {"is_guest_login", FeatureKind::binary, 0, 0},
      {"count", FeatureKind::heavy, 3.0, 511},
      {"srv_count", FeatureKind::heavy, 2.5, 511},
      {"serror_rate", FeatureKind::rate, 0, 0},
      {"srv_serror_rate", FeatureKind::rate, 0, 0},
      {"rerror_rate", FeatureKind::rate, 0, 0},
      {"srv_rerror_rate", FeatureKind::rate, 0, 0},
      {"same_srv_rate", FeatureKind::rate, 0, 0},
      {"diff_srv_rate", FeatureKind::rate, 0, 0},
      {"srv_diff_host_rate", FeatureKind::rate, 0, 0},
      {"dst_host_count", FeatureKind::heavy, 4.0, 255},
      {"dst_host_srv_count", FeatureKind::heavy, 3.5, 255},
      {"dst_host_same_srv_rate", FeatureKind::rate, 0, 0},
      {"dst_host_diff_srv_rate", FeatureKind::rate, 0, 0},
      {"dst_host_same_src_port_rate", FeatureKind::rate, 0, 0},
      {"dst_host_srv_diff_host_rate", FeatureKind::rate, 0, 0},
      {"dst_host_serror_rate", FeatureKind::rate, 0, 0},
      {"dst_host_srv_serror_rate", FeatureKind::rate, 0, 0},
      {"dst_host_rerror_rate", FeatureKind::rate, 0, 0},
      {"dst_host_srv_rerror_rate", FeatureKind::rate, 0, 0},
  };
  return specs;
}

const std::vector<std::string> kProtocols = {"tcp", "udp", "icmp"};

// Logged columns: the heavy-tailed byte, duration and count features.
bool logged(const FeatureSpec& s) { return s.kind == FeatureKind::heavy; }

struct Structure {
  std::vector<std::vector<std::vector<double>>> modes;  // label -> mode -> latent mean
  std::vector<double> mode_cdf;
  std::vector<std::vector<double>> proj;                // numeric feature -> latent weights
  std::vector<double> threshold;                        // numeric feature offset
  std::vector<std::vector<std::vector<double>>> cat;    // categorical column -> value -> latent weights
  std::vector<std::vector<double>> cat_bias;
};

Structure build_structure(const SurrogateConfig& cfg, std::size_t labels) {
  Rng rng = Rng::substream(cfg.seed, "surrogate-structure");
  const std::size_t L = cfg.latent_dim;
  auto gaussian = [&](double sd) {
    std::vector<double> v(L);
    for (auto& x : v) x = sd * rng.normal();
    return v;
  };
  Structure s;
  s.modes.resize(labels);
  for (auto& m : s.modes) {
    const auto centre = gaussian(cfg.class_spread);
    for (std::size_t k = 0; k < cfg.modes; ++k) {
      auto off = gaussian(cfg.mode_spread);
      for (std::size_t d = 0; d < L; ++d) off[d] += centre[d];
      m.push_back(std::move(off));
    }
  }
  double total = 0.0;
  for (std::size_t k = 0; k < cfg.modes; ++k) {
    total += std::pow(cfg.mode_decay, static_cast<double>(k));
    s.mode_cdf.push_back(total);
  }
  for (auto& c : s.mode_cdf) c /= total;
  for (const auto& spec : numeric_specs()) {
    s.proj.push_back(gaussian(1.0 / std::sqrt(static_cast<double>(L))));
    switch (spec.kind) {
      case FeatureKind::heavy: s.threshold.push_back(rng.uniform(-1.0, 0.5)); break;
      case FeatureKind::binary:
      case FeatureKind::small_int: s.threshold.push_back(rng.uniform(0.8, 2.0)); break;
      default: s.threshold.push_back(0.0); break;
    }
  }
  const std::size_t widths[] = {kProtocols.size(), nsl_kdd_services().size(), nsl_kdd_flags().size()};
  for (std::size_t w : widths) {
    std::vector<std::vector<double>> rows;
    std::vector<double> bias;
    for (std::size_t v = 0; v < w; ++v) {
      rows.push_back(gaussian(1.5 / std::sqrt(static_cast<double>(L))));
      bias.push_back(0.5 * rng.normal());
    }
    s.cat.push_back(std::move(rows));
    s.cat_bias.push_back(std::move(bias));
  }
  return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::string format_number(double v) {
  if (v == std::floor(v) && std::fabs(v) < 1e15) return std::to_string(static_cast<long long>(v));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string numeric_value(const FeatureSpec& spec, double u, double threshold, Rng& rng) {
  switch (spec.kind) {
    case FeatureKind::heavy: {
      if (u < threshold) return "0";
      double v = std::floor(std::exp(spec.magnitude + 1.5 * (u - threshold) + 0.3 * rng.normal()));
      if (spec.cap > 0) v = std::min(v, spec.cap);
      return format_number(std::max(v, 0.0));
    }
    case FeatureKind::binary: return u > threshold ? "1" : "0";
    case FeatureKind::small_int: {
      const double v = std::clamp(std::floor(u - threshold + 1.0), 0.0, spec.cap);
      return format_number(v);
    }
    case FeatureKind::rate: {
      const double p = 1.0 / (1.0 + std::exp(-2.0 * u));
      return format_number(std::round(100.0 * p) / 100.0);
    }
    case FeatureKind::constant: return "0";
  }
  return "0";
}

std::size_t gumbel_argmax(const std::vector<std::vector<double>>& w, const std::vector<double>& bias,
                          const std::vector<double>& z, double temperature, Rng& rng) {
  std::size_t best = 0;
  double best_score = -1e300;
  for (std::size_t v = 0; v < w.size(); ++v) {
    const double g = -std::log(-std::log(std::max(rng.uniform(), 1e-300)));
    const double score = (dot(w[v], z) + bias[v]) / temperature + g;
    if (score > best_score) {
      best_score = score;
      best = v;
    }
  }
  return best;
}

}  // namespace

std::vector<SurrogateLabel> surrogate_label_counts() {
  return {
      {"normal", 9400},       {"neptune", 8200},    {"satan", 4275},        {"ipsweep", 4249},
      {"portsweep", 3408},    {"smurf", 3136},      {"nmap", 1742},         {"back", 1136},
      {"warezclient", 1070},  {"teardrop", 1021},   {"guess_passwd", 1100}, {"warezmaster", 720},
      {"imap", 300},          {"pod", 250},         {"buffer_overflow", 200}, {"ftp_write", 165},
  };
}

const std::vector<std::string>& nsl_kdd_feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& s : numeric_specs()) {
      out.emplace_back(s.name);
      if (out.size() == 1) {
        out.emplace_back("protocol_type");
        out.emplace_back("service");
        out.emplace_back("flag");
      }
    }
    return out;
  }();
  return names;
}

const std::vector<std::string>& nsl_kdd_services() {
  static const std::vector<std::string> services = {
      "aol",       "auth",       "bgp",         "courier",     "csnet_ns",   "ctf",       "daytime",   "discard",
      "domain",    "domain_u",   "echo",        "eco_i",       "ecr_i",      "efs",       "exec",      "finger",
      "ftp",       "ftp_data",   "gopher",      "harvest",     "hostnames",  "http",      "http_2784", "http_443",
      "http_8001", "imap4",      "IRC",         "iso_tsap",    "klogin",     "kshell",    "ldap",      "link",
      "login",     "mtp",        "name",        "netbios_dgm", "netbios_ns", "netbios_ssn", "netstat", "nnsp",
      "nntp",      "ntp_u",      "other",       "pm_dump",     "pop_2",      "pop_3",     "printer",   "private",
      "red_i",     "remote_job", "rje",         "shell",       "smtp",       "sql_net",   "ssh",       "sunrpc",
      "supdup",    "systat",     "telnet",      "tftp_u",      "tim_i",      "time",      "urh_i",     "urp_i",
      "uucp",      "uucp_path",  "vmnet",       "whois",       "X11",        "Z39_50"};
  return services;
}

const std::vector<std::string>& nsl_kdd_flags() {
  static const std::vector<std::string> flags = {"OTH", "REJ", "RSTO", "RSTOS0", "RSTR", "S0",
                                                 "S1",  "S2",  "S3",   "SF",     "SH"};
  return flags;
}

Schema nsl_kdd_schema() {
  Schema s;
  std::size_t numeric = 0;
  for (const auto& name : nsl_kdd_feature_names()) {
    ColumnSpec c{name, ColumnKind::numeric, false};
    if (name == "protocol_type" || name == "service" || name == "flag") {
      c.kind = ColumnKind::categorical;
    } else {
      c.log_transform = logged(numeric_specs()[numeric++]);
    }
    s.columns.push_back(std::move(c));
  }
  s.columns.push_back({"label", ColumnKind::label, false});
  s.columns.push_back({"difficulty", ColumnKind::ignore, false});
  s.keep_labels = {"normal", "neptune", "satan", "ipsweep", "portsweep", "smurf", "nmap", "back", "teardrop",
                   "warezclient"};
  return s;
}

RawTable make_surrogate_table(const SurrogateConfig& config) {
  if (config.latent_dim == 0) throw ConfigError("surrogate latent_dim must be positive");
  if (config.modes == 0) throw ConfigError("surrogate modes must be positive");
  if (!(config.mode_decay > 0.0 && config.mode_decay <= 1.0)) throw ConfigError("surrogate mode_decay must be in (0, 1]");
  if (!(config.scale > 0.0)) throw ConfigError("surrogate scale must be positive");
  if (!(config.categorical_temperature > 0.0)) throw ConfigError("surrogate temperature must be positive");
  const auto labels = surrogate_label_counts();
  const Structure st = build_structure(config, labels.size());

  std::vector<std::size_t> order;
  for (std::size_t l = 0; l < labels.size(); ++l) {
    const auto n = static_cast<std::size_t>(std::llround(config.scale * static_cast<double>(labels[l].count)));
    order.insert(order.end(), std::max<std::size_t>(n, 1), l);
  }
  Rng rng = Rng::substream(config.seed, "surrogate-rows");
  rng.shuffle(order);

  const Schema schema = nsl_kdd_schema();
  RawTable table;
  for (const auto& c : schema.columns) {
    table.header.push_back(c.name);
    table.ignored.push_back(c.kind == ColumnKind::ignore);
  }
  const auto& specs = numeric_specs();
  const std::size_t L = config.latent_dim;
  std::vector<double> z(L);
  for (std::size_t label : order) {
    const double pick = rng.uniform();
    const auto k = static_cast<std::size_t>(std::lower_bound(st.mode_cdf.begin(), st.mode_cdf.end(), pick) -
                                            st.mode_cdf.begin());
    const auto& mode = st.modes[label][std::min(k, config.modes - 1)];
    for (std::size_t d = 0; d < L; ++d) z[d] = mode[d] + config.noise * rng.normal();
    std::vector<std::string> row;
    row.reserve(schema.columns.size());
    for (std::size_t f = 0; f < specs.size(); ++f) {
      const double u = dot(st.proj[f], z) + 0.3 * rng.normal();
      row.push_back(numeric_value(specs[f], u, st.threshold[f], rng));
      if (f == 0) {
        const double t = config.categorical_temperature;
        row.push_back(kProtocols[gumbel_argmax(st.cat[0], st.cat_bias[0], z, t, rng)]);
        row.push_back(nsl_kdd_services()[gumbel_argmax(st.cat[1], st.cat_bias[1], z, t, rng)]);
        row.push_back(nsl_kdd_flags()[gumbel_argmax(st.cat[2], st.cat_bias[2], z, t, rng)]);
      }
    }
    row.push_back(labels[label].name);
    row.push_back(std::to_string(rng.below(22)));
    table.row_ids.push_back(static_cast<RowId>(table.rows.size()));
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_surrogate_csv(std::ostream& out, const SurrogateConfig& config) {
  const RawTable t = make_surrogate_table(config);
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

void write_surrogate_csv(const std::filesystem::path& path, const SurrogateConfig& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  write_surrogate_csv(out, config);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace semiwtc
