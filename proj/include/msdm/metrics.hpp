#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msdm/error.hpp"
#include "msdm/text.hpp"

namespace msdm {

/// Mann-Whitney ROC AUC: (concordant + tied/2) / (P·N) over all
/// positive-negative pairs, computed from mid-ranks. Undefined without both
/// classes.
inline std::optional<double> species_auc(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeMismatch("score and label counts differ");
  const std::size_t m = scores.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the 1-based mid-rank sum of positives, kept integral.
  std::uint64_t rank2_pos = 0, pos = 0;
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i + 1;
    while (j < m && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t rank2 = static_cast<std::uint64_t>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank2_pos += rank2;
        ++pos;
      }
    }
    i = j;
  }
  const std::uint64_t neg = m - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  // 2U = 2·R_pos - P(P+1) counts concordant pairs twice and ties once.
  const std::uint64_t u2 = rank2_pos - pos * (pos + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

/// Indices with probability strictly above the threshold.
inline std::vector<int> binarize(std::span<const float> pred, double threshold = 0.5) {
  std::vector<int> out;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] > threshold) out.push_back(static_cast<int>(i));
  return out;
}

/// 2|P∩T| / (|P| + |T|); both empty counts as a perfect prediction.
inline double site_f1(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.empty() && truth.empty()) return 1.0;
  std::vector<int> p(predicted.begin(), predicted.end()), t(truth.begin(), truth.end());
  std::sort(p.begin(), p.end());
  p.erase(std::unique(p.begin(), p.end()), p.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  std::vector<int> common;
  std::set_intersection(p.begin(), p.end(), t.begin(), t.end(), std::back_inserter(common));
  return 2.0 * static_cast<double>(common.size()) / static_cast<double>(p.size() + t.size());
}

/// Median of the values; the mean of the two central values for even counts.
inline std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct SiteScore {
  std::string site_id;
  double lon = 0.0;
  double lat = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::vector<std::string> species_ids;
  std::vector<std::optional<double>> per_species_auc;
  std::vector<int> n_train;
  std::vector<int> n_val;
  std::optional<double> median_auc;
  int species_excluded = 0;  // undefined AUC (no positives or no negatives)
  std::vector<SiteScore> sites;
  double site_f1_mean = 0.0;
  int sites_excluded = 0;  // patch extraction failed
  double threshold = 0.5;

  /// Median AUC over a subset of species (undefined entries skipped).
  std::optional<double> median_auc_over(std::span<const int> species) const {
    std::vector<double> v;
    for (int s : species)
      if (per_species_auc.at(static_cast<std::size_t>(s))) v.push_back(*per_species_auc[s]);
    return median(v);
  }
};

/// Fills the aggregate fields from per-species AUCs and per-site F1s.
inline void finalize_report(EvalReport& r) {
  std::vector<double> defined;
  r.species_excluded = 0;
  for (const auto& a : r.per_species_auc) {
    if (a) {
      defined.push_back(*a);
    } else {
      ++r.species_excluded;
    }
  }
  r.median_auc = median(defined);
  double s = 0.0;
  for (const auto& site : r.sites) s += site.f1;
  r.site_f1_mean = r.sites.empty() ? 0.0 : s / static_cast<double>(r.sites.size());
}

struct SpeciesDelta {
  std::string species_id;
  std::optional<double> auc_a, auc_b, delta;
  int n_train = 0;
  int n_val = 0;
};

struct SiteDelta {
  std::string site_id;
  double lon = 0.0, lat = 0.0;
  double f1_a = 0.0, f1_b = 0.0, delta = 0.0;
};

struct DeltaTable {
  std::vector<SpeciesDelta> species;
  std::vector<SiteDelta> sites;
  std::optional<double> delta_median_auc;
  double delta_site_f1_mean = 0.0;
};

/// Δ = a - b per species and per site; positive values favour model a.
inline DeltaTable compare(const EvalReport& a, const EvalReport& b) {
  if (a.species_ids != b.species_ids) throw MismatchedUniverse("reports cover different species lists");
  if (a.sites.size() != b.sites.size()) throw MismatchedUniverse("reports cover different site counts");
  DeltaTable d;
  for (std::size_t i = 0; i < a.species_ids.size(); ++i) {
    SpeciesDelta s;
    s.species_id = a.species_ids[i];
    s.auc_a = a.per_species_auc[i];
    s.auc_b = b.per_species_auc[i];
    if (s.auc_a && s.auc_b) s.delta = *s.auc_a - *s.auc_b;
    s.n_train = a.n_train.empty() ? 0 : a.n_train[i];
    s.n_val = a.n_val.empty() ? 0 : a.n_val[i];
    d.species.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < a.sites.size(); ++i) {
    const auto& sa = a.sites[i];
    const auto& sb = b.sites[i];
    if (sa.site_id != sb.site_id) throw MismatchedUniverse("site '" + sa.site_id + "' does not match '" + sb.site_id + "'");
    d.sites.push_back({sa.site_id, sa.lon, sa.lat, sa.f1, sb.f1, sa.f1 - sb.f1});
  }
  if (a.median_auc && b.median_auc) d.delta_median_auc = *a.median_auc - *b.median_auc;
  d.delta_site_f1_mean = a.site_f1_mean - b.site_f1_mean;
  return d;
}

// ---------------------------------------------------------------------------
// CSV outputs

namespace metrics_detail {
inline std::string opt(const std::optional<double>& v) { return v ? text::fmt(*v) : "NA"; }
inline std::optional<double> parse_opt(const std::string& s) {
  if (s == "NA" || s.empty()) return std::nullopt;
  return text::parse_double(s, "metric");
}
}  // namespace metrics_detail

inline std::string species_metrics_csv(const EvalReport& r) {
  std::string out = "species_id,auc,n_train,n_val\n";
  for (std::size_t i = 0; i < r.species_ids.size(); ++i) {
    out += r.species_ids[i] + "," + metrics_detail::opt(r.per_species_auc[i]) + "," +
           std::to_string(r.n_train.empty() ? 0 : r.n_train[i]) + "," + std::to_string(r.n_val.empty() ? 0 : r.n_val[i]) + "\n";
  }
  return out;
}

inline std::string site_metrics_csv(const EvalReport& r) {
  std::string out = "site_id,lon,lat,f1\n";
  for (const auto& s : r.sites) out += s.site_id + "," + text::fmt(s.lon) + "," + text::fmt(s.lat) + "," + text::fmt(s.f1) + "\n";
  return out;
}

inline std::string summary_csv(const EvalReport& r) {
  std::string out = "metric,value\n";
  out += "median_auc," + metrics_detail::opt(r.median_auc) + "\n";
  out += "site_f1_mean," + text::fmt(r.site_f1_mean) + "\n";
  out += "threshold," + text::fmt(r.threshold) + "\n";
  out += "species," + std::to_string(r.species_ids.size()) + "\n";
  out += "species_excluded," + std::to_string(r.species_excluded) + "\n";
  out += "sites," + std::to_string(r.sites.size()) + "\n";
  out += "sites_excluded," + std::to_string(r.sites_excluded) + "\n";
  out += "f1_both_empty,1\n";
  return out;
}

inline std::string delta_species_csv(const DeltaTable& d) {
  std::string out = "species_id,auc_a,auc_b,delta_auc,n_train,n_val\n";
  for (const auto& s : d.species) {
    out += s.species_id + "," + metrics_detail::opt(s.auc_a) + "," + metrics_detail::opt(s.auc_b) + "," +
           metrics_detail::opt(s.delta) + "," + std::to_string(s.n_train) + "," + std::to_string(s.n_val) + "\n";
  }
  return out;
}

inline std::string delta_sites_csv(const DeltaTable& d) {
  std::string out = "site_id,lon,lat,f1_a,f1_b,delta_f1\n";
  for (const auto& s : d.sites) {
    out += s.site_id + "," + text::fmt(s.lon) + "," + text::fmt(s.lat) + "," + text::fmt(s.f1_a) + "," +
           text::fmt(s.f1_b) + "," + text::fmt(s.delta) + "\n";
  }
  return out;
}

/// Writes species_metrics.csv, site_metrics.csv and summary.csv into `dir`;
/// returns the paths written.
inline std::vector<std::string> write_report(const std::string& dir, const EvalReport& r) {
  const std::vector<std::string> paths{dir + "/species_metrics.csv", dir + "/site_metrics.csv", dir + "/summary.csv"};
  text::write_file(paths[0], species_metrics_csv(r));
  text::write_file(paths[1], site_metrics_csv(r));
  text::write_file(paths[2], summary_csv(r));
  return paths;
}

/// Reloads a report written by the evaluate command (directory with
/// species_metrics.csv, site_metrics.csv and summary.csv).
inline EvalReport read_report(const std::string& dir) {
  EvalReport r;
  const auto species = text::read_lines(dir + "/species_metrics.csv");
  if (species.empty() || species[0] != "species_id,auc,n_train,n_val") throw DataError(dir + ": bad species_metrics.csv");
  for (std::size_t i = 1; i < species.size(); ++i) {
    const auto f = text::split(species[i], ',');
    if (f.size() != 4) throw DataError(dir + ": malformed species_metrics.csv line " + std::to_string(i + 1));
    r.species_ids.push_back(f[0]);
    r.per_species_auc.push_back(metrics_detail::parse_opt(f[1]));
    r.n_train.push_back(static_cast<int>(text::parse_int(f[2], "n_train")));
    r.n_val.push_back(static_cast<int>(text::parse_int(f[3], "n_val")));
  }
  const auto sites = text::read_lines(dir + "/site_metrics.csv");
  if (sites.empty() || sites[0] != "site_id,lon,lat,f1") throw DataError(dir + ": bad site_metrics.csv");
  for (std::size_t i = 1; i < sites.size(); ++i) {
    const auto f = text::split(sites[i], ',');
    if (f.size() != 4) throw DataError(dir + ": malformed site_metrics.csv line " + std::to_string(i + 1));
    r.sites.push_back({f[0], text::parse_double(f[1], "lon"), text::parse_double(f[2], "lat"), text::parse_double(f[3], "f1")});
  }
  for (const auto& line : text::read_lines(dir + "/summary.csv")) {
    const auto f = text::split(line, ',');
    if (f.size() == 2 && f[0] == "sites_excluded") r.sites_excluded = static_cast<int>(text::parse_int(f[1], "sites_excluded"));
    if (f.size() == 2 && f[0] == "threshold") r.threshold = text::parse_double(f[1], "threshold");
  }
  finalize_report(r);
  return r;
}

}  // namespace msdm
