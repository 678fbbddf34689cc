#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "msdm/error.hpp"
#include "msdm/text.hpp"

namespace msdm {

enum class OccurrenceKind { PresenceOnly, PresenceAbsence };

struct Site {
  std::string site_id;
  double lon = 0.0;
  double lat = 0.0;
  std::string date;                  // opaque tag; empty for PA sites
  std::vector<std::uint8_t> labels;  // multi-hot, length = species count

  int positives() const { return static_cast<int>(std::count(labels.begin(), labels.end(), 1)); }
};

struct OccurrenceTable {
  OccurrenceKind kind = OccurrenceKind::PresenceOnly;
  std::vector<std::string> species_ids;
  std::vector<Site> sites;

  std::size_t species_count() const { return species_ids.size(); }
  std::size_t size() const { return sites.size(); }

  /// Positive count per species.
  std::vector<int> species_counts() const {
    std::vector<int> counts(species_ids.size(), 0);
    for (const auto& s : sites)
      for (std::size_t j = 0; j < counts.size(); ++j) counts[j] += s.labels[j];
    return counts;
  }

  void validate() const {
    std::map<std::tuple<double, double, std::string>, int> seen;
    for (const auto& s : sites) {
      if (s.labels.size() != species_ids.size()) throw DataError("site '" + s.site_id + "' has wrong label width");
      for (auto v : s.labels)
        if (v > 1) throw DataError("labels must be 0/1");
      if (kind == OccurrenceKind::PresenceOnly) {
        if (s.positives() == 0) throw DataError("presence-only site '" + s.site_id + "' has no presences");
        if (seen[{s.lon, s.lat, s.date}]++) throw DataError("presence-only rows are not merged");
      }
    }
  }
};

struct RawRecord {
  double lon = 0.0;
  double lat = 0.0;
  std::string date;
  std::string species_id;
};

/// One row per unique (lon, lat, date), labels are the union of the species
/// recorded there. Rows keep the order in which their key first appears.
inline OccurrenceTable merge_po_records(const std::vector<RawRecord>& raw,
                                        const std::vector<std::string>& species_ids) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < species_ids.size(); ++i) index.emplace(species_ids[i], i);

  OccurrenceTable table;
  table.kind = OccurrenceKind::PresenceOnly;
  table.species_ids = species_ids;
  std::map<std::tuple<double, double, std::string>, std::size_t> rows;
  for (const auto& r : raw) {
    const auto it = index.find(r.species_id);
    if (it == index.end()) throw UnknownSpecies("unknown species id '" + r.species_id + "'");
    auto [pos, inserted] = rows.try_emplace({r.lon, r.lat, r.date}, table.sites.size());
    if (inserted) {
      Site s;
      s.site_id = "po" + std::to_string(table.sites.size());
      s.lon = r.lon;
      s.lat = r.lat;
      s.date = r.date;
      s.labels.assign(species_ids.size(), 0);
      table.sites.push_back(std::move(s));
    }
    table.sites[pos->second].labels[it->second] = 1;
  }
  return table;
}

/// Inverse of merging: one raw record per positive label.
inline std::vector<RawRecord> to_raw_records(const OccurrenceTable& table) {
  std::vector<RawRecord> raw;
  for (const auto& s : table.sites)
    for (std::size_t j = 0; j < s.labels.size(); ++j)
      if (s.labels[j]) raw.push_back({s.lon, s.lat, s.date, table.species_ids[j]});
  return raw;
}

// ---------------------------------------------------------------------------
// CSV files

inline std::vector<std::string> read_species_list(const std::string& path) {
  const auto lines = text::read_lines(path);
  if (lines.empty() || text::split(lines[0], ',') != std::vector<std::string>{"species_index", "species_id"}) {
    throw DataError(path + ": expected header 'species_index,species_id'");
  }
  std::vector<std::pair<long long, std::string>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = text::split(lines[i], ',');
    if (f.size() != 2) throw DataError(path + ": malformed line " + std::to_string(i + 1));
    rows.emplace_back(text::parse_int(f[0], "species_index"), f[1]);
  }
  std::sort(rows.begin(), rows.end());
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != static_cast<long long>(i)) throw DataError(path + ": species indices must be 0..S-1");
    ids.push_back(rows[i].second);
  }
  return ids;
}

inline std::string encode_species_list(const std::vector<std::string>& ids) {
  std::string out = "species_index,species_id\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out += std::to_string(i) + "," + ids[i] + "\n";
  return out;
}

inline std::vector<RawRecord> read_po_csv(const std::string& path) {
  const auto lines = text::read_lines(path);
  if (lines.empty() || text::split(lines[0], ',') != std::vector<std::string>{"lon", "lat", "date", "species_id"}) {
    throw DataError(path + ": expected header 'lon,lat,date,species_id'");
  }
  std::vector<RawRecord> raw;
  raw.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = text::split(lines[i], ',');
    if (f.size() != 4) throw DataError(path + ": malformed line " + std::to_string(i + 1));
    raw.push_back({text::parse_double(f[0], "lon"), text::parse_double(f[1], "lat"), f[2], f[3]});
  }
  return raw;
}

inline std::string encode_po_csv(const std::vector<RawRecord>& raw) {
  std::string out = "lon,lat,date,species_id\n";
  for (const auto& r : raw) out += text::fmt(r.lon) + "," + text::fmt(r.lat) + "," + r.date + "," + r.species_id + "\n";
  return out;
}

inline OccurrenceTable read_pa_csv(const std::string& path, const std::vector<std::string>& species_ids) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < species_ids.size(); ++i) index.emplace(species_ids[i], i);
  const auto lines = text::read_lines(path);
  if (lines.empty() || text::split(lines[0], ',') != std::vector<std::string>{"site_id", "lon", "lat", "species_ids"}) {
    throw DataError(path + ": expected header 'site_id,lon,lat,species_ids'");
  }
  OccurrenceTable table;
  table.kind = OccurrenceKind::PresenceAbsence;
  table.species_ids = species_ids;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = text::split(lines[i], ',');
    if (f.size() == 3) f.emplace_back();  // trailing empty species list
    if (f.size() != 4) throw DataError(path + ": malformed line " + std::to_string(i + 1));
    Site s;
    s.site_id = f[0];
    s.lon = text::parse_double(f[1], "lon");
    s.lat = text::parse_double(f[2], "lat");
    s.labels.assign(species_ids.size(), 0);
    if (!f[3].empty()) {
      for (const auto& id : text::split(f[3], ';')) {
        const auto it = index.find(id);
        if (it == index.end()) throw UnknownSpecies("unknown species id '" + id + "' in " + path);
        s.labels[it->second] = 1;
      }
    }
    table.sites.push_back(std::move(s));
  }
  return table;
}

inline std::string encode_pa_csv(const OccurrenceTable& table) {
  std::string out = "site_id,lon,lat,species_ids\n";
  for (const auto& s : table.sites) {
    out += s.site_id + "," + text::fmt(s.lon) + "," + text::fmt(s.lat) + ",";
    bool first = true;
    for (std::size_t j = 0; j < s.labels.size(); ++j) {
      if (!s.labels[j]) continue;
      if (!first) out += ';';
      out += table.species_ids[j];
      first = false;
    }
    out += "\n";
  }
  return out;
}

}  // namespace msdm
