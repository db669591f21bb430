#pragma once

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "biasdiag/errors.hpp"

namespace biasdiag {

// Raw annotation matrix as read from CSV; values may be +-1 or continuous.
struct RawAnnotations {
  std::vector<std::string> sample_ids;
  std::vector<std::string> attributes;
  std::vector<std::vector<double>> values;  // [sample][attribute]
};

// Normalized table: +1 denotes attribute presence for every attribute.
struct AnnotationTable {
  std::vector<std::string> sample_ids;
  std::vector<std::string> attributes;
  std::vector<std::vector<int>> values;  // [sample][attribute], in {-1,+1}
  std::vector<bool> flipped;             // per-attribute flags that were applied

  std::size_t sample_count() const { return sample_ids.size(); }
  std::size_t attribute_count() const { return attributes.size(); }
  int value(std::size_t sample, std::size_t attr) const { return values[sample][attr]; }

  std::size_t attribute_index(const std::string& name) const {
    for (std::size_t a = 0; a < attributes.size(); ++a) {
      if (attributes[a] == name) return a;
    }
    throw UnknownAttribute("unknown attribute '" + name + "'");
  }

  std::vector<std::vector<double>> as_targets() const {
    std::vector<std::vector<double>> t(values.size());
    for (std::size_t s = 0; s < values.size(); ++s) {
      t[s].assign(values[s].begin(), values[s].end());
    }
    return t;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace detail

// CSV with header `sample_id,attr_1,...,attr_n`.
inline RawAnnotations read_annotations_csv(std::istream& is) {
  RawAnnotations raw;
  std::string line;
  if (!std::getline(is, line)) throw FormatError("annotations: empty file");
  auto header = detail::split_csv_line(line);
  if (header.size() < 2) throw FormatError("annotations: header needs sample_id plus attributes");
  raw.attributes.assign(header.begin() + 1, header.end());
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw FormatError("annotations: line " + std::to_string(lineno) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(header.size()));
    }
    raw.sample_ids.push_back(fields[0]);
    std::vector<double> row(raw.attributes.size());
    for (std::size_t a = 0; a < row.size(); ++a) {
      try {
        row[a] = std::stod(fields[a + 1]);
      } catch (const std::exception&) {
        throw FormatError("annotations: bad value '" + fields[a + 1] + "' at line " +
                          std::to_string(lineno));
      }
    }
    raw.values.push_back(std::move(row));
  }
  return raw;
}

inline void write_annotations_csv(std::ostream& os, const AnnotationTable& table) {
  os << "sample_id";
  for (const auto& a : table.attributes) os << "," << a;
  os << "\n";
  for (std::size_t s = 0; s < table.sample_count(); ++s) {
    os << table.sample_ids[s];
    for (std::size_t a = 0; a < table.attribute_count(); ++a) {
      os << "," << (table.values[s][a] > 0 ? "+1" : "-1");
    }
    os << "\n";
  }
}

struct NormalizeResult {
  AnnotationTable table;
  // Attributes whose values are all identical after normalization; they
  // cannot be mined and callers should warn.
  std::vector<std::size_t> degenerate;
};

// Binarize via sign(y - threshold) with the tie resolving to -1 (presence
// means strictly above threshold), then apply per-attribute flips so that +1
// denotes presence everywhere. +-1 inputs pass through unchanged for any
// threshold inside (-1, 1).
inline NormalizeResult normalize_annotations(const RawAnnotations& raw,
                                             const std::vector<bool>& flip,
                                             double threshold = 0.5) {
  if (!flip.empty() && flip.size() != raw.attributes.size()) {
    throw ShapeMismatch("normalize: flip flags must cover every attribute");
  }
  NormalizeResult res;
  res.table.sample_ids = raw.sample_ids;
  res.table.attributes = raw.attributes;
  res.table.flipped = flip.empty() ? std::vector<bool>(raw.attributes.size(), false) : flip;
  res.table.values.resize(raw.values.size());
  for (std::size_t s = 0; s < raw.values.size(); ++s) {
    res.table.values[s].resize(raw.attributes.size());
    for (std::size_t a = 0; a < raw.attributes.size(); ++a) {
      int v = raw.values[s][a] > threshold ? +1 : -1;
      if (res.table.flipped[a]) v = -v;
      res.table.values[s][a] = v;
    }
  }
  for (std::size_t a = 0; a < raw.attributes.size(); ++a) {
    bool all_same = true;
    for (std::size_t s = 1; s < res.table.values.size(); ++s) {
      if (res.table.values[s][a] != res.table.values[0][a]) {
        all_same = false;
        break;
      }
    }
    if (all_same && !res.table.values.empty()) res.degenerate.push_back(a);
  }
  return res;
}

inline std::vector<bool> flip_flags_from_names(const std::vector<std::string>& attributes,
                                               const std::vector<std::string>& flip_names) {
  std::vector<bool> flags(attributes.size(), false);
  for (const auto& name : flip_names) {
    bool found = false;
    for (std::size_t a = 0; a < attributes.size(); ++a) {
      if (attributes[a] == name) {
        flags[a] = true;
        found = true;
        break;
      }
    }
    if (!found) throw UnknownAttribute("flip: unknown attribute '" + name + "'");
  }
  return flags;
}

}  // namespace biasdiag
