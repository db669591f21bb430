#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "biasdiag/annotations.hpp"
#include "biasdiag/errors.hpp"
#include "biasdiag/tensor.hpp"

namespace biasdiag {

// ---------------------------------------------------------------------------
// Annotated ground-truth relationship graph and per-label Gaussian fits.
// ---------------------------------------------------------------------------

struct RelationGraph {
  std::vector<std::string> attributes;
  struct Edge {
    std::size_t i = 0, j = 0;  // i < j
    std::string label;
  };
  std::vector<Edge> edges;
  std::vector<std::string> labels;  // vocabulary, first-appearance order

  std::size_t degree(std::size_t attr) const {
    std::size_t d = 0;
    for (const Edge& e : edges) {
      if (e.i == attr || e.j == attr) ++d;
    }
    return d;
  }

  void add_edge(std::size_t i, std::size_t j, std::string label) {
    if (i >= attributes.size() || j >= attributes.size()) {
      throw UnknownAttribute("relation graph: attribute index out of range");
    }
    if (i == j) throw SelfEdge("relation graph: self edge on '" + attributes[i] + "'");
    if (i > j) std::swap(i, j);
    for (const Edge& e : edges) {
      if (e.i == i && e.j == j) {
        throw DuplicateEdge("relation graph: duplicate pair (" + attributes[i] + ", " +
                            attributes[j] + ")");
      }
    }
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) {
      labels.push_back(label);
    }
    edges.push_back({i, j, std::move(label)});
  }
};

// Lines of `attr_i,attr_j,label`; `#` comments and blank lines ignored.
inline RelationGraph parse_relations(std::istream& is,
                                     std::vector<std::string> attribute_names) {
  RelationGraph g;
  g.attributes = std::move(attribute_names);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto fields = detail::split_csv_line(t);
    if (fields.size() != 3) {
      throw FormatError("relations: line " + std::to_string(lineno) +
                        " must be attr_i,attr_j,label");
    }
    const auto index_of = [&](const std::string& name) {
      for (std::size_t a = 0; a < g.attributes.size(); ++a) {
        if (g.attributes[a] == name) return a;
      }
      throw UnknownAttribute("relations: unknown attribute '" + name + "' at line " +
                             std::to_string(lineno));
    };
    g.add_edge(index_of(fields[0]), index_of(fields[1]), fields[2]);
  }
  return g;
}

struct LabelGaussian {
  std::string label;
  double mu = 0.0;
  double sigma = 0.0;  // >= sigma_min
  std::size_t member_pair_count = 0;
};

using PairKey = std::pair<std::size_t, std::size_t>;

namespace detail {

// Population mean / deviation over a canonically sorted copy, so the fit is
// bit-exactly permutation-invariant.
inline LabelGaussian fit_gaussian(std::string label, std::vector<double> samples,
                                  double sigma_min, std::size_t member_pairs) {
  if (samples.empty()) throw EmptyLabel("fit: label '" + label + "' has no member pairs");
  std::sort(samples.begin(), samples.end());
  KahanSum sum;
  for (double m : samples) sum.add(m);
  const double mu = sum.value() / static_cast<double>(samples.size());
  KahanSum var;
  for (double m : samples) var.add((m - mu) * (m - mu));
  double sigma = std::sqrt(var.value() / static_cast<double>(samples.size()));
  if (samples.size() == 1 || sigma < sigma_min) sigma = sigma_min;
  return LabelGaussian{std::move(label), mu, sigma, member_pairs};
}

}  // namespace detail

// One Gaussian per label from the member pairs' mean cosines. sigma is the
// population deviation, floored at sigma_min (and forced to sigma_min for a
// single member).
inline std::vector<LabelGaussian> fit_label_gaussians(
    const RelationGraph& graph, const std::map<PairKey, double>& pair_means,
    double sigma_min = 0.05) {
  if (sigma_min <= 0.0) throw ValidationError("fit: sigma_min must be positive");
  std::vector<LabelGaussian> out;
  for (const std::string& label : graph.labels) {
    std::vector<double> means;
    for (const auto& e : graph.edges) {
      if (e.label != label) continue;
      const auto it = pair_means.find({e.i, e.j});
      if (it == pair_means.end()) {
        throw ValidationError("fit: missing mean cosine for pair (" + graph.attributes[e.i] +
                              ", " + graph.attributes[e.j] + ")");
      }
      means.push_back(it->second);
    }
    const std::size_t members = means.size();
    out.push_back(detail::fit_gaussian(label, std::move(means), sigma_min, members));
  }
  return out;
}

// Alternative fit pooling the raw per-image cosines of all member pairs
// instead of per-pair means. Exposed behind a switch; not the default.
inline std::vector<LabelGaussian> fit_label_gaussians_pooled(
    const RelationGraph& graph, const std::map<PairKey, std::vector<double>>& pair_cosines,
    double sigma_min = 0.05) {
  if (sigma_min <= 0.0) throw ValidationError("fit: sigma_min must be positive");
  std::vector<LabelGaussian> out;
  for (const std::string& label : graph.labels) {
    std::vector<double> pooled;
    std::size_t members = 0;
    for (const auto& e : graph.edges) {
      if (e.label != label) continue;
      const auto it = pair_cosines.find({e.i, e.j});
      if (it == pair_cosines.end()) {
        throw ValidationError("fit: missing cosines for pair (" + graph.attributes[e.i] + ", " +
                              graph.attributes[e.j] + ")");
      }
      pooled.insert(pooled.end(), it->second.begin(), it->second.end());
      ++members;
    }
    if (members == 0) throw EmptyLabel("fit: label '" + label + "' has no member pairs");
    out.push_back(detail::fit_gaussian(label, std::move(pooled), sigma_min, members));
  }
  return out;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Bin masses of N(mu, sigma^2) over [-1, 1], renormalized to sum 1.
inline std::vector<double> discretize_gaussian(const LabelGaussian& g, std::size_t bins) {
  if (bins < 2) throw ValidationError("discretize: need at least 2 bins");
  if (!(g.sigma > 0.0)) throw ValidationError("discretize: sigma must be positive");
  std::vector<double> p(bins);
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins);
    const double hi = -1.0 + 2.0 * static_cast<double>(b + 1) / static_cast<double>(bins);
    p[b] = normal_cdf((hi - g.mu) / g.sigma) - normal_cdf((lo - g.mu) / g.sigma);
    total += p[b];
  }
  if (!(total > 0.0)) {
    throw RuntimeFailure("discretize: no probability mass inside [-1,1] for label '" +
                         g.label + "'");
  }
  for (double& v : p) v /= total;
  return p;
}

}  // namespace biasdiag
