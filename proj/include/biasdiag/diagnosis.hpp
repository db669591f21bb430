#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "biasdiag/annotations.hpp"
#include "biasdiag/errors.hpp"
#include "biasdiag/groundtruth.hpp"
#include "biasdiag/relation.hpp"

namespace biasdiag {

// ---------------------------------------------------------------------------
// KL divergence between ground-truth P and mined Q, pair classification and
// failure-mode extraction.
// ---------------------------------------------------------------------------

// KL(P||Q) in nats over shared bins. Q is normalized with an additive
// pseudo-count eps per bin so the divergence stays finite when Q has empty
// bins; terms with P_b == 0 contribute 0. Clamped at 0 against rounding.
inline double kl_pair(const std::vector<double>& p, const PairDistribution& q, double eps) {
  if (p.size() != q.counts.size()) {
    throw BinMismatch("kl_pair: " + std::to_string(p.size()) + " vs " +
                      std::to_string(q.counts.size()) + " bins");
  }
  if (q.sample_count == 0) throw NoSamples("kl_pair: empty mined distribution");
  if (eps < 0.0) throw ValidationError("kl_pair: eps must be non-negative");
  const double total = static_cast<double>(q.sample_count) +
                       eps * static_cast<double>(p.size());
  double kl = 0.0;
  for (std::size_t b = 0; b < p.size(); ++b) {
    if (p[b] == 0.0) continue;
    const double qb = (static_cast<double>(q.counts[b]) + eps) / total;
    kl += p[b] * std::log(p[b] / qb);
  }
  return kl < 0.0 ? 0.0 : kl;
}

// KL_{A_i} = (1/deg) * sum of the attribute's labeled-pair KLs, i.e. the
// mean with P(A_j|A_i) = 1/deg(A_i).
inline double kl_attribute(const RelationGraph& graph, std::size_t attr,
                           const std::map<PairKey, double>& pair_kls) {
  const std::size_t deg = graph.degree(attr);
  if (deg == 0) {
    throw IsolatedAttribute("kl_attribute: '" + graph.attributes[attr] +
                            "' has no labeled relationships");
  }
  KahanSum sum;
  for (const auto& e : graph.edges) {
    if (e.i != attr && e.j != attr) continue;
    const auto it = pair_kls.find({e.i, e.j});
    if (it == pair_kls.end()) {
      throw ValidationError("kl_attribute: missing pair KL for (" + graph.attributes[e.i] +
                            ", " + graph.attributes[e.j] + ")");
    }
    sum.add(it->second);
  }
  return sum.value() / static_cast<double>(deg);
}

enum class PairClass { WellLearned, BlindSpot, FailureMode };

inline const char* pair_class_name(PairClass c) {
  switch (c) {
    case PairClass::WellLearned: return "well_learned";
    case PairClass::BlindSpot: return "blind_spot";
    case PairClass::FailureMode: return "failure_mode";
  }
  return "?";
}

// Rule table, applied only to pairs whose KL reaches the gate:
//   |e| <  cos_thresh and |e - mu| > mu_thresh -> blind spot
//   |e| >  cos_thresh and |e - mu| > mu_thresh -> failure mode
// everything else (both boundaries included) is well learned.
inline PairClass classify_pair(double mean_cosine, double mu_label, double kl,
                               double kl_threshold, double cos_thresh = 0.2,
                               double mu_thresh = 0.2) {
  if (!(kl >= kl_threshold)) return PairClass::WellLearned;
  const double e = std::fabs(mean_cosine);
  const double d = std::fabs(mean_cosine - mu_label);
  if (d > mu_thresh) {
    if (e < cos_thresh) return PairClass::BlindSpot;
    if (e > cos_thresh) return PairClass::FailureMode;
  }
  return PairClass::WellLearned;
}

struct FailureModeInfo {
  int sign_i = 0, sign_j = 0;  // annotation cell (Y_i = sign_i, Y_j = sign_j)
  std::size_t support = 0;     // training samples in that cell; 0 -> reported empty
};

// For a mined positive relation the failure candidates are the opposite
// cells {(+,-), (-,+)}; for a mined negative relation {(+,+), (-,-)}. The
// cell with fewer training samples is returned; ties resolve toward the
// candidate listing A_i positive.
inline FailureModeInfo extract_failure_mode(const AnnotationTable& table, std::size_t i,
                                            std::size_t j, double mined_sign) {
  const auto count_cell = [&](int a, int b) {
    std::size_t n = 0;
    for (std::size_t s = 0; s < table.sample_count(); ++s) {
      if (table.value(s, i) == a && table.value(s, j) == b) ++n;
    }
    return n;
  };
  int first_a, first_b, second_a, second_b;
  if (mined_sign >= 0.0) {
    first_a = +1; first_b = -1; second_a = -1; second_b = +1;
  } else {
    first_a = +1; first_b = +1; second_a = -1; second_b = -1;
  }
  const std::size_t n_first = count_cell(first_a, first_b);
  const std::size_t n_second = count_cell(second_a, second_b);
  if (n_second < n_first) return {second_a, second_b, n_second};
  return {first_a, first_b, n_first};
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

struct PairDiagnosis {
  std::size_t i = 0, j = 0;
  std::string label;
  double mean_cosine = 0.0;
  double mu_label = 0.0;
  double kl = 0.0;
  std::size_t sample_count = 0;
  std::size_t skipped_count = 0;
  PairClass classification = PairClass::WellLearned;
  std::optional<FailureModeInfo> failure_mode;  // present iff FailureMode
};

struct AttributeDiagnosis {
  std::size_t index = 0;
  std::string name;
  std::size_t degree = 0;
  std::optional<double> kl;  // empty -> isolated, not diagnosable
};

struct DiagnosisOptions {
  std::size_t bins = 64;
  double epsilon = 0.5;          // pseudo-count per bin for Q smoothing
  double sigma_min = 0.05;
  double gate_percentile = 75.0; // "high KL" gate over the run's pair KLs
  double cos_threshold = 0.2;
  double mu_threshold = 0.2;
  bool pooled_fit = false;
};

// Nearest-rank percentile of the run's labeled-pair KLs.
inline double kl_gate_from(std::vector<double> kls, double percentile) {
  if (kls.empty()) throw EmptyInput("kl gate: no pair KLs");
  std::sort(kls.begin(), kls.end());
  const double rank = std::ceil(percentile / 100.0 * static_cast<double>(kls.size()));
  std::size_t idx = rank <= 1.0 ? 0 : static_cast<std::size_t>(rank) - 1;
  if (idx >= kls.size()) idx = kls.size() - 1;
  return kls[idx];
}

struct DiagnosisReport {
  std::vector<PairDiagnosis> pairs;  // sorted by KL desc, then (i, j)
  double kl_gate = 0.0;
  std::vector<LabelGaussian> gaussians;
  std::vector<AttributeDiagnosis> attributes;     // index order
  std::vector<std::size_t> attribute_ranking;     // diagnosable attrs, KL desc
  nlohmann::ordered_json config_echo;
};

// Inputs aligned with graph.edges: one mined distribution (and, for the
// pooled fit, the raw cosines) per labeled pair.
inline DiagnosisReport build_report(const RelationGraph& graph, const AnnotationTable& table,
                                    const std::vector<PairDistribution>& dists,
                                    const std::vector<std::vector<double>>& cosines,
                                    const DiagnosisOptions& opt) {
  if (dists.size() != graph.edges.size()) {
    throw ShapeMismatch("diagnose: need one mined distribution per labeled pair");
  }
  if (graph.edges.empty()) throw EmptyInput("diagnose: relation graph has no edges");

  DiagnosisReport rep;

  std::map<PairKey, double> pair_means;
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    pair_means[{graph.edges[k].i, graph.edges[k].j}] = dists[k].mean_cosine;
  }
  if (opt.pooled_fit) {
    if (cosines.size() != graph.edges.size()) {
      throw ShapeMismatch("diagnose: pooled fit needs per-pair cosines");
    }
    std::map<PairKey, std::vector<double>> pooled;
    for (std::size_t k = 0; k < graph.edges.size(); ++k) {
      pooled[{graph.edges[k].i, graph.edges[k].j}] = cosines[k];
    }
    rep.gaussians = fit_label_gaussians_pooled(graph, pooled, opt.sigma_min);
  } else {
    rep.gaussians = fit_label_gaussians(graph, pair_means, opt.sigma_min);
  }

  const auto gaussian_of = [&](const std::string& label) -> const LabelGaussian& {
    for (const auto& g : rep.gaussians) {
      if (g.label == label) return g;
    }
    throw EmptyLabel("diagnose: no Gaussian for label '" + label + "'");
  };

  std::map<PairKey, double> pair_kls;
  std::vector<double> kls;
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    const auto& e = graph.edges[k];
    const std::vector<double> p = discretize_gaussian(gaussian_of(e.label), opt.bins);
    const double kl = kl_pair(p, dists[k], opt.epsilon);
    pair_kls[{e.i, e.j}] = kl;
    kls.push_back(kl);
  }
  rep.kl_gate = kl_gate_from(kls, opt.gate_percentile);

  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    const auto& e = graph.edges[k];
    PairDiagnosis d;
    d.i = e.i;
    d.j = e.j;
    d.label = e.label;
    d.mean_cosine = dists[k].mean_cosine;
    d.mu_label = gaussian_of(e.label).mu;
    d.kl = pair_kls[{e.i, e.j}];
    d.sample_count = dists[k].sample_count;
    d.skipped_count = dists[k].skipped_count;
    d.classification = classify_pair(d.mean_cosine, d.mu_label, d.kl, rep.kl_gate,
                                     opt.cos_threshold, opt.mu_threshold);
    if (d.classification == PairClass::FailureMode) {
      d.failure_mode = extract_failure_mode(table, e.i, e.j, d.mean_cosine);
    }
    rep.pairs.push_back(std::move(d));
  }
  std::sort(rep.pairs.begin(), rep.pairs.end(), [](const PairDiagnosis& a, const PairDiagnosis& b) {
    if (a.kl != b.kl) return a.kl > b.kl;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });

  for (std::size_t a = 0; a < graph.attributes.size(); ++a) {
    AttributeDiagnosis ad;
    ad.index = a;
    ad.name = graph.attributes[a];
    ad.degree = graph.degree(a);
    if (ad.degree > 0) ad.kl = kl_attribute(graph, a, pair_kls);
    rep.attributes.push_back(std::move(ad));
  }
  for (std::size_t a = 0; a < rep.attributes.size(); ++a) {
    if (rep.attributes[a].kl) rep.attribute_ranking.push_back(a);
  }
  std::sort(rep.attribute_ranking.begin(), rep.attribute_ranking.end(),
            [&](std::size_t a, std::size_t b) {
              const double ka = *rep.attributes[a].kl;
              const double kb = *rep.attributes[b].kl;
              if (ka != kb) return ka > kb;
              return a < b;
            });
  return rep;
}

inline std::string pair_description(const DiagnosisReport& rep, const RelationGraph& graph,
                                    const PairDiagnosis& d) {
  (void)rep;
  return d.label + " relationship between " + graph.attributes[d.i] + " and " +
         graph.attributes[d.j];
}

inline nlohmann::ordered_json report_to_json(const DiagnosisReport& rep,
                                             const RelationGraph& graph) {
  nlohmann::ordered_json j;
  j["config"] = rep.config_echo;
  j["kl_unit"] = "nats";
  j["kl_gate"] = rep.kl_gate;
  j["label_gaussians"] = nlohmann::ordered_json::array();
  for (const auto& g : rep.gaussians) {
    j["label_gaussians"].push_back({{"label", g.label},
                                    {"mu", g.mu},
                                    {"sigma", g.sigma},
                                    {"member_pair_count", g.member_pair_count}});
  }
  j["pairs"] = nlohmann::ordered_json::array();
  for (const auto& d : rep.pairs) {
    nlohmann::ordered_json pj{{"attr_i", graph.attributes[d.i]},
                              {"attr_j", graph.attributes[d.j]},
                              {"i", d.i},
                              {"j", d.j},
                              {"label", d.label},
                              {"mean_cosine", d.mean_cosine},
                              {"mu_label", d.mu_label},
                              {"kl", d.kl},
                              {"sample_count", d.sample_count},
                              {"skipped_count", d.skipped_count},
                              {"classification", pair_class_name(d.classification)}};
    if (d.failure_mode) {
      pj["failure_mode"] = {{"sign_i", d.failure_mode->sign_i},
                            {"sign_j", d.failure_mode->sign_j},
                            {"support", d.failure_mode->support},
                            {"empty", d.failure_mode->support == 0}};
    }
    j["pairs"].push_back(std::move(pj));
  }
  j["attributes"] = nlohmann::ordered_json::array();
  for (const auto& a : rep.attributes) {
    nlohmann::ordered_json aj{{"name", a.name}, {"degree", a.degree}};
    if (a.kl) {
      aj["kl"] = *a.kl;
    } else {
      aj["diagnosable"] = false;
    }
    j["attributes"].push_back(std::move(aj));
  }
  j["attribute_ranking"] = nlohmann::ordered_json::array();
  for (std::size_t a : rep.attribute_ranking) j["attribute_ranking"].push_back(rep.attributes[a].name);

  j["blind_spots"] = nlohmann::ordered_json::array();
  j["failure_modes"] = nlohmann::ordered_json::array();
  std::size_t rank_b = 0, rank_f = 0;
  for (const auto& d : rep.pairs) {
    if (d.classification == PairClass::BlindSpot) {
      j["blind_spots"].push_back({{"rank", ++rank_b},
                                  {"kl", d.kl},
                                  {"description", pair_description(rep, graph, d)}});
    } else if (d.classification == PairClass::FailureMode) {
      j["failure_modes"].push_back({{"rank", ++rank_f},
                                    {"kl", d.kl},
                                    {"description", pair_description(rep, graph, d)},
                                    {"sign_i", d.failure_mode->sign_i},
                                    {"sign_j", d.failure_mode->sign_j},
                                    {"support", d.failure_mode->support}});
    }
  }
  return j;
}

// `rank,kl,kind,description` rows, blind spots first, ordered by KL.
inline void write_summary_csv(std::ostream& os, const DiagnosisReport& rep,
                              const RelationGraph& graph) {
  os << "rank,kl,kind,description\n";
  char buf[64];
  const auto emit = [&](PairClass cls, const char* kind) {
    std::size_t rank = 0;
    for (const auto& d : rep.pairs) {
      if (d.classification != cls) continue;
      std::snprintf(buf, sizeof buf, "%.17g", d.kl);
      os << ++rank << "," << buf << "," << kind << ","
         << pair_description(rep, graph, d) << "\n";
    }
  };
  emit(PairClass::BlindSpot, "blind spot");
  emit(PairClass::FailureMode, "failure mode");
  return;
}

}  // namespace biasdiag
