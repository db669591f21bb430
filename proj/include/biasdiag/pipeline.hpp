#pragma once

#include <optional>
#include <vector>

#include "biasdiag/annotations.hpp"
#include "biasdiag/attribution.hpp"
#include "biasdiag/diagnosis.hpp"
#include "biasdiag/groundtruth.hpp"
#include "biasdiag/net.hpp"
#include "biasdiag/relation.hpp"

namespace biasdiag {

// ---------------------------------------------------------------------------
// Shared orchestration: per-image surrogates -> global masks -> inference
// vectors -> pair distributions -> diagnosis report. One forward pass per
// image feeds every attribute.
// ---------------------------------------------------------------------------

struct MiningOptions {
  MaskConfig mask;
  std::size_t bins = 64;
};

struct AttributeMining {
  std::vector<LocalSurrogate> surrogates;  // per image
  PatternMask mask;
  std::vector<Tensor> vectors;             // v = mask o gradient, per image
};

struct Mined {
  std::vector<Tensor> probe_x;             // per image
  std::vector<AttributeMining> attrs;      // per attribute
};

inline Mined mine_representations(const Network& net, const std::vector<Tensor>& images,
                                  const MiningOptions& opt) {
  if (images.empty()) throw EmptyInput("mine: no images");
  Mined m;
  m.probe_x.reserve(images.size());
  m.attrs.resize(net.attribute_count());
  for (auto& a : m.attrs) a.surrogates.reserve(images.size());
  for (const Tensor& img : images) {
    const ActivationTrace tr = net.forward(img);
    m.probe_x.push_back(net.probe_output(tr));
    for (std::size_t a = 0; a < net.attribute_count(); ++a) {
      m.attrs[a].surrogates.push_back(local_surrogate(net, tr, a));
    }
  }
  for (auto& a : m.attrs) {
    a.mask = greedy_mask(a.surrogates, m.probe_x, opt.mask);
    a.vectors.reserve(images.size());
    for (const LocalSurrogate& s : a.surrogates) {
      a.vectors.push_back(inference_vector(a.mask, s));
    }
  }
  return m;
}

struct MinedEdges {
  std::vector<PairDistribution> dists;        // aligned with graph.edges
  std::vector<std::vector<double>> cosines;   // idem (for the pooled fit)
};

inline MinedEdges mine_edges(const Mined& mined, const AnnotationTable& table,
                             const RelationGraph& graph, std::size_t bins) {
  MinedEdges out;
  for (const auto& e : graph.edges) {
    const auto subset = filter_pair_samples(table, e.i, e.j);
    const auto& vi = mined.attrs[e.i].vectors;
    const auto& vj = mined.attrs[e.j].vectors;
    out.dists.push_back(mine_pair(vi, vj, subset, bins, e.i, e.j));
    out.cosines.push_back(pair_cosines(vi, vj, subset).values);
  }
  return out;
}

struct DiagnoseOutcome {
  DiagnosisReport report;
  MinedEdges edges;
  Mined mined;
};

inline DiagnoseOutcome diagnose_dataset(const Network& net, const std::vector<Tensor>& images,
                                        const AnnotationTable& table, const RelationGraph& graph,
                                        const DiagnosisOptions& dopt, const MiningOptions& mopt) {
  if (images.size() != table.sample_count()) {
    throw ShapeMismatch("diagnose: " + std::to_string(images.size()) + " images vs " +
                        std::to_string(table.sample_count()) + " annotation rows");
  }
  if (table.attribute_count() != net.attribute_count()) {
    throw ShapeMismatch("diagnose: table has " + std::to_string(table.attribute_count()) +
                        " attributes, model expects " + std::to_string(net.attribute_count()));
  }
  DiagnoseOutcome out;
  out.mined = mine_representations(net, images, mopt);
  out.edges = mine_edges(out.mined, table, graph, dopt.bins);
  out.report = build_report(graph, table, out.edges.dists, out.edges.cosines, dopt);
  return out;
}

}  // namespace biasdiag
