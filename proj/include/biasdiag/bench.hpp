#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "biasdiag/annotations.hpp"
#include "biasdiag/errors.hpp"
#include "biasdiag/net.hpp"
#include "biasdiag/pipeline.hpp"
#include "biasdiag/rng.hpp"
#include "biasdiag/tensor.hpp"

namespace biasdiag {

// ---------------------------------------------------------------------------
// Experiment harness: synthetic attribute images with a controlled joint
// annotation distribution, bias injection, the entropy baseline, and the
// accuracy-decrease evaluation of failure modes.
// ---------------------------------------------------------------------------

struct Rect {
  std::size_t x0 = 0, y0 = 0, w = 0, h = 0;
};

struct SynthSpec {
  std::size_t height = 16, width = 16;
  std::size_t attribute_count = 2;
  std::vector<Rect> regions;        // per attribute, inside the image
  std::vector<double> intensity;    // per attribute, added where present
  std::vector<double> joint;        // over 2^n sign cells; bit k set <=> attr k present
  double noise_level = 0.25;        // additive uniform noise in [-level, +level]
  std::uint64_t seed = 1;
  std::size_t sample_count = 600;
};

// Disjoint boxes on a ceil(sqrt(n)) grid, centered with a margin.
inline std::vector<Rect> default_regions(std::size_t n, std::size_t height, std::size_t width) {
  std::size_t g = 1;
  while (g * g < n) ++g;
  const std::size_t ch = height / g, cw = width / g;
  if (ch < 2 || cw < 2) throw ValidationError("default_regions: image too small for " +
                                              std::to_string(n) + " attributes");
  std::vector<Rect> out;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t row = k / g, col = k % g;
    Rect r;
    r.y0 = row * ch + ch / 4;
    r.x0 = col * cw + cw / 4;
    r.h = std::max<std::size_t>(1, ch / 2);
    r.w = std::max<std::size_t>(1, cw / 2);
    out.push_back(r);
  }
  return out;
}

inline std::vector<double> independent_joint(const std::vector<double>& pos_prob) {
  const std::size_t n = pos_prob.size();
  std::vector<double> joint(std::size_t{1} << n);
  for (std::size_t cell = 0; cell < joint.size(); ++cell) {
    double p = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      const bool present = (cell >> k) & 1u;
      p *= present ? pos_prob[k] : (1.0 - pos_prob[k]);
    }
    joint[cell] = p;
  }
  return joint;
}

inline SynthSpec default_synth_spec(std::size_t attrs, std::size_t samples, std::uint64_t seed,
                                    std::size_t height = 16, std::size_t width = 16,
                                    double pos_prob = 0.5, double noise = 0.25,
                                    double intensity = 1.0) {
  SynthSpec spec;
  spec.height = height;
  spec.width = width;
  spec.attribute_count = attrs;
  spec.regions = default_regions(attrs, height, width);
  spec.intensity.assign(attrs, intensity);
  spec.joint = independent_joint(std::vector<double>(attrs, pos_prob));
  spec.noise_level = noise;
  spec.seed = seed;
  spec.sample_count = samples;
  return spec;
}

struct SynthDataset {
  std::vector<Tensor> images;  // (1, H, W) each
  AnnotationTable table;
};

inline void validate_synth_spec(const SynthSpec& spec) {
  const std::size_t n = spec.attribute_count;
  if (n == 0 || n > 16) throw ValidationError("synth: attribute count must be in 1..16");
  if (spec.regions.size() != n || spec.intensity.size() != n) {
    throw ValidationError("synth: regions and intensities must cover every attribute");
  }
  for (std::size_t k = 0; k < n; ++k) {
    const Rect& r = spec.regions[k];
    if (r.w == 0 || r.h == 0 || r.x0 + r.w > spec.width || r.y0 + r.h > spec.height) {
      throw RegionOverflow("synth: region of attribute " + std::to_string(k + 1) +
                           " leaves the " + std::to_string(spec.height) + "x" +
                           std::to_string(spec.width) + " image");
    }
  }
  if (spec.joint.size() != (std::size_t{1} << n)) {
    throw ValidationError("synth: joint distribution needs 2^n cells");
  }
  double total = 0.0;
  for (double p : spec.joint) {
    if (p < 0.0) throw ValidationError("synth: negative joint probability");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw ValidationError("synth: joint must sum to 1");
  if (spec.noise_level < 0.0) throw ValidationError("synth: negative noise level");
  if (spec.sample_count == 0) throw ValidationError("synth: sample count must be positive");
}

// Annotations drawn from the joint; each present attribute renders its
// constant-intensity rectangle; uniform noise everywhere. Deterministic per
// seed (one cell draw, then H*W noise draws, per sample).
inline SynthDataset synth_dataset(const SynthSpec& spec) {
  validate_synth_spec(spec);
  const std::size_t n = spec.attribute_count;
  Rng rng = Rng::substream(spec.seed, "synth");

  SynthDataset ds;
  ds.table.attributes.resize(n);
  for (std::size_t k = 0; k < n; ++k) ds.table.attributes[k] = "attr_" + std::to_string(k + 1);
  ds.table.flipped.assign(n, false);

  std::vector<double> cdf(spec.joint.size());
  double acc = 0.0;
  for (std::size_t c = 0; c < spec.joint.size(); ++c) {
    acc += spec.joint[c];
    cdf[c] = acc;
  }
  cdf.back() = 1.0;

  char idbuf[24];
  for (std::size_t s = 0; s < spec.sample_count; ++s) {
    const double u = rng.unit();
    std::size_t cell = 0;
    while (cell + 1 < cdf.size() && u >= cdf[cell]) ++cell;

    std::vector<int> row(n);
    Tensor img({1, spec.height, spec.width});
    for (std::size_t k = 0; k < n; ++k) {
      row[k] = ((cell >> k) & 1u) ? +1 : -1;
      if (row[k] == +1) {
        const Rect& r = spec.regions[k];
        for (std::size_t y = r.y0; y < r.y0 + r.h; ++y) {
          for (std::size_t x = r.x0; x < r.x0 + r.w; ++x) {
            img.at(0, y, x) += spec.intensity[k];
          }
        }
      }
    }
    if (spec.noise_level > 0.0) {
      for (double& v : img.values()) v += rng.uniform(-spec.noise_level, spec.noise_level);
    }
    std::snprintf(idbuf, sizeof idbuf, "s%06zu", s);
    ds.table.sample_ids.emplace_back(idbuf);
    ds.table.values.push_back(std::move(row));
    ds.images.push_back(std::move(img));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Bias injection: remove round(tau * N_opp) of the samples whose annotations
// for the target pair are opposite, chosen uniformly by the seed. The
// removal order depends only on the seed, so larger tau removes a superset.
// ---------------------------------------------------------------------------

struct BiasSpec {
  std::size_t attr_i = 0, attr_j = 1;
  double tau = 0.0;  // in [0, 1]
  std::uint64_t seed = 1;
};

struct BiasedDataset {
  std::vector<Tensor> images;
  AnnotationTable table;
  std::vector<std::size_t> removed;  // original sample indices, ascending
};

inline BiasedDataset inject_bias(const AnnotationTable& table, const std::vector<Tensor>& images,
                                 const BiasSpec& spec) {
  if (spec.tau < 0.0 || spec.tau > 1.0) throw ValidationError("inject_bias: tau must be in [0,1]");
  if (spec.attr_i == spec.attr_j || spec.attr_i >= table.attribute_count() ||
      spec.attr_j >= table.attribute_count()) {
    throw ValidationError("inject_bias: bad attribute pair");
  }
  if (images.size() != table.sample_count()) {
    throw ShapeMismatch("inject_bias: image/annotation counts differ");
  }

  std::vector<std::size_t> opposite;
  for (std::size_t s = 0; s < table.sample_count(); ++s) {
    if (table.value(s, spec.attr_i) * table.value(s, spec.attr_j) < 0) opposite.push_back(s);
  }
  const std::size_t remove_n =
      static_cast<std::size_t>(std::floor(spec.tau * static_cast<double>(opposite.size()) + 0.5));

  Rng rng = Rng::substream(spec.seed, "bias");
  rng.shuffle(opposite);
  std::vector<std::size_t> removed(opposite.begin(),
                                   opposite.begin() + static_cast<std::ptrdiff_t>(remove_n));
  std::sort(removed.begin(), removed.end());

  BiasedDataset out;
  out.removed = removed;
  out.table.attributes = table.attributes;
  out.table.flipped = table.flipped;
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < table.sample_count(); ++s) {
    if (cursor < removed.size() && removed[cursor] == s) {
      ++cursor;
      continue;
    }
    out.images.push_back(images[s]);
    out.table.sample_ids.push_back(table.sample_ids[s]);
    out.table.values.push_back(table.values[s]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Entropy baseline: per pair, the candidate failure mode is the emptiest of
// the four annotation cells; its significance is the Shannon entropy of the
// joint over the three cells excluding (-1,-1). Depends on proportions only.
// ---------------------------------------------------------------------------

struct EntropyMode {
  std::size_t i = 0, j = 0;
  int sign_i = 0, sign_j = 0;
  double entropy = 0.0;  // nats
  std::size_t min_count = 0;
};

inline std::array<std::size_t, 4> pair_cell_counts(const AnnotationTable& table, std::size_t i,
                                                   std::size_t j) {
  // cell order: (+,+), (+,-), (-,+), (-,-), lexicographic with +1 < -1
  std::array<std::size_t, 4> c{0, 0, 0, 0};
  for (std::size_t s = 0; s < table.sample_count(); ++s) {
    const int a = table.value(s, i), b = table.value(s, j);
    const std::size_t idx = (a == +1 ? 0u : 2u) + (b == +1 ? 0u : 1u);
    ++c[idx];
  }
  return c;
}

inline std::vector<EntropyMode> entropy_baseline(const AnnotationTable& table,
                                                 const std::vector<PairKey>& pairs) {
  if (pairs.empty()) throw EmptyInput("entropy_baseline: no pairs");
  static constexpr int kSign[4][2] = {{+1, +1}, {+1, -1}, {-1, +1}, {-1, -1}};
  std::vector<EntropyMode> out;
  for (const auto& [i, j] : pairs) {
    const auto c = pair_cell_counts(table, i, j);
    std::size_t best = 0;
    for (std::size_t k = 1; k < 4; ++k) {
      if (c[k] < c[best]) best = k;  // lexicographic tie rule: keep first minimum
    }
    double total = static_cast<double>(c[0] + c[1] + c[2]);  // (-1,-1) ignored
    double h = 0.0;
    if (total > 0.0) {
      for (std::size_t k = 0; k < 3; ++k) {
        if (c[k] == 0) continue;
        const double p = static_cast<double>(c[k]) / total;
        h -= p * std::log(p);
      }
    }
    out.push_back({i, j, kSign[best][0], kSign[best][1], h, c[best]});
  }
  std::sort(out.begin(), out.end(), [](const EntropyMode& a, const EntropyMode& b) {
    if (a.entropy != b.entropy) return a.entropy > b.entropy;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Accuracy decrease caused by a failure mode (Y_u = a, Y_v = b): accuracy on
// the single-attribute strata vs accuracy on the joint stratum.
// ---------------------------------------------------------------------------

struct FailureModeEval {
  std::size_t attr_u = 0, attr_v = 0;
  int sign_a = 0, sign_b = 0;
  double acc_ordinary = 0.0;
  double acc_mode = 0.0;
  double decrease = 0.0;  // == acc_ordinary - acc_mode
};

// Predictor maps (sample index, attribute) -> sign; the Network overload
// binds forward(). The functional form keeps the metric testable with
// hand-built predictions.
inline FailureModeEval accuracy_decrease(
    const std::function<int(std::size_t, std::size_t)>& predict, const AnnotationTable& table,
    std::size_t attr_u, int sign_a, std::size_t attr_v, int sign_b) {
  const auto stratum_accuracy = [&](std::size_t attr, int target,
                                    const std::function<bool(std::size_t)>& in_stratum,
                                    const std::string& name) {
    std::size_t total = 0, hit = 0;
    for (std::size_t s = 0; s < table.sample_count(); ++s) {
      if (!in_stratum(s)) continue;
      ++total;
      if (predict(s, attr) == target) ++hit;
    }
    if (total == 0) throw EmptyStratum("accuracy_decrease: empty stratum " + name);
    return static_cast<double>(hit) / static_cast<double>(total);
  };

  const std::string nu = table.attributes[attr_u], nv = table.attributes[attr_v];
  const auto sign_str = [](int v) { return v > 0 ? std::string("+1") : std::string("-1"); };

  FailureModeEval ev;
  ev.attr_u = attr_u;
  ev.attr_v = attr_v;
  ev.sign_a = sign_a;
  ev.sign_b = sign_b;
  const double acc_u = stratum_accuracy(
      attr_u, sign_a, [&](std::size_t s) { return table.value(s, attr_u) == sign_a; },
      nu + "=" + sign_str(sign_a));
  const double acc_v = stratum_accuracy(
      attr_v, sign_b, [&](std::size_t s) { return table.value(s, attr_v) == sign_b; },
      nv + "=" + sign_str(sign_b));
  const auto in_mode = [&](std::size_t s) {
    return table.value(s, attr_u) == sign_a && table.value(s, attr_v) == sign_b;
  };
  const std::string mode_name = nu + "=" + sign_str(sign_a) + "," + nv + "=" + sign_str(sign_b);
  const double acc_mu = stratum_accuracy(attr_u, sign_a, in_mode, mode_name);
  const double acc_mv = stratum_accuracy(attr_v, sign_b, in_mode, mode_name);

  ev.acc_ordinary = (acc_u + acc_v) / 2.0;
  ev.acc_mode = (acc_mu + acc_mv) / 2.0;
  ev.decrease = ev.acc_ordinary - ev.acc_mode;
  return ev;
}

inline FailureModeEval accuracy_decrease(const Network& net, const std::vector<Tensor>& images,
                                         const AnnotationTable& table, std::size_t attr_u,
                                         int sign_a, std::size_t attr_v, int sign_b) {
  if (images.size() != table.sample_count()) {
    throw ShapeMismatch("accuracy_decrease: image/annotation counts differ");
  }
  return accuracy_decrease(
      [&](std::size_t s, std::size_t attr) { return net.predict_sign(images[s], attr); }, table,
      attr_u, sign_a, attr_v, sign_b);
}

// ---------------------------------------------------------------------------
// Experiment grids. Each cell runs the full pipeline on its own seed:
// synth -> bias -> train -> attribute -> mine -> KL. Cells are independent
// and keyed, so the result tables do not depend on execution order.
// ---------------------------------------------------------------------------

struct Experiment2Config {
  std::size_t samples = 600;
  std::size_t height = 16, width = 16;
  double pos_prob = 0.5;
  double noise = 0.25;
  double intensity = 1.0;
  std::vector<double> taus{0.0, 0.5, 1.0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  TrainConfig train{0.15, 20, 16, 1, 1.0};  // per-cell seed filled in by the runner
  // Sparse masks localize the inference patterns; without the cap roughly
  // half the probe units get selected and the shared trunk dominates every
  // cosine.
  MaskConfig mask{std::nullopt, std::size_t{32}};
  // Odd bin count keeps an exact-zero cosine (disjoint masks) in the middle
  // of a bin instead of on the edge between two.
  std::size_t bins = 9;
  // Nominal pseudo-count at `samples`; each cell scales it by its filtered
  // sample count so the KL ceiling does not depend on how many samples the
  // bias removed (the spec's sample-size invariance, applied).
  double epsilon = 0.5;
  // Ground truth for the designed not-related pair. With only one labeled
  // pair the cross-pair Gaussian fit is unavailable, so P = N(0, sigma_ref);
  // sigma_ref tracks the observed spread of a balanced control's cosines.
  double sigma_ref = 0.05;
};

struct Exp2Row {
  std::string pair;
  double tau = 0.0;
  std::uint64_t seed = 0;
  double kl = 0.0;
};

// One biased dataset per (seed, tau): the base set is drawn once per seed so
// removals nest across tau values. KL compares the mined pair distribution
// against the fixed not-related reference.
inline std::vector<Exp2Row> run_experiment2(const Experiment2Config& cfg) {
  if (cfg.taus.empty() || cfg.seeds.empty()) throw ValidationError("experiment2: empty grid");
  std::vector<Exp2Row> rows;
  const LabelGaussian reference{"not_related", 0.0, cfg.sigma_ref, 1};
  const std::vector<double> p_ref = discretize_gaussian(reference, cfg.bins);

  for (const std::uint64_t seed : cfg.seeds) {
    const SynthSpec spec = default_synth_spec(2, cfg.samples, derive_seed(seed, "exp2-synth"),
                                              cfg.height, cfg.width, cfg.pos_prob, cfg.noise,
                                              cfg.intensity);
    const SynthDataset base = synth_dataset(spec);
    for (const double tau : cfg.taus) {
      BiasSpec bias{0, 1, tau, derive_seed(seed, "exp2-bias")};
      const BiasedDataset biased = inject_bias(base.table, base.images, bias);

      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(seed, "exp2-train");
      Network net = Network::randomized(
          default_network_config(2, 1, cfg.height, cfg.width), tc.seed, tc.init_scale);
      net = train(std::move(net), biased.images, biased.table.as_targets(),
                  LossSpec::uniform(LossKind::Logistic, 2), tc).net;

      MiningOptions mopt;
      mopt.mask = cfg.mask;
      mopt.bins = cfg.bins;
      const Mined mined = mine_representations(net, biased.images, mopt);
      const auto subset = filter_pair_samples(biased.table, 0, 1);
      const PairDistribution q =
          mine_pair(mined.attrs[0].vectors, mined.attrs[1].vectors, subset, cfg.bins, 0, 1);
      const double eps =
          cfg.epsilon * static_cast<double>(q.sample_count) / static_cast<double>(cfg.samples);
      rows.push_back({base.table.attributes[0] + "-" + base.table.attributes[1], tau, seed,
                      kl_pair(p_ref, q, eps)});
    }
  }
  return rows;
}

struct Experiment3Config {
  std::size_t attrs = 4;
  std::size_t train_samples = 600;
  std::size_t test_samples = 400;
  std::size_t height = 16, width = 16;
  double pos_prob = 0.5;
  double noise = 0.25;
  double intensity = 1.0;
  std::size_t biased_i = 0, biased_j = 1;
  double tau = 1.0;
  std::size_t top_n = 3;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  TrainConfig train{0.15, 20, 16, 1, 1.0};
  MaskConfig mask;
  DiagnosisOptions diagnosis;
  std::string relation_label = "not_related";
};

struct Exp3Row {
  std::uint64_t seed = 0;
  std::string method;  // "ours" or "entropy"
  std::size_t rank = 0;
  std::string pair;
  int sign_i = 0, sign_j = 0;
  double acc_ordinary = 0.0, acc_mode = 0.0, decrease = 0.0;
};

struct Exp3Summary {
  std::string method;
  double mean_ordinary = 0.0, mean_mode = 0.0, mean_decrease = 0.0;
  std::size_t modes_evaluated = 0;
};

struct Exp3Result {
  std::vector<Exp3Row> rows;
  std::vector<Exp3Summary> summary;  // "ours" then "entropy"
};

// Trains on a set fully biased for one designated pair, then compares the
// accuracy decrease of the diagnosis's top-N failure modes against the
// entropy baseline's top-N, both evaluated on a fresh unbiased test set.
inline Exp3Result run_experiment3(const Experiment3Config& cfg) {
  if (cfg.seeds.empty()) throw ValidationError("experiment3: no seeds");
  if (cfg.biased_i == cfg.biased_j || cfg.biased_i >= cfg.attrs || cfg.biased_j >= cfg.attrs) {
    throw ValidationError("experiment3: bad biased pair");
  }
  Exp3Result out;
  // per-seed mean decreases, averaged at the end
  std::vector<double> ours_dec, entropy_dec, ours_ord, entropy_ord, ours_mode, entropy_mode;
  std::size_t ours_count = 0, entropy_count = 0;

  for (const std::uint64_t seed : cfg.seeds) {
    const SynthSpec train_spec =
        default_synth_spec(cfg.attrs, cfg.train_samples, derive_seed(seed, "exp3-synth"),
                           cfg.height, cfg.width, cfg.pos_prob, cfg.noise, cfg.intensity);
    const SynthDataset base = synth_dataset(train_spec);
    const BiasSpec bias{cfg.biased_i, cfg.biased_j, cfg.tau, derive_seed(seed, "exp3-bias")};
    const BiasedDataset biased = inject_bias(base.table, base.images, bias);

    SynthSpec test_spec = train_spec;
    test_spec.seed = derive_seed(seed, "exp3-test");
    test_spec.sample_count = cfg.test_samples;
    const SynthDataset test = synth_dataset(test_spec);

    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(seed, "exp3-train");
    Network net = Network::randomized(
        default_network_config(cfg.attrs, 1, cfg.height, cfg.width), tc.seed, tc.init_scale);
    net = train(std::move(net), biased.images, biased.table.as_targets(),
                LossSpec::uniform(LossKind::Logistic, cfg.attrs), tc).net;

    RelationGraph graph;
    graph.attributes = base.table.attributes;
    for (std::size_t i = 0; i < cfg.attrs; ++i) {
      for (std::size_t j = i + 1; j < cfg.attrs; ++j) graph.add_edge(i, j, cfg.relation_label);
    }

    MiningOptions mopt;
    mopt.mask = cfg.mask;
    mopt.bins = cfg.diagnosis.bins;
    const DiagnoseOutcome diag = diagnose_dataset(net, biased.images, biased.table, graph,
                                                  cfg.diagnosis, mopt);

    const auto eval_mode = [&](std::size_t i, std::size_t j, int a, int b) {
      return accuracy_decrease(net, test.images, test.table, i, a, j, b);
    };
    const auto pair_name = [&](std::size_t i, std::size_t j) {
      return graph.attributes[i] + "-" + graph.attributes[j];
    };

    // ours: failure modes already ranked by KL descending in the report
    {
      std::size_t rank = 0;
      double dec = 0.0, ord = 0.0, mode = 0.0;
      std::size_t taken = 0;
      for (const PairDiagnosis& d : diag.report.pairs) {
        if (d.classification != PairClass::FailureMode) continue;
        if (rank == cfg.top_n) break;
        ++rank;
        const FailureModeEval ev =
            eval_mode(d.i, d.j, d.failure_mode->sign_i, d.failure_mode->sign_j);
        out.rows.push_back({seed, "ours", rank, pair_name(d.i, d.j), d.failure_mode->sign_i,
                            d.failure_mode->sign_j, ev.acc_ordinary, ev.acc_mode, ev.decrease});
        dec += ev.decrease;
        ord += ev.acc_ordinary;
        mode += ev.acc_mode;
        ++taken;
      }
      if (taken > 0) {
        ours_dec.push_back(dec / static_cast<double>(taken));
        ours_ord.push_back(ord / static_cast<double>(taken));
        ours_mode.push_back(mode / static_cast<double>(taken));
        ours_count += taken;
      }
    }
    // entropy baseline
    {
      std::vector<PairKey> pairs;
      for (const auto& e : graph.edges) pairs.push_back({e.i, e.j});
      const std::vector<EntropyMode> ranked = entropy_baseline(biased.table, pairs);
      double dec = 0.0, ord = 0.0, mode = 0.0;
      std::size_t taken = 0;
      for (std::size_t r = 0; r < ranked.size() && r < cfg.top_n; ++r) {
        const EntropyMode& m = ranked[r];
        const FailureModeEval ev = eval_mode(m.i, m.j, m.sign_i, m.sign_j);
        out.rows.push_back({seed, "entropy", r + 1, pair_name(m.i, m.j), m.sign_i, m.sign_j,
                            ev.acc_ordinary, ev.acc_mode, ev.decrease});
        dec += ev.decrease;
        ord += ev.acc_ordinary;
        mode += ev.acc_mode;
        ++taken;
      }
      if (taken > 0) {
        entropy_dec.push_back(dec / static_cast<double>(taken));
        entropy_ord.push_back(ord / static_cast<double>(taken));
        entropy_mode.push_back(mode / static_cast<double>(taken));
        entropy_count += taken;
      }
    }
  }

  const auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    KahanSum s;
    for (double x : v) s.add(x);
    return s.value() / static_cast<double>(v.size());
  };
  out.summary.push_back({"ours", mean(ours_ord), mean(ours_mode), mean(ours_dec), ours_count});
  out.summary.push_back(
      {"entropy", mean(entropy_ord), mean(entropy_mode), mean(entropy_dec), entropy_count});
  return out;
}

}  // namespace biasdiag
