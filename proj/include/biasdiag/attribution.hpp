#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "biasdiag/errors.hpp"
#include "biasdiag/net.hpp"
#include "biasdiag/tensor.hpp"

namespace biasdiag {

// ---------------------------------------------------------------------------
// Per-image exact linear surrogate of one attribute score and the global
// sparse unit mask selected by greedy L1-penalized forward selection.
// ---------------------------------------------------------------------------

// Within one ReLU activation region the score is exactly
//   score == dot(gradient, x) + bias
// where x is the probe-layer output that produced the trace.
struct LocalSurrogate {
  Tensor gradient;   // d(score)/dx at the stored trace
  double bias = 0.0;
  double score = 0.0;
};

inline LocalSurrogate local_surrogate(const Network& net, const ActivationTrace& trace,
                                      std::size_t attr_index) {
  LocalSurrogate s;
  s.gradient = net.grad_at_probe(trace, attr_index);
  s.score = trace.scores[attr_index];
  s.bias = s.score - dot(s.gradient, net.probe_output(trace));
  return s;
}

struct MaskConfig {
  // Penalty per selected unit. Unset -> 0.01 * mean_I[dot(g,x)^2] / N.
  std::optional<double> lambda;
  std::optional<std::size_t> max_units;
};

struct PatternMask {
  Tensor mask;  // entries 0 or 1, probe shape
  std::size_t selected_count = 0;
  // Objective mean_I[residual^2] + lambda*|mask|_1, starting at the empty
  // mask; strictly decreasing over accepted steps.
  std::vector<double> objective_trace;
  double lambda_used = 0.0;
};

inline double auto_mask_lambda(const std::vector<LocalSurrogate>& surrogates,
                               const std::vector<Tensor>& probe_x) {
  KahanSum acc;
  for (std::size_t i = 0; i < surrogates.size(); ++i) {
    const double d = dot(surrogates[i].gradient, probe_x[i]);
    acc.add(d * d);
  }
  const double mean = acc.value() / static_cast<double>(surrogates.size());
  return 0.01 * mean / static_cast<double>(surrogates.front().gradient.size());
}

// Greedy forward selection for the mask. With the exact surrogate the
// fidelity residual of image I under mask rho is
//   r_I(rho) = sum_u (rho_u - 1) * g_u^I * x_u^I
// so adding unit k shifts r_I by +c_I[k] with c_I[k] = g_k^I x_k^I. Each
// step picks the unit with the largest decrease of mean_I[r^2] and accepts
// while that decrease exceeds lambda. Ties break toward the lowest unit
// index; accumulation order over images is fixed, so the mask is
// deterministic.
inline PatternMask greedy_mask(const std::vector<LocalSurrogate>& surrogates,
                               const std::vector<Tensor>& probe_x, const MaskConfig& cfg) {
  if (surrogates.empty()) throw EmptyInput("greedy_mask: no images");
  if (surrogates.size() != probe_x.size()) {
    throw ShapeMismatch("greedy_mask: surrogate/probe counts differ");
  }
  const std::size_t K = surrogates.size();
  const std::size_t N = surrogates.front().gradient.size();
  for (std::size_t i = 0; i < K; ++i) {
    if (surrogates[i].gradient.size() != N || probe_x[i].size() != N) {
      throw ShapeMismatch("greedy_mask: probe-layer sizes differ across images");
    }
  }
  const double lambda = cfg.lambda ? *cfg.lambda : auto_mask_lambda(surrogates, probe_x);
  if (lambda < 0.0) throw ValidationError("greedy_mask: lambda must be non-negative");
  const std::size_t max_units = cfg.max_units ? *cfg.max_units : N;

  // contributions c[i*N+u] and residuals r[i] for the empty mask
  std::vector<double> c(K * N);
  std::vector<double> r(K);
  std::vector<double> q(N, 0.0);  // sum_I c^2 per unit
  for (std::size_t i = 0; i < K; ++i) {
    const auto g = surrogates[i].gradient.values();
    const auto x = probe_x[i].values();
    double total = 0.0;
    for (std::size_t u = 0; u < N; ++u) {
      const double cu = g[u] * x[u];
      c[i * N + u] = cu;
      q[u] += cu * cu;
      total += cu;
    }
    r[i] = -total;
  }

  const auto fidelity = [&]() {
    double f = 0.0;
    for (double ri : r) f += ri * ri;
    return f / static_cast<double>(K);
  };

  PatternMask out;
  out.mask = Tensor(surrogates.front().gradient.shape());
  out.lambda_used = lambda;
  out.objective_trace.push_back(fidelity());

  std::vector<char> selected(N, 0);
  while (out.selected_count < max_units) {
    // marginal fidelity decrease of each unselected unit
    std::vector<double> s(N, 0.0);  // sum_I r_I * c_I[u]
    for (std::size_t i = 0; i < K; ++i) {
      const double ri = r[i];
      const double* ci = &c[i * N];
      for (std::size_t u = 0; u < N; ++u) s[u] += ri * ci[u];
    }
    std::size_t best = N;
    double best_gain = -std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < N; ++u) {
      if (selected[u]) continue;
      const double gain = -(2.0 * s[u] + q[u]) / static_cast<double>(K);
      if (gain > best_gain) {
        best_gain = gain;
        best = u;
      }
    }
    if (best == N || !(best_gain > lambda)) break;
    for (std::size_t i = 0; i < K; ++i) r[i] += c[i * N + best];
    const double objective =
        fidelity() + lambda * static_cast<double>(out.selected_count + 1);
    if (!(objective < out.objective_trace.back())) break;  // no real progress
    selected[best] = 1;
    out.mask[best] = 1.0;
    ++out.selected_count;
    out.objective_trace.push_back(objective);
  }
  return out;
}

// v = mask o gradient; the attribute's representation used for mining.
inline Tensor inference_vector(const PatternMask& mask, const LocalSurrogate& surrogate) {
  return hadamard(mask.mask, surrogate.gradient);
}

// Signed spatial contribution map: per position, the channel sum of v_u*x_u.
// Positive entries raise the attribute score. Total mass equals dot(v, x).
inline Tensor heatmap(const Tensor& v, const Tensor& x, std::size_t channels,
                      std::size_t height, std::size_t width) {
  const std::size_t n = channels * height * width;
  if (v.size() != n || x.size() != n) {
    throw ShapeMismatch("heatmap: expected " + std::to_string(n) + " units, got " +
                        std::to_string(v.size()) + " and " + std::to_string(x.size()));
  }
  Tensor map({height, width});
  const auto vv = v.values();
  const auto xv = x.values();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t h = 0; h < height; ++h) {
      for (std::size_t w = 0; w < width; ++w) {
        const std::size_t u = (c * height + h) * width + w;
        map[h * width + w] += vv[u] * xv[u];
      }
    }
  }
  return map;
}

}  // namespace biasdiag
