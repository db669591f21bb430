#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "biasdiag/annotations.hpp"
#include "biasdiag/errors.hpp"
#include "biasdiag/tensor.hpp"

namespace biasdiag {

// ---------------------------------------------------------------------------
// Pairwise cosine mining: per-image cosines between two attributes'
// inference vectors, aggregated into a histogram over [-1, 1].
// ---------------------------------------------------------------------------

struct PairDistribution {
  std::size_t attr_i = 0, attr_j = 0;
  std::vector<std::uint64_t> counts;  // B uniform bins over [-1,1]
  std::size_t sample_count = 0;       // included samples == sum of counts
  double mean_cosine = 0.0;           // over included samples
  std::size_t skipped_count = 0;      // zero-norm vectors
};

// Samples in which either attribute is present.
inline std::vector<std::size_t> filter_pair_samples(const AnnotationTable& table,
                                                    std::size_t i, std::size_t j) {
  if (i == j) throw ValidationError("filter_pair_samples: i == j");
  if (i >= table.attribute_count() || j >= table.attribute_count()) {
    throw ValidationError("filter_pair_samples: attribute index out of range");
  }
  std::vector<std::size_t> keep;
  for (std::size_t s = 0; s < table.sample_count(); ++s) {
    if (table.value(s, i) == +1 || table.value(s, j) == +1) keep.push_back(s);
  }
  if (keep.empty()) {
    throw NoSamples("filter_pair_samples: no sample has attribute " + std::to_string(i) +
                    " or " + std::to_string(j) + " present");
  }
  return keep;
}

// Bin b covers [-1 + 2b/B, -1 + 2(b+1)/B), last bin closed.
inline std::size_t cosine_bin(double c, std::size_t bins) {
  const double pos = (c + 1.0) / 2.0 * static_cast<double>(bins);
  auto b = static_cast<long long>(std::floor(pos));
  if (b < 0) b = 0;
  if (b >= static_cast<long long>(bins)) b = static_cast<long long>(bins) - 1;
  return static_cast<std::size_t>(b);
}

struct PairCosines {
  std::vector<double> values;   // per included sample, subset order
  std::size_t skipped = 0;
};

inline PairCosines pair_cosines(const std::vector<Tensor>& v_i, const std::vector<Tensor>& v_j,
                                const std::vector<std::size_t>& subset) {
  PairCosines out;
  out.values.reserve(subset.size());
  for (std::size_t s : subset) {
    if (s >= v_i.size() || s >= v_j.size()) {
      throw ValidationError("pair_cosines: sample index " + std::to_string(s) +
                            " has no inference vector");
    }
    if (l2_norm(v_i[s]) < kZeroNormEps || l2_norm(v_j[s]) < kZeroNormEps) {
      ++out.skipped;  // undefined angle is not evidence of unrelatedness
      continue;
    }
    out.values.push_back(cosine(v_i[s], v_j[s]));
  }
  return out;
}

inline PairDistribution mine_pair(const std::vector<Tensor>& v_i, const std::vector<Tensor>& v_j,
                                  const std::vector<std::size_t>& subset, std::size_t bins,
                                  std::size_t attr_i = 0, std::size_t attr_j = 0) {
  if (bins < 2) throw ValidationError("mine_pair: need at least 2 bins");
  const PairCosines cos = pair_cosines(v_i, v_j, subset);
  if (cos.values.empty()) {
    throw NoSamples("mine_pair: every sample skipped (zero-norm inference vectors)");
  }
  PairDistribution dist;
  dist.attr_i = attr_i;
  dist.attr_j = attr_j;
  dist.counts.assign(bins, 0);
  dist.skipped_count = cos.skipped;
  KahanSum mean;
  for (double c : cos.values) {
    ++dist.counts[cosine_bin(c, bins)];
    mean.add(c);
  }
  dist.sample_count = cos.values.size();
  dist.mean_cosine = mean.value() / static_cast<double>(dist.sample_count);
  return dist;
}

// Rows of `bin_lower,count`.
inline void write_pair_distribution_csv(std::ostream& os, const PairDistribution& dist) {
  os << "bin_lower,count\n";
  const std::size_t bins = dist.counts.size();
  char buf[64];
  for (std::size_t b = 0; b < bins; ++b) {
    const double lower = -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins);
    std::snprintf(buf, sizeof buf, "%.17g", lower);
    os << buf << "," << dist.counts[b] << "\n";
  }
}

}  // namespace biasdiag
