#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "biasdiag/groundtruth.hpp"
#include "biasdiag/rng.hpp"
#include "oracles.hpp"

using namespace biasdiag;

namespace {
const std::vector<std::string> kAttrs{"smiling", "black_hair", "heavy_makeup", "attractive"};
}

TEST_CASE("parse relations") {
  SECTION("valid file with comments") {
    std::stringstream ss;
    ss << "# ground truth\n";
    ss << "smiling,black_hair,not_related\n";
    ss << "\n";
    ss << "heavy_makeup,attractive,probably_positive\n";
    const RelationGraph g = parse_relations(ss, kAttrs);
    REQUIRE(g.edges.size() == 2);
    CHECK(g.edges[0].i == 0);
    CHECK(g.edges[0].j == 1);
    CHECK(g.edges[0].label == "not_related");
    CHECK(g.edges[1].label == "probably_positive");
    CHECK(g.labels == std::vector<std::string>{"not_related", "probably_positive"});
    CHECK(g.degree(0) == 1);
    CHECK(g.degree(3) == 1);
  }
  SECTION("self edge") {
    std::stringstream ss;
    ss << "smiling,smiling,positive\n";
    CHECK_THROWS_AS(parse_relations(ss, kAttrs), SelfEdge);
  }
  SECTION("unknown attribute") {
    std::stringstream ss;
    ss << "smiling,mustache,not_related\n";
    CHECK_THROWS_AS(parse_relations(ss, kAttrs), UnknownAttribute);
  }
  SECTION("duplicate pair, order-insensitive") {
    std::stringstream ss;
    ss << "smiling,black_hair,not_related\n";
    ss << "black_hair,smiling,positive\n";
    CHECK_THROWS_AS(parse_relations(ss, kAttrs), DuplicateEdge);
  }
  SECTION("bad field count") {
    std::stringstream ss;
    ss << "smiling,black_hair\n";
    CHECK_THROWS_AS(parse_relations(ss, kAttrs), FormatError);
  }
}

TEST_CASE("fit label gaussians") {
  RelationGraph g;
  g.attributes = kAttrs;
  g.add_edge(0, 1, "positive");
  g.add_edge(2, 3, "positive");
  g.add_edge(0, 2, "negative");

  SECTION("hand arithmetic: means {0.4, 0.6} -> mu 0.5, sigma 0.1") {
    std::map<PairKey, double> means{{{0, 1}, 0.4}, {{2, 3}, 0.6}, {{0, 2}, -0.5}};
    const auto fits = fit_label_gaussians(g, means, 0.05);
    REQUIRE(fits.size() == 2);
    CHECK(fits[0].label == "positive");
    CHECK(fits[0].mu == Catch::Approx(0.5).margin(1e-15));
    CHECK(fits[0].sigma == Catch::Approx(0.1).margin(1e-12));
    CHECK(fits[0].member_pair_count == 2);
  }
  SECTION("single member pair gets the sigma floor") {
    std::map<PairKey, double> means{{{0, 1}, 0.4}, {{2, 3}, 0.6}, {{0, 2}, -0.5}};
    const auto fits = fit_label_gaussians(g, means, 0.05);
    CHECK(fits[1].label == "negative");
    CHECK(fits[1].mu == -0.5);
    CHECK(fits[1].sigma == 0.05);
    CHECK(fits[1].member_pair_count == 1);
  }
  SECTION("two labels fit independently with the expected ordering") {
    std::map<PairKey, double> means{{{0, 1}, 0.7}, {{2, 3}, 0.8}, {{0, 2}, -0.6}};
    const auto fits = fit_label_gaussians(g, means, 0.05);
    CHECK(fits[0].mu > fits[1].mu);
  }
  SECTION("sigma floor applies to near-identical members") {
    std::map<PairKey, double> means{{{0, 1}, 0.5}, {{2, 3}, 0.5 + 1e-9}, {{0, 2}, 0.0}};
    const auto fits = fit_label_gaussians(g, means, 0.05);
    CHECK(fits[0].sigma == 0.05);
  }
  SECTION("missing pair mean") {
    std::map<PairKey, double> means{{{0, 1}, 0.4}};
    CHECK_THROWS_AS(fit_label_gaussians(g, means, 0.05), ValidationError);
  }
  SECTION("empty label") {
    RelationGraph empty_label = g;
    empty_label.labels.push_back("unused");
    std::map<PairKey, double> means{{{0, 1}, 0.4}, {{2, 3}, 0.6}, {{0, 2}, -0.5}};
    CHECK_THROWS_AS(fit_label_gaussians(empty_label, means, 0.05), EmptyLabel);
  }
  SECTION("permutation invariance over member pairs") {
    Rng rng(5);
    for (int it = 0; it < 100; ++it) {
      RelationGraph big;
      big.attributes = {"a", "b", "c", "d", "e", "f"};
      std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 1}, {0, 2}, {1, 3},
                                                             {2, 4}, {3, 5}, {4, 5}};
      std::map<PairKey, double> means;
      for (const auto& [i, j] : pairs) means[{i, j}] = rng.uniform(-1, 1);
      for (const auto& [i, j] : pairs) big.add_edge(i, j, "L");
      const auto fit1 = fit_label_gaussians(big, means, 0.05);

      RelationGraph perm;
      perm.attributes = big.attributes;
      rng.shuffle(pairs);
      for (const auto& [i, j] : pairs) perm.add_edge(i, j, "L");
      const auto fit2 = fit_label_gaussians(perm, means, 0.05);
      CHECK(fit1[0].mu == fit2[0].mu);      // bit-exact: members sorted before folding
      CHECK(fit1[0].sigma == fit2[0].sigma);
    }
  }
}

TEST_CASE("pooled fit uses per-image cosines") {
  RelationGraph g;
  g.attributes = {"a", "b", "c"};
  g.add_edge(0, 1, "L");
  g.add_edge(0, 2, "L");
  std::map<PairKey, std::vector<double>> cosines{{{0, 1}, {0.1, 0.3}}, {{0, 2}, {0.5, 0.7}}};
  const auto fits = fit_label_gaussians_pooled(g, cosines, 0.01);
  REQUIRE(fits.size() == 1);
  CHECK(fits[0].mu == Catch::Approx(0.4).margin(1e-15));
  // population sigma over {0.1,0.3,0.5,0.7}
  CHECK(fits[0].sigma == Catch::Approx(std::sqrt(0.05)).margin(1e-12));
  CHECK(fits[0].member_pair_count == 2);
}

TEST_CASE("discretize gaussian") {
  SECTION("symmetric around zero") {
    const auto p = discretize_gaussian({"L", 0.0, 0.1, 1}, 64);
    for (std::size_t b = 0; b < 64; ++b) {
      CHECK(p[b] == Catch::Approx(p[63 - b]).margin(1e-12));
    }
  }
  SECTION("sums to one for any parameters") {
    Rng rng(9);
    for (int it = 0; it < 50; ++it) {
      const double mu = rng.uniform(-1, 1);
      const double sigma = rng.uniform(0.02, 0.8);
      const auto p = discretize_gaussian({"L", mu, sigma, 1}, 2 + rng.below(100));
      double total = 0.0;
      for (double v : p) {
        CHECK(v >= 0.0);
        total += v;
      }
      CHECK(total == Catch::Approx(1.0).margin(1e-12));
    }
  }
  SECTION("matches the midpoint quadrature oracle") {
    const auto p = discretize_gaussian({"L", 0.5, 0.2, 1}, 4);
    const auto expected = oracles::gaussian_bins_quadrature(0.5, 0.2, 4);
    REQUIRE(p.size() == expected.size());
    for (std::size_t b = 0; b < 4; ++b) {
      CHECK(p[b] == Catch::Approx(expected[b]).margin(1e-6));
    }
  }
  SECTION("validation") {
    CHECK_THROWS_AS(discretize_gaussian({"L", 0.0, 0.1, 1}, 1), ValidationError);
    CHECK_THROWS_AS(discretize_gaussian({"L", 0.0, 0.0, 1}, 8), ValidationError);
  }
}

TEST_CASE("removing one member moves the label mean by at most range/k") {
  Rng rng(31);
  for (int it = 0; it < 50; ++it) {
    const std::size_t k = 3 + rng.below(8);
    std::vector<double> means;
    double lo = 1.0, hi = -1.0;
    for (std::size_t m = 0; m < k; ++m) {
      means.push_back(rng.uniform(-1, 1));
      lo = std::min(lo, means.back());
      hi = std::max(hi, means.back());
    }
    KahanSum all;
    for (double m : means) all.add(m);
    const double mu = all.value() / static_cast<double>(k);
    for (std::size_t drop = 0; drop < k; ++drop) {
      KahanSum rest;
      for (std::size_t m = 0; m < k; ++m) {
        if (m != drop) rest.add(means[m]);
      }
      const double mu2 = rest.value() / static_cast<double>(k - 1);
      CHECK(std::fabs(mu2 - mu) <= (hi - lo) / static_cast<double>(k) + 1e-12);
    }
  }
}
