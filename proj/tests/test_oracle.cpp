// The reference implementations get their own tests: if the oracle is wrong,
// agreement elsewhere means nothing.

#include "ctxgcn/oracle.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "doctest.h"

namespace oracle = ctxgcn::oracle;

TEST_SUITE("oracle") {

TEST_CASE("finite differences of a constant are zero") {
  const auto f = [](const std::vector<double>&) { return 4.0; };
  for (double g : oracle::finite_diff_grad(f, {1.0, -2.0, 3.0})) CHECK(g == 0.0);
}

TEST_CASE("finite differences of half the squared norm recover the point") {
  const auto f = [](const std::vector<double>& x) {
    double sum = 0.0;
    for (double v : x) sum += v * v;
    return 0.5 * sum;
  };
  const std::vector<double> point{0.3, -1.2, 2.0};
  const std::vector<double> grad = oracle::finite_diff_grad(f, point);
  for (std::size_t i = 0; i < point.size(); ++i)
    CHECK(std::abs(grad[i] - point[i]) < 1e-9);
}

TEST_CASE("close applies the relative tolerance and the absolute floor") {
  CHECK(oracle::close(1.0, 1.0 + 1e-7, 1e-6, 1e-12));
  CHECK_FALSE(oracle::close(1.0, 1.0 + 1e-5, 1e-6, 1e-12));
  // Both tiny: the floor absorbs the difference even at huge relative error.
  CHECK(oracle::close(1e-13, -1e-13, 1e-6, 1e-12));
}

TEST_CASE("worst_rel_error is zero for identical vectors and flags a corrupted entry") {
  const std::vector<double> g{0.5, -0.25, 1.5};
  CHECK(oracle::worst_rel_error(g, g).first == 0.0);
  std::vector<double> bad = g;
  bad[1] += 1e-3;
  const auto [err, index] = oracle::worst_rel_error(bad, g);
  CHECK(err > 1e-4);
  CHECK(index == 1);
}

TEST_CASE("naive_gcn identity case reduces to U^T W") {
  // n=2, s=2, C=1: A=I, relu irrelevant on positive values.
  const std::vector<std::vector<double>> a{{1.0, 0.0, 0.0, 1.0}};
  const std::vector<double> u{1.0, 2.0, 3.0, 4.0};  // columns are node signals
  const std::vector<std::vector<double>> w{{1.0, 0.0}};
  const std::vector<double> h = oracle::naive_gcn(a, u, 2, 2, w, 1, false);
  REQUIRE(h.size() == 2);
  CHECK(h[0] == 1.0);
  CHECK(h[1] == 2.0);
}

TEST_CASE("naive_gcn differential flag with A=I yields zero features") {
  const std::vector<std::vector<double>> a{{1.0, 0.0, 0.0, 1.0}};
  const std::vector<double> u{1.0, 2.0, 3.0, 4.0};
  const std::vector<std::vector<double>> w{{0.7, -0.3}};
  const std::vector<double> h = oracle::naive_gcn(a, u, 2, 2, w, 1, false, {true});
  for (double v : h) CHECK(v == 0.0);
}

TEST_CASE("naive_gcn relu clips negatives") {
  const std::vector<std::vector<double>> a{{1.0}};
  const std::vector<double> u{-2.0};
  const std::vector<std::vector<double>> w{{1.0}};
  CHECK(oracle::naive_gcn(a, u, 1, 1, w, 1, false)[0] == -2.0);
  CHECK(oracle::naive_gcn(a, u, 1, 1, w, 1, true)[0] == 0.0);
}

TEST_CASE("naive_gcn rejects an empty operator list") {
  CHECK_THROWS(oracle::naive_gcn({}, {1.0}, 1, 1, {}, 1, false));
}

TEST_CASE("brute-force evaluators refuse sizes beyond test scale") {
  const std::size_t n = 9;
  const std::vector<std::vector<double>> a{std::vector<double>(n * n, 0.0)};
  const std::vector<double> u(n, 0.0);
  const std::vector<std::vector<double>> w{{1.0}};
  CHECK_THROWS_AS(oracle::naive_gcn(a, u, n, 1, w, 1, false), std::invalid_argument);
  CHECK_THROWS_AS(oracle::naive_matrix_power(std::vector<double>(n * n, 0.0), n, 2),
                  std::invalid_argument);

  const std::vector<std::vector<double>> many(9, std::vector<double>(1, 0.0));
  const std::vector<std::vector<double>> many_w(9, std::vector<double>(1, 1.0));
  CHECK_THROWS_AS(oracle::naive_gcn(many, {1.0}, 1, 1, many_w, 1, false), std::invalid_argument);
}

TEST_CASE("naive_matrix_power handles power zero and nilpotent matrices") {
  const std::vector<double> a{0.0, 1.0, 0.0, 0.0};
  const std::vector<double> p0 = oracle::naive_matrix_power(a, 2, 0);
  CHECK(p0 == std::vector<double>{1.0, 0.0, 0.0, 1.0});
  const std::vector<double> p2 = oracle::naive_matrix_power(a, 2, 2);
  for (double v : p2) CHECK(v == 0.0);
}

TEST_CASE("naive_matrix_power squares the path graph correctly") {
  // 0-1-2 chain: (A^2)_02 = 1 via node 1, (A^2)_11 = 2.
  const std::vector<double> a{0, 1, 0, 1, 0, 1, 0, 1, 0};
  const std::vector<double> p2 = oracle::naive_matrix_power(a, 3, 2);
  CHECK(p2[0 * 3 + 2] == 1.0);
  CHECK(p2[1 * 3 + 1] == 2.0);
  CHECK(p2[0 * 3 + 1] == 0.0);
}

TEST_CASE("gamma_bound reproduces the worked K=2 example exactly") {
  const long double got = oracle::gamma_bound(2, 0.01L, 0.01L);
  // Closed form evaluated independently: (1/0.01) ln(2 sqrt(0.98)/(1-sqrt(0.98)) + 1).
  CHECK(std::abs(static_cast<double>(got) - 528.8241522117262) < 1e-9);
  CHECK(static_cast<double>(got) < 530.0);
}

TEST_CASE("component_count and is_acyclic agree with hand-drawn graphs") {
  using Edges = std::vector<std::pair<std::size_t, std::size_t>>;
  CHECK(oracle::component_count(5, Edges{{0, 1}, {1, 2}, {2, 3}, {3, 4}}) == 1);
  CHECK(oracle::component_count(4, Edges{{0, 1}}) == 3);
  CHECK(oracle::is_acyclic(3, Edges{{0, 1}, {1, 2}}));
  CHECK_FALSE(oracle::is_acyclic(3, Edges{{0, 1}, {1, 2}, {0, 2}}));
}

TEST_CASE("adversarial overlap respects the bound and bites below it") {
  for (std::size_t k : {std::size_t{2}, std::size_t{4}}) {
    const double gamma = static_cast<double>(oracle::gamma_bound(k, 0.01L, 0.01L));
    CHECK(oracle::adversarial_overlap(k, 0.01, gamma) <= 0.01);
    CHECK(oracle::adversarial_overlap(k, 0.01, 0.4 * gamma) > 0.01);
  }
}

TEST_CASE("adversarial overlap vanishes in the huge-separation limit") {
  const double gamma = static_cast<double>(oracle::gamma_bound(2, 0.01L, 0.01L));
  CHECK(oracle::adversarial_overlap(2, 1e6, gamma) < 1e-12);
}

TEST_CASE("proposition trials find no violations at the bound (smoke scale)") {
  const oracle::PropositionReport report = oracle::proposition_trials(2, 0.01, 0.01, 200, 99);
  CHECK(report.trials == 200);
  CHECK(report.violations == 0);
  CHECK(report.worst_overlap <= 0.01);
  CHECK(report.gamma == doctest::Approx(528.8241522117262).epsilon(1e-9));
}

}  // TEST_SUITE
