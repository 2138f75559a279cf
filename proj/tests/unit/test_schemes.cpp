#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "ncps/brownian.hpp"
#include "ncps/oracles.hpp"
#include "ncps/schemes.hpp"
#include "ncps/statistics.hpp"

using namespace ncps;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("Brownian grid generation is reproducible", "[brownian]") {
  const auto a = BrownianGrid::generate(7, 3, 64, 4, 2.0);
  const auto b = BrownianGrid::generate(7, 3, 64, 4, 2.0);
  const auto c = BrownianGrid::generate(7, 4, 64, 4, 2.0);
  const auto e = BrownianGrid::generate(8, 3, 64, 4, 2.0);
  CHECK(std::ranges::equal(a.increments(), b.increments()));
  CHECK_FALSE(std::ranges::equal(a.increments(), c.increments()));
  CHECK_FALSE(std::ranges::equal(a.increments(), e.increments()));
  CHECK(a.steps() == 64);
  CHECK(a.dimension() == 4);
  CHECK(a.step_size() == 2.0 / 64);
  CHECK(a.row(5).size() == 4);
  CHECK(a.row(5)[2] == a.increments()[5 * 4 + 2]);

  CHECK_THROWS_AS(BrownianGrid::generate(1, 0, 0, 2, 1.0), DomainError);
  CHECK_THROWS_AS(BrownianGrid::generate(1, 0, 4, 2, 0.0), DomainError);
  CHECK_THROWS_AS(BrownianGrid::from_increments({1.0, 2.0, 3.0}, 2, 1.0), DomainError);
}

TEST_CASE("Brownian increments have the right variance", "[brownian][property]") {
  // 2^14 steps over T = 3: the sample variance of the increments is
  // h (1 +- 4 sqrt(2 / N)) with overwhelming probability.
  const auto g = BrownianGrid::generate(42, 0, 1 << 14, 2, 3.0);
  Accumulator acc;
  for (double v : g.increments()) acc.add(v);
  const double h = 3.0 / (1 << 14);
  const double n = static_cast<double>(acc.count());
  CHECK(std::abs(acc.mean()) < 4.0 * std::sqrt(h / n));
  CHECK_THAT(acc.variance(), WithinRel(h, 4.0 * std::sqrt(2.0 / n)));

  const auto c = g.coarsen_to(1 << 6);
  Accumulator cacc;
  for (double v : c.increments()) cacc.add(v);
  // Coarsening preserves the Brownian endpoint exactly up to rounding.
  for (std::size_t i = 0; i < 2; ++i) {
    double fine_sum = 0.0, coarse_sum = 0.0;
    for (std::size_t k = 0; k < g.steps(); ++k) fine_sum += g.row(k)[i];
    for (std::size_t k = 0; k < c.steps(); ++k) coarse_sum += c.row(k)[i];
    CHECK_THAT(coarse_sum, WithinAbs(fine_sum, 1e-12));
  }
  CHECK_THAT(cacc.variance(), WithinRel(3.0 / 64.0, 4.0 * std::sqrt(2.0 / 128.0)));
}

TEST_CASE("coarsening sums adjacent pairs and composes", "[brownian]") {
  std::vector<double> inc(16 * 3);
  std::iota(inc.begin(), inc.end(), 1.0);
  const auto g = BrownianGrid::from_increments(inc, 3, 1.0, 5, 9);
  const auto c = g.coarsen();
  REQUIRE(c.steps() == 8);
  CHECK(c.row(0)[0] == inc[0] + inc[3]);
  CHECK(c.row(7)[2] == inc[14 * 3 + 2] + inc[15 * 3 + 2]);
  CHECK(c.seed() == 5);
  CHECK(c.path_index() == 9);
  CHECK(c.horizon() == 1.0);

  // Integer-valued increments, so the sums are exact and order-free.
  CHECK(std::ranges::equal(g.coarsen().coarsen().increments(), g.coarsen_to(4).increments()));
  CHECK(std::ranges::equal(g.coarsen_to(16).increments(), g.increments()));

  const auto odd = BrownianGrid::from_increments(std::vector<double>(6, 1.0), 2, 1.0);
  CHECK_THROWS_AS(odd.coarsen(), DomainError);
  CHECK_THROWS_AS(g.coarsen_to(5), DomainError);
  CHECK_THROWS_AS(BrownianGrid::from_increments(std::vector<double>(12 * 2, 1.0), 2, 1.0).coarsen_to(4), DomainError);
  CHECK(is_power_of_two(1));
  CHECK(is_power_of_two(1024));
  CHECK_FALSE(is_power_of_two(0));
  CHECK_FALSE(is_power_of_two(12));
}

TEST_CASE("deterministic two-particle recursion", "[schemes]") {
  // Zero noise and zero drift reduce the EM step to the gap recursion.
  auto m = dyson_model(2, 1.0, {0.0, 1.0}, 1.0, 1.0);
  const auto grid = BrownianGrid::from_increments(std::vector<double>(20, 0.0), 2, 1.0);
  const auto traj = simulate_path(m, 10, Scheme::semi_implicit_em, grid);
  const double gap = traj.row(10)[1] - traj.row(10)[0];
  CHECK_THAT(gap, WithinAbs(2.20211968751499983957034072281, 1e-13));
  CHECK_THAT(gap, WithinAbs(oracles::deterministic_gap_recursion(1.0, 0.1, 1.0, 10), 1e-13));
  // Symmetric start stays symmetric about the centre of mass.
  CHECK_THAT(traj.row(10)[0] + traj.row(10)[1], WithinAbs(1.0, 1e-13));
  // The recursion tracks the ODE to first order.
  CHECK(std::abs(gap - oracles::ode_gap_solution(1.0, 1.0, 1.0)) < 0.05);
}

TEST_CASE("Milstein explicit part", "[schemes]") {
  ModelSpec m = dyson_model(2, 1.0, {0.0, 1.0});
  m.diffusion.assign(2, ScalarFunction::sine(2.0, 1.0));
  m.with_analytic_derivatives();
  const std::vector<double> x{0.0, 1.0}, dB{0.1, -0.2};
  std::vector<double> y(2);
  Stepper mil(m, Scheme::semi_implicit_milstein);
  mil.explicit_part(x, dB, 0.01, y);
  // Frozen high-precision values; the first correction vanishes since dB^2 = h.
  CHECK_THAT(y[0], WithinAbs(0.2, 1e-15));
  CHECK_THAT(y[1], WithinAbs(0.454734602915657502906997782892, 1e-14));

  Stepper em(m, Scheme::semi_implicit_em);
  std::vector<double> ye(2);
  em.explicit_part(x, dB, 0.01, ye);
  const double s1 = 2.0 + std::sin(1.0);
  CHECK_THAT(ye[1], WithinAbs(1.0 - 0.2 * s1, 1e-15));
}

TEST_CASE("Milstein equals EM bit for bit under additive noise", "[schemes][property]") {
  const auto m = dyson_model(4, 2.0, {}, 1.0, 0.7);
  for (std::uint64_t p = 0; p < 20; ++p) {
    const auto grid = BrownianGrid::generate(3, p, 128, 4, 1.0);
    const auto a = simulate_path(m, 128, Scheme::semi_implicit_em, grid);
    const auto b = simulate_path(m, 128, Scheme::semi_implicit_milstein, grid);
    REQUIRE(a.states == b.states);
  }
}

TEST_CASE("Milstein needs sigma prime", "[schemes]") {
  ModelSpec m = dyson_model(2, 1.0);
  m.diffusion_derivative.reset();
  CHECK_THROWS_AS(Stepper(m, Scheme::semi_implicit_milstein), DomainError);
  CHECK_NOTHROW(Stepper(m, Scheme::semi_implicit_em));
}

TEST_CASE("single-step API", "[schemes]") {
  const auto m = dyson_model(3, 1.0);
  const ParticleState s0{0.0, {0.0, 1.0, 2.0}};
  const std::vector<double> dB{0.05, -0.1, 0.02};
  const auto s1 = step_semi_implicit_em(s0, dB, 0.01, m);
  CHECK(s1.t == 0.01);
  REQUIRE(is_strictly_increasing(s1.x));
  // Residual of the defining equation.
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) if (j != i) s += 1.0 / (s1.x[i] - s1.x[j]);
    CHECK_THAT(s1.x[i] - 0.01 * s, WithinAbs(s0.x[i] + dB[i], 1e-13));
  }
  const auto s2 = step_semi_implicit_milstein(s0, dB, 0.01, m);
  CHECK(s2.x == s1.x);

  const ParticleState outside{0.0, {1.0, 0.0, 2.0}};
  CHECK_THROWS_AS(step_semi_implicit_em(outside, dB, 0.01, m), DomainError);
  CHECK_THROWS_AS(step_semi_implicit_em(s0, dB, 0.0, m), DomainError);
  const std::vector<double> short_dB{0.0, 0.0};
  CHECK_THROWS_AS(step_semi_implicit_em(s0, short_dB, 0.01, m), DomainError);
}

TEST_CASE("implicit step commutes with translation and reflection", "[schemes][property]") {
  // x(y + c) = x(y) + c, and reversing and negating y does the same to x.
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n01;
  for (int k = 0; k < 200; ++k) {
    std::vector<double> y(5);
    for (auto& v : y) v = n01(rng);
    std::vector<double> shifted(y), reflected(y.rbegin(), y.rend());
    for (auto& v : shifted) v += 3.25;
    for (auto& v : reflected) v = -v;
    const auto a = solve_implicit({y, 0.05});
    const auto b = solve_implicit({shifted, 0.05});
    const auto c = solve_implicit({reflected, 0.05});
    for (std::size_t i = 0; i < 5; ++i) {
      // Each solve is accurate to its stopping tolerance, 1e-12 * max(1, |y|).
      REQUIRE_THAT(b[i], WithinAbs(a[i] + 3.25, 2e-11));
      REQUIRE_THAT(c[i], WithinAbs(-a[4 - i], 2e-11));
    }
  }
}

TEST_CASE("paths stay in the chamber and are reproducible", "[schemes][property]") {
  CatalogParams p = catalog_defaults("bounded-smooth");
  p.d = 6;
  p.lambda = 4.0;
  p.horizon = 2.0;
  const auto m = make_model(p);
  for (std::uint64_t path = 0; path < 10; ++path) {
    const auto grid = BrownianGrid::generate(99, path, 256, 6, 2.0);
    for (Scheme s : {Scheme::semi_implicit_em, Scheme::semi_implicit_milstein}) {
      const auto t1 = simulate_path(m, 256, s, grid);
      const auto t2 = simulate_path(m, 256, s, grid);
      REQUIRE(t1.states == t2.states);
      REQUIRE(t1.nodes() == 257);
      REQUIRE(t1.times.back() == 2.0);
      for (std::size_t k = 0; k < t1.nodes(); ++k) REQUIRE(is_strictly_increasing(t1.row(k)));
    }
  }
}

TEST_CASE("strong interaction from a tight start", "[schemes]") {
  const auto m = dyson_model(8, 50.0, {0.0, 1e-6, 2e-6, 3e-6, 4e-6, 5e-6, 6e-6, 7e-6});
  const auto grid = BrownianGrid::generate(1, 0, 64, 8, 1.0);
  const auto t = simulate_path(m, 64, Scheme::semi_implicit_em, grid);
  for (std::size_t k = 0; k < t.nodes(); ++k) REQUIRE(is_strictly_increasing(t.row(k)));
}

TEST_CASE("trajectory CSV layout", "[schemes]") {
  const auto m = dyson_model(2, 1.0);
  const auto grid = BrownianGrid::generate(1, 0, 4, 2, 1.0);
  const auto t = simulate_path(m, 4, Scheme::semi_implicit_em, grid);
  std::ostringstream os;
  t.write_csv(os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "t,x1,x2");
  std::getline(is, line);
  CHECK(line == "0,0,1");
  std::size_t rows = 1;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 5);
  // Values round-trip through 17 significant digits.
  std::istringstream last(os.str().substr(os.str().rfind("\n1,") + 3));
  double x1 = 0.0;
  last >> x1;
  CHECK(x1 == t.row(4)[0]);
}

TEST_CASE("grid and model must agree", "[schemes]") {
  const auto m = dyson_model(2, 1.0);
  CHECK_THROWS_AS(simulate_path(m, 8, Scheme::semi_implicit_em, BrownianGrid::generate(1, 0, 4, 2, 1.0)), DomainError);
  CHECK_THROWS_AS(simulate_path(m, 4, Scheme::semi_implicit_em, BrownianGrid::generate(1, 0, 4, 3, 1.0)), DomainError);
  CHECK_THROWS_AS(simulate_path(m, 4, Scheme::semi_implicit_em, BrownianGrid::generate(1, 0, 4, 2, 2.0)), DomainError);
  CHECK(parse_scheme("semi-implicit-milstein") == Scheme::semi_implicit_milstein);
  CHECK(scheme_name(Scheme::semi_implicit_em) == "semi-implicit-em");
  CHECK_THROWS_AS(parse_scheme("euler"), ConfigError);
}

TEST_CASE("solver failure reports the step", "[schemes]") {
  const auto m = dyson_model(2, 1.0);
  std::vector<double> inc(8, 0.0);
  inc[5] = std::nan("");
  const auto grid = BrownianGrid::from_increments(inc, 2, 1.0);
  try {
    simulate_path(m, 4, Scheme::semi_implicit_em, grid);
    FAIL("expected StepFailure");
  } catch (const StepFailure& e) {
    CHECK(e.step() == 2);
  }
}
