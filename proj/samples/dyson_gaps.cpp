// Simulate one Dyson path and print how the smallest gap evolves, then
// compare a Monte Carlo estimate of E|X(T)|^2 with its exact value.

#include <algorithm>
#include <cstdio>

#include "ncps/ncps.hpp"

int main() {
  using namespace ncps;
  const auto model = dyson_model(6, 2.0);
  const std::size_t n = 512;

  const auto grid = BrownianGrid::generate(2024, 0, n, model.dimension(), model.horizon);
  const auto path = simulate_path(model, n, Scheme::semi_implicit_em, grid);
  for (std::size_t k = 0; k <= n; k += 64) {
    const auto x = path.row(k);
    double gap = x[1] - x[0];
    for (std::size_t i = 2; i < x.size(); ++i) gap = std::min(gap, x[i] - x[i - 1]);
    std::printf("t = %.3f  min gap = %.6f\n", path.times[k], gap);
  }

  const auto est = estimate_even_moment(model, 1.0, model.horizon, n, 2000, {.seed = 7});
  std::printf("E|X(T)|^2 ~ %.4f +- %.4f (exact %.4f)\n", est.value, est.std_error,
              oracles::exact_second_moment_law(model, model.horizon));
}
