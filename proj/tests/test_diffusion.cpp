#include <cmath>

#include "doctest.h"

#include "actscan/diffusion.hpp"

using namespace actscan;

namespace {

DiscreteDataset two_point_dataset(double q0, double q1) {
  DiscreteDataset ds;
  ds.points = {{0.0}, {1.0}};
  ds.conditions = {"cond"};
  ds.priors = {{q0, q1}};
  return ds;
}

}  // namespace

TEST_CASE("geometric schedule shape and loss weights") {
  auto sched = NoiseSchedule::geometric(0.02, 20.0, 50);
  CHECK(sched.steps() == 50);
  CHECK(sched.sigma(0) == 0.0);
  CHECK(sched.sigma(1) == doctest::Approx(0.02));
  CHECK(sched.sigma(50) == doctest::Approx(20.0));
  for (int t = 1; t < 50; ++t) CHECK(sched.sigma(t + 1) > sched.sigma(t));

  // default weights follow (sigma_{t+1} - sigma_t) / sigma_{t+1}^3
  for (int t = 1; t < 50; ++t) {
    double expect = (sched.sigma(t + 1) - sched.sigma(t)) /
                    std::pow(sched.sigma(t + 1), 3.0);
    CHECK(sched.loss_weight(t) == doctest::Approx(expect).epsilon(1e-12));
  }
  // t = T uses the geometric extension
  double ratio = sched.sigma(2) / sched.sigma(1);
  double s_ext = sched.sigma(50) * ratio;
  CHECK(sched.loss_weight(50) ==
        doctest::Approx((s_ext - sched.sigma(50)) / std::pow(s_ext, 3.0)).epsilon(1e-12));

  CHECK_THROWS_AS(NoiseSchedule::geometric(0.0, 20.0, 50), Error);
  CHECK_THROWS_AS(NoiseSchedule(std::vector<double>{1.0, 0.5}), Error);
  CHECK_NOTHROW(sched.validate_for_data_norm(2.0));
  CHECK_THROWS_AS(sched.validate_for_data_norm(2.1), Error);
}

TEST_CASE("forward noise is x0 + sigma_t * eps") {
  NoiseSchedule sched(std::vector<double>{1.0, 2.0});

  CHECK(forward_noise({0.5}, 1, {0.0}, sched)[0] == 0.5);
  CHECK(forward_noise({0.0}, 2, {1.0}, sched)[0] == 2.0);
  CHECK_THROWS_AS(forward_noise({0.5, 0.5}, 1, {0.0}, sched), DimensionMismatchError);
  CHECK_THROWS_AS(forward_noise({0.5}, 3, {0.0}, sched), IndexOutOfRangeError);

  // Monte Carlo mean concentrates on x0
  NoiseSchedule s2(std::vector<double>{0.7});
  Rng rng(11);
  double acc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) acc += forward_noise({0.3}, 1, {rng.normal()}, s2)[0];
  double mean = acc / n;
  CHECK(std::abs(mean - 0.3) <= 3.0 * 0.7 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("posterior weights: symmetry, degeneracy, brute-force oracle") {
  NoiseSchedule sched(std::vector<double>{0.5});

  auto ds = two_point_dataset(0.5, 0.5);
  auto w = posterior_weights({0.5}, 1, 0, ds, sched);
  CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-12));

  auto degenerate = two_point_dataset(1.0, 0.0);
  for (double x : {-3.0, 0.2, 0.9, 7.0}) {
    auto wd = posterior_weights({x}, 1, 0, degenerate, sched);
    CHECK(wd[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(wd[1] == 0.0);
  }

  // brute-force evaluation of the two exponentials at x_t = 0.25, sigma = 0.5
  {
    auto uniform = two_point_dataset(0.5, 0.5);
    double l0 = std::exp(-(0.25 - 0.0) * (0.25 - 0.0) / (2.0 * 0.25)) * 0.5;
    double l1 = std::exp(-(0.25 - 1.0) * (0.25 - 1.0) / (2.0 * 0.25)) * 0.5;
    auto wo = posterior_weights({0.25}, 1, 0, uniform, sched);
    CHECK(wo[0] == doctest::Approx(l0 / (l0 + l1)).epsilon(1e-12));
    CHECK(wo[1] == doctest::Approx(l1 / (l0 + l1)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(posterior_weights({0.5}, 1, 2, ds, sched), UnknownConditionError);

  // weights sum to one and survive tiny sigma without underflow
  Rng rng(5);
  for (double sigma : {1e-3, 0.05, 1.0, 50.0}) {
    DiscreteDataset r;
    r.points = {{0.1, 0.2}, {0.9, 0.4}, {0.3, 0.8}};
    r.conditions = {"c"};
    r.priors = {{0.2, 0.5, 0.3}};
    std::vector<double> x{rng.uniform() * 2 - 0.5, rng.uniform() * 2 - 0.5};
    auto ws = posterior_weights_sigma(x, sigma, 0, r);
    double sum = ws[0] + ws[1] + ws[2];
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    for (double v : ws) CHECK(v >= 0.0);
  }

  // invariant to scaling all priors by a constant (shifting log-priors)
  {
    DiscreteDataset a = two_point_dataset(0.2, 0.8);
    DiscreteDataset b = two_point_dataset(0.4, 1.6);  // unnormalized on purpose
    auto wa = posterior_weights_sigma({0.3}, 0.7, 0, a);
    auto wb = posterior_weights_sigma({0.3}, 0.7, 0, b);
    CHECK(wa[0] == doctest::Approx(wb[0]).epsilon(1e-14));
    CHECK(wa[1] == doctest::Approx(wb[1]).epsilon(1e-14));
  }
}

TEST_CASE("optimal denoiser is the posterior-weighted mean") {
  NoiseSchedule sched(std::vector<double>{0.5});
  auto uniform = two_point_dataset(0.5, 0.5);

  CHECK(optimal_denoiser({0.5}, 1, 0, uniform, sched)[0] ==
        doctest::Approx(0.5).epsilon(1e-12));

  auto concentrated = two_point_dataset(0.0, 1.0);
  for (double x : {-2.0, 0.1, 5.0}) {
    CHECK(optimal_denoiser({x}, 1, 0, concentrated, sched)[0] ==
          doctest::Approx(1.0).epsilon(1e-12));
  }

  // derived case from the posterior oracle above
  {
    auto w = posterior_weights({0.25}, 1, 0, uniform, sched);
    double expect = w[0] * 0.0 + w[1] * 1.0;
    CHECK(optimal_denoiser({0.25}, 1, 0, uniform, sched)[0] ==
          doctest::Approx(expect).epsilon(1e-14));
  }

  // output stays inside the norm ball of the support (convex combination)
  Rng rng(21);
  DiscreteDataset r;
  r.points = {{0.1, 0.9}, {0.8, 0.2}, {0.5, 0.5}, {1.0, 1.0}};
  r.conditions = {"c"};
  r.priors = {{0.1, 0.4, 0.3, 0.2}};
  double c_norm = r.max_norm();
  for (int i = 0; i < 200; ++i) {
    std::vector<double> x{rng.normal() * 3, rng.normal() * 3};
    double sigma = 0.05 + rng.uniform() * 10;
    auto h = optimal_denoiser_sigma(x, sigma, 0, r);
    CHECK(l2_norm(h) <= c_norm + 1e-12);
  }
}

TEST_CASE("reverse step mean and variance") {
  NoiseSchedule sched(std::vector<double>{1.0, 2.0});

  // sigma_t = 2, sigma_{t-1} = 1, x_t = 4, h = 0 -> (0 + 1*4)/4 = 1
  CHECK(reverse_step_mean({4.0}, 2, {0.0}, sched)[0] == doctest::Approx(1.0));
  CHECK(reverse_step_variance(2, sched) == doctest::Approx(1.0 * 3.0 / 4.0));

  // sigma_0 = 0: final step returns the prediction
  auto mu = reverse_step_mean({4.0}, 1, {0.25}, sched);
  CHECK(mu[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(reverse_step_variance(1, sched) == 0.0);

  // nearly equal adjacent sigmas: the prediction coefficient vanishes
  NoiseSchedule tight(std::vector<double>{2.0, 2.0 * (1.0 + 1e-12)});
  auto mu2 = reverse_step_mean({4.0}, 2, {-100.0}, tight);
  CHECK(mu2[0] == doctest::Approx(4.0).epsilon(1e-9));

  CHECK_THROWS_AS(reverse_step_mean({4.0, 1.0}, 2, {0.0}, sched),
                  DimensionMismatchError);
}

TEST_CASE("sampler converges onto a concentrated prior and is seed-deterministic") {
  auto sched = NoiseSchedule::geometric(0.02, 20.0, 50);
  DiscreteDataset ds;
  ds.points = {{0.3, 0.7}, {0.9, 0.1}};
  ds.conditions = {"c"};
  ds.priors = {{1.0, 0.0}};

  DenoiserFn oracle = [&](const std::vector<double>& x, int t, int c) {
    return optimal_denoiser(x, t, c, ds, sched);
  };
  for (uint64_t seed = 0; seed < 20; ++seed) {
    auto x = sample(0, oracle, sched, seed, 2);
    CHECK(std::abs(x[0] - 0.3) < 1e-6);
    CHECK(std::abs(x[1] - 0.7) < 1e-6);
  }

  auto a = sample(0, oracle, sched, 7, 2);
  auto b = sample(0, oracle, sched, 7, 2);
  CHECK(a == b);

  // uniform two-point support: empirical frequencies near one half
  DiscreteDataset u;
  u.points = {{0.0}, {1.0}};
  u.conditions = {"c"};
  u.priors = {{0.5, 0.5}};
  DenoiserFn ou = [&](const std::vector<double>& x, int t, int c) {
    return optimal_denoiser(x, t, c, u, sched);
  };
  int hits = 0;
  const int n = 1000;
  for (int seed = 0; seed < n; ++seed) {
    auto x = sample(0, ou, sched, 100000 + seed, 1);
    if (nearest_point(u, x) == 1) ++hits;
  }
  double freq = static_cast<double>(hits) / n;
  CHECK(freq == doctest::Approx(0.5).epsilon(0.1));
  CHECK(std::abs(freq - 0.5) <= 0.05);
}
