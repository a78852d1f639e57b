#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mimae/miverify.hpp"

using namespace mimae;

namespace {

double sample_corr(const SamplePair& s) {
  double sx = 0, sz = 0, sxx = 0, szz = 0, sxz = 0;
  const size_t n = s.x.size();
  for (size_t i = 0; i < n; ++i) {
    sx += s.x[i];
    sz += s.z[i];
    sxx += double(s.x[i]) * s.x[i];
    szz += double(s.z[i]) * s.z[i];
    sxz += double(s.x[i]) * s.z[i];
  }
  const double mx = sx / double(n), mz = sz / double(n);
  const double vx = sxx / double(n) - mx * mx, vz = szz / double(n) - mz * mz;
  return (sxz / double(n) - mx * mz) / std::sqrt(vx * vz);
}

// true conditional of the generator: z | x ~ N(rho*x, 1-rho^2)
void analytic_posterior(const SamplePair& s, double rho, std::vector<float>& mu,
                        std::vector<float>& sigma) {
  mu.resize(s.x.size());
  sigma.assign(s.x.size(), float(std::sqrt(1.0 - rho * rho)));
  for (size_t i = 0; i < s.x.size(); ++i) mu[i] = float(rho * double(s.x[i]));
}

MiBenchOptions quick_options() {
  MiBenchOptions o;
  o.batch = 64;
  o.club_epochs = 60;
  o.nce_epochs = 10;
  o.hidden = 32;
  o.train_seed = 21;
  return o;
}

}  // namespace

TEST_CASE("gen_correlated_gaussian statistics") {
  GaussianPairSpec s0{1, 0.0f, 10000, 3};
  SamplePair p0 = gen_correlated_gaussian(s0);
  CHECK(std::abs(sample_corr(p0)) < 0.05);

  GaussianPairSpec s9{1, 0.9f, 10000, 4};
  SamplePair p9 = gen_correlated_gaussian(s9);
  CHECK(sample_corr(p9) == doctest::Approx(0.9).epsilon(0.022));

  // construction preserves unit marginal variance of z
  double sz = 0, szz = 0;
  for (float z : p9.z) {
    sz += z;
    szz += double(z) * z;
  }
  const double var = szz / double(p9.z.size()) - (sz / double(p9.z.size())) * (sz / double(p9.z.size()));
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));

  CHECK_THROWS_AS(gen_correlated_gaussian(GaussianPairSpec{1, 1.0f, 1000, 1}), ContractError);
  CHECK_THROWS_AS(gen_correlated_gaussian(GaussianPairSpec{1, 0.5f, 50, 1}), ContractError);
}

TEST_CASE("true_gaussian_mi closed-form values") {
  CHECK(true_gaussian_mi(0.0, 1) == doctest::Approx(0.0));
  CHECK(true_gaussian_mi(0.5, 1) == doctest::Approx(0.143841).epsilon(1e-4));
  CHECK(true_gaussian_mi(0.9, 1) == doctest::Approx(0.830366).epsilon(1e-4));
  CHECK(true_gaussian_mi(0.5, 3) == doctest::Approx(3 * 0.143841).epsilon(1e-4));
  CHECK_THROWS_AS(true_gaussian_mi(1.0, 1), ContractError);
}

TEST_CASE("club_value with the exact conditional: zero at independence, upper bound otherwise") {
  // at rho = 0 the CLUB bound is tight: expect 0 within Monte-Carlo error 3/sqrt(n)
  GaussianPairSpec s0{1, 0.0f, 10000, 11};
  SamplePair p0 = gen_correlated_gaussian(s0);
  std::vector<float> mu, sigma;
  analytic_posterior(p0, 0.0, mu, sigma);
  CHECK(std::abs(club_value(p0, mu, sigma)) < 3.0 / std::sqrt(10000.0));

  // at rho = 0.5 the exact-conditional CLUB sits at rho^2/(1-rho^2), above the MI
  GaussianPairSpec s5{1, 0.5f, 10000, 12};
  SamplePair p5 = gen_correlated_gaussian(s5);
  analytic_posterior(p5, 0.5, mu, sigma);
  const double v = club_value(p5, mu, sigma);
  CHECK(v == doctest::Approx(0.25 / 0.75).epsilon(0.15));
  CHECK(v >= true_gaussian_mi(0.5, 1));
}

TEST_CASE("club_value is invariant under sample permutation") {
  GaussianPairSpec s{1, 0.6f, 500, 13};
  SamplePair p = gen_correlated_gaussian(s);
  std::vector<float> mu, sigma;
  analytic_posterior(p, 0.6, mu, sigma);
  const double base = club_value(p, mu, sigma);

  SamplePair rev = p;
  std::vector<float> mu_r(mu.rbegin(), mu.rend()), sg_r(sigma.rbegin(), sigma.rend());
  std::reverse(rev.x.begin(), rev.x.end());
  std::reverse(rev.z.begin(), rev.z.end());
  CHECK(club_value(rev, mu_r, sg_r) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("infonce_estimate never exceeds log(batch)") {
  GaussianPairSpec s{1, 0.9f, 2000, 14};
  SamplePair p = gen_correlated_gaussian(s);
  MiBenchOptions o = quick_options();
  const double est = infonce_estimate(p, o);
  CHECK(est <= std::log(double(o.batch)) + 1e-9);
}

TEST_CASE("estimates are deterministic given the seeds") {
  GaussianPairSpec s{1, 0.5f, 1000, 15};
  SamplePair p = gen_correlated_gaussian(s);
  MiBenchOptions o = quick_options();
  o.club_epochs = 20;
  o.nce_epochs = 4;
  CHECK(club_estimate(p, o).value == club_estimate(p, o).value);
  CHECK(infonce_estimate(p, o) == infonce_estimate(p, o));
}

TEST_CASE("quick sandwich smoke at rho = 0.5") {
  MiBenchOptions o = quick_options();
  SandwichReport r = sandwich_report({0.5f}, 1, 4000, 99, o);
  REQUIRE(r.rows.size() == 1);
  const double mi = true_gaussian_mi(0.5, 1);
  CHECK(r.rows[0].true_mi == doctest::Approx(mi).epsilon(1e-6));
  CHECK(r.rows[0].club >= mi - o.delta);
  CHECK(r.rows[0].infonce <= mi + o.delta);
  CHECK(r.all_pass());
  // report row count matches the requested correlation count
  SandwichReport r3 = sandwich_report({0.0f, 0.3f}, 1, 1000, 99, o);
  CHECK(r3.rows.size() == 2);
}

TEST_CASE("sandwich_csv layout") {
  MiBenchOptions o = quick_options();
  o.club_epochs = 5;
  o.nce_epochs = 2;
  SandwichReport r = sandwich_report({0.3f}, 1, 500, 7, o);
  const std::string csv = sandwich_csv(r);
  CHECK(csv.rfind("rho,dim,true_mi,club,infonce,pass_club,pass_infonce\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}
