#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mimae/masking.hpp"
#include "mimae/model.hpp"
#include "mimae/objectives.hpp"
#include "mimae/ops.hpp"
#include "mimae/rng.hpp"
#include "test_util.hpp"

using namespace mimae;

namespace {

// independent double-precision diagonal-Gaussian log density for oracles
double ref_log_prob(const std::vector<double>& z, const std::vector<double>& mu,
                    const std::vector<double>& sigma) {
  double acc = 0;
  for (size_t i = 0; i < z.size(); ++i) {
    const double d = z[i] - mu[i];
    acc += d * d / (sigma[i] * sigma[i]) + 2.0 * std::log(sigma[i]) + std::log(2.0 * M_PI);
  }
  return -0.5 * acc;
}

Tensor rnd(Rng& rng, Shape s, double scale = 1.0) {
  std::vector<float> v(size_t(numel(s)));
  for (float& x : v) x = float(scale * rng.normal());
  return Tensor::from_values(std::move(s), std::move(v));
}

}  // namespace

TEST_CASE("rec_loss basics") {
  Rng rng(1);
  Tensor target = rnd(rng, {2, 4, 6});
  std::vector<std::vector<int>> masked{{1, 3}, {0, 2}};

  CHECK(rec_loss(target, target, masked).item() == doctest::Approx(0.0));

  // +1 on every masked pixel -> exactly 1 under mean normalization
  std::vector<float> pv = target.values();
  for (int b = 0; b < 2; ++b)
    for (int p : masked[size_t(b)])
      for (int d = 0; d < 6; ++d) pv[size_t((b * 4 + p) * 6 + d)] += 1.0f;
  CHECK(rec_loss(Tensor::from_values({2, 4, 6}, pv), target, masked).item() == doctest::Approx(1.0));

  // errors only on visible patches never count
  std::vector<float> vv = target.values();
  for (int b = 0; b < 2; ++b)
    for (int p = 0; p < 4; ++p) {
      bool is_masked = false;
      for (int m : masked[size_t(b)]) is_masked = is_masked || m == p;
      if (!is_masked)
        for (int d = 0; d < 6; ++d) vv[size_t((b * 4 + p) * 6 + d)] += 5.0f;
    }
  CHECK(rec_loss(Tensor::from_values({2, 4, 6}, vv), target, masked).item() == doctest::Approx(0.0));

  CHECK_THROWS_AS(rec_loss(target, target, std::vector<std::vector<int>>{{1}, {}}), ContractError);
}

TEST_CASE("rec_loss single-mask overload matches the per-image form") {
  Rng rng(2);
  Tensor pred = rnd(rng, {3, 4, 5});
  Tensor target = rnd(rng, {3, 4, 5});
  std::vector<uint8_t> mask{1, 0, 1, 0};
  std::vector<std::vector<int>> idx(3, std::vector<int>{0, 2});
  CHECK(rec_loss(pred, target, mask).item() == doctest::Approx(rec_loss(pred, target, idx).item()));
}

TEST_CASE("info_nce_pair: orthogonal positive with one orthogonal negative") {
  // z_i = z_k = e1, negative = e2, tau = 0.07
  Tensor latents = Tensor::from_values({3, 2}, {1, 0, 1, 0, 0, 1});
  const double expect = std::log(1.0 + std::exp(-1.0 / 0.07));
  // the f32 logit scale (1/tau ~ 14.3) leaves ~1e-6 absolute resolution
  CHECK(std::abs(double(info_nce_pair(latents, 0, 1, 0.07f).item()) - expect) < 2e-6);
}

TEST_CASE("info_nce_pair: identical latents and scale invariance") {
  const int NB = 5;
  std::vector<float> same;
  for (int i = 0; i < NB; ++i) {
    same.push_back(0.6f);
    same.push_back(0.8f);
  }
  Tensor latents = Tensor::from_values({NB, 2}, same);
  CHECK(double(info_nce_pair(latents, 0, 3, 0.07f).item()) ==
        doctest::Approx(std::log(double(NB - 1))).epsilon(1e-4));

  Rng rng(3);
  Tensor lat = rnd(rng, {4, 8});
  const float base = info_nce_pair(lat, 1, 2, 0.07f).item();
  std::vector<float> scaled = lat.values();
  for (int d = 0; d < 8; ++d) scaled[size_t(1 * 8 + d)] *= 7.5f;  // rescale one latent
  const float after = info_nce_pair(Tensor::from_values({4, 8}, scaled), 1, 2, 0.07f).item();
  CHECK(after == doctest::Approx(base).epsilon(1e-4));
}

TEST_CASE("info_nce_pair contracts") {
  Tensor lat = Tensor::from_values({2, 2}, {1, 0, 0, 0});
  CHECK_THROWS_AS(info_nce_pair(lat, 0, 1, 0.07f), ContractError);  // zero-norm row
  Tensor ok = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  CHECK_THROWS_AS(info_nce_pair(ok, 1, 1, 0.07f), ContractError);
  CHECK_THROWS_AS(info_nce_pair(ok, 0, 2, 0.07f), ContractError);
  CHECK_THROWS_AS(info_nce_pair(ok, 0, 1, 0.0f), ContractError);
}

TEST_CASE("info_nce_pair is nonnegative on random batches") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor lat = rnd(rng, {6, 4});
    const int i = int(rng.bounded(6));
    int k = int(rng.bounded(6));
    if (k == i) k = (k + 1) % 6;
    CHECK(info_nce_pair(lat, i, k, 0.07f).item() >= -1e-6f);
  }
}

TEST_CASE("max_mi_loss: N=2 expansion matches pairwise sum") {
  Rng rng(5);
  Tensor z0 = rnd(rng, {1, 6});
  Tensor z1 = rnd(rng, {1, 6});
  const double loss = double(max_mi_loss({z0, z1}, 0.07f).item());
  Tensor all = concat_rows({z0, z1});
  const double l01 = double(info_nce_pair(all, 0, 1, 0.07f).item());
  const double l10 = double(info_nce_pair(all, 1, 0, 0.07f).item());
  CHECK(loss == doctest::Approx((l01 + l10) / 4.0).epsilon(1e-4));
}

TEST_CASE("max_mi_loss: identical latents give (N(N-1)/N^2) log(NB-1)") {
  const int N = 4, B = 3;
  std::vector<Tensor> latents;
  std::vector<float> row(size_t(B) * 8, 0.5f);
  for (int j = 0; j < N; ++j) latents.push_back(Tensor::from_values({B, 8}, row));
  const double expect = (double(N) * (N - 1) / double(N * N)) * std::log(double(N * B - 1));
  CHECK(double(max_mi_loss(latents, 0.07f).item()) == doctest::Approx(expect).epsilon(1e-3));
}

TEST_CASE("max_mi_loss is invariant under image and mask permutations") {
  Rng rng(6);
  const int N = 3, B = 4, L = 8;
  std::vector<Tensor> latents;
  for (int j = 0; j < N; ++j) latents.push_back(rnd(rng, {B, L}));
  const double base = double(max_mi_loss(latents, 0.07f).item());

  // permute masks
  std::vector<Tensor> mperm = {latents[2], latents[0], latents[1]};
  CHECK(double(max_mi_loss(mperm, 0.07f).item()) == doctest::Approx(base).epsilon(1e-4));

  // permute images consistently in every mask tensor
  const int perm[4] = {3, 0, 2, 1};
  std::vector<Tensor> iperm;
  for (int j = 0; j < N; ++j) {
    std::vector<float> v(size_t(B) * L);
    for (int b = 0; b < B; ++b)
      std::copy(latents[size_t(j)].values().begin() + int64_t(perm[b]) * L,
                latents[size_t(j)].values().begin() + int64_t(perm[b] + 1) * L,
                v.begin() + int64_t(b) * L);
    iperm.push_back(Tensor::from_values({B, L}, v));
  }
  CHECK(double(max_mi_loss(iperm, 0.07f).item()) == doctest::Approx(base).epsilon(1e-4));

  CHECK_THROWS_AS(max_mi_loss({latents[0]}, 0.07f), ContractError);
}

TEST_CASE("approx_loss value and stop-gradient contract") {
  Rng rng(7);
  Tensor z = rnd(rng, {3, 1});
  GaussianPosterior post{Tensor::param({3, 1}, z.values()), Tensor::full({3, 1}, 1.0f)};
  const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
  Tensor loss = approx_loss({post}, {z}, 1e-4f);
  CHECK(double(loss.item()) == doctest::Approx(half_log_2pi).epsilon(1e-5));

  // latents that still carry gradient violate the contract
  Tensor live = Tensor::param({3, 1}, z.values());
  CHECK_THROWS_AS(approx_loss({post}, {live}, 1e-4f), ContractError);

  // moving mu toward z monotonically lowers the loss
  double prev = 1e300;
  for (float delta : {2.0f, 1.0f, 0.5f, 0.1f}) {
    std::vector<float> mu(z.values());
    for (float& m : mu) m += delta;
    GaussianPosterior p{Tensor::from_values({3, 1}, mu), Tensor::full({3, 1}, 1.0f)};
    const double v = double(approx_loss({p}, {z}, 1e-4f).item());
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("approx_loss routes gradient only into the approximation net") {
  ModelConfig mc;
  mc.image_size = 16;
  mc.patch_size = 8;
  mc.embed_dim = 16;
  mc.encoder_depth = 1;
  mc.decoder_dim = 8;
  mc.decoder_depth = 1;
  mc.num_heads = 2;
  mc.latent_dim = 16;
  mc.approx_hidden_dim = 8;
  MaeModel model(mc, 41);
  ApproxNet net(mc.input_dim(), 8, 16, 1e-4f, 42);
  Rng rng(43);
  std::vector<float> iv(size_t(2) * 16 * 16);
  for (float& x : iv) x = float(rng.normal());
  Tensor imgs = Tensor::from_values({2, 1, 16, 16}, iv);
  std::vector<std::vector<int>> vis{{0, 2}, {1, 3}};

  LatentBatch lat = model.encode(gather_patches(model.patch_embed(imgs), vis), 0);
  GaussianPosterior post = net.forward(Tensor::from_values({2, mc.input_dim()},
                                                           patchify(imgs, mc).values()));
  Tensor loss = approx_loss({post}, {lat.z_vec.detach()}, 1e-4f);
  backward(loss);

  for (const Tensor& p : model.params()) CHECK(testutil::max_abs(p.grad_or_zeros()) == 0.0);
  bool any = false;
  for (const Tensor& p : net.params()) any = any || testutil::max_abs(p.grad_or_zeros()) > 0.0;
  CHECK(any);
}

TEST_CASE("min_mi_loss: self-cancellation and coincident latents") {
  Rng rng(8);
  Tensor z = rnd(rng, {2, 3});
  GaussianPosterior post{rnd(rng, {2, 3}), Tensor::full({2, 3}, 0.8f)};
  // N = 1: l_j = log q(z|x) - log q(z|x) = 0 exactly
  CHECK(min_mi_loss({post}, {z}, 1e-4f).item() == 0.0f);

  // identical latents across masks cancel for any posterior
  GaussianPosterior q1{rnd(rng, {2, 3}), Tensor::full({2, 3}, 1.3f)};
  GaussianPosterior q2{rnd(rng, {2, 3}), Tensor::full({2, 3}, 0.4f)};
  CHECK(std::abs(min_mi_loss({q1, q2}, {z, z}, 1e-4f).item()) < 1e-6f);
}

TEST_CASE("min_mi_loss: N=2 matches a hand evaluation of the estimator") {
  const std::vector<double> mu1{0.2, -0.5}, mu2{-1.0, 0.3};
  const std::vector<double> sg1{0.7, 1.2}, sg2{1.1, 0.9};
  const std::vector<double> z1{0.5, 0.1}, z2{-0.4, 0.8};

  auto to_f = [](const std::vector<double>& v) {
    std::vector<float> f;
    for (double x : v) f.push_back(float(x));
    return f;
  };
  GaussianPosterior q1{Tensor::from_values({1, 2}, to_f(mu1)), Tensor::from_values({1, 2}, to_f(sg1))};
  GaussianPosterior q2{Tensor::from_values({1, 2}, to_f(mu2)), Tensor::from_values({1, 2}, to_f(sg2))};
  Tensor t1 = Tensor::from_values({1, 2}, to_f(z1));
  Tensor t2 = Tensor::from_values({1, 2}, to_f(z2));

  const double l1 = ref_log_prob(z1, mu1, sg1) - 0.5 * (ref_log_prob(z1, mu1, sg1) + ref_log_prob(z2, mu1, sg1));
  const double l2 = ref_log_prob(z2, mu2, sg2) - 0.5 * (ref_log_prob(z1, mu2, sg2) + ref_log_prob(z2, mu2, sg2));
  const double expect = 0.5 * (l1 + l2);
  CHECK(double(min_mi_loss({q1, q2}, {t1, t2}, 1e-4f).item()) == doctest::Approx(expect).epsilon(1e-4));
}

TEST_CASE("min_mi_loss: theta-constant contract and routing") {
  Rng rng(9);
  Tensor mu = Tensor::param({2, 3}, rnd(rng, {2, 3}).values());
  GaussianPosterior live{mu, Tensor::full({2, 3}, 1.0f)};
  Tensor z = rnd(rng, {2, 3});
  CHECK_THROWS_AS(min_mi_loss({live}, {z}, 1e-4f), ContractError);

  // with detached posteriors the gradient flows into the latents only
  Tensor z_live = Tensor::param({2, 3}, rnd(rng, {2, 3}).values());
  Tensor z2_live = Tensor::param({2, 3}, rnd(rng, {2, 3}).values());
  GaussianPosterior qa{rnd(rng, {2, 3}), Tensor::full({2, 3}, 0.9f)};
  GaussianPosterior qb{rnd(rng, {2, 3}), Tensor::full({2, 3}, 1.1f)};
  Tensor loss = min_mi_loss({qa, qb}, {z_live, z2_live}, 1e-4f);
  backward(loss);
  CHECK(testutil::max_abs(z_live.grad_or_zeros()) > 0.0);
  CHECK(testutil::max_abs(z2_live.grad_or_zeros()) > 0.0);
}

TEST_CASE("combined_loss gating arithmetic") {
  LossWeights w;  // defaults: 1, 1, 10, tau 0.07, eps 0.5
  LossReport closed = combined_loss(0.7f, 0.9f, 0.05f, 1.2f, w, false);
  CHECK(closed.total == doctest::Approx(0.7));
  CHECK(!closed.gate_open);

  LossReport open = combined_loss(0.4f, 0.2f, 0.01f, 1.2f, w, true);
  CHECK(open.total == doctest::Approx(0.4 + 0.2 + 0.1));
  CHECK(open.approx == doctest::Approx(1.2));  // reported, never in the total

  LossWeights plain = w;
  plain.lambda2 = 0.0f;
  plain.lambda3 = 0.0f;
  CHECK(combined_loss(0.4f, 0.2f, 0.01f, 1.2f, plain, true).total == doctest::Approx(0.4));

  CHECK_THROWS_AS(combined_loss(std::nanf(""), 0.0f, 0.0f, 0.0f, w, true), ContractError);
}

TEST_CASE("max_mi and min_mi losses pass finite-difference checks through the encoder") {
  ModelConfig mc;
  mc.image_size = 16;
  mc.patch_size = 8;
  mc.embed_dim = 16;
  mc.encoder_depth = 1;
  mc.decoder_dim = 8;
  mc.decoder_depth = 1;
  mc.num_heads = 2;
  mc.latent_dim = 16;
  mc.approx_hidden_dim = 8;
  MaeModel model(mc, 51);
  ApproxNet net(mc.input_dim(), 8, 16, 1e-4f, 52);
  Rng rng(53);
  std::vector<float> iv(size_t(2) * 16 * 16);
  for (float& x : iv) x = float(rng.normal());
  Tensor imgs = Tensor::from_values({2, 1, 16, 16}, iv);
  std::vector<std::vector<int>> vis0{{0, 2}, {1, 3}};
  std::vector<std::vector<int>> vis1{{1, 3}, {0, 2}};
  Tensor x_flat = Tensor::from_values({2, mc.input_dim()}, patchify(imgs, mc).values());

  auto encoder_params = model.encoder_params();
  auto fwd_max = [&]() {
    Tensor tok = model.patch_embed(imgs);
    LatentBatch l0 = model.encode(gather_patches(tok, vis0), 0);
    LatentBatch l1 = model.encode(gather_patches(tok, vis1), 1);
    return max_mi_loss({l0.z_vec, l1.z_vec}, 0.07f);
  };
  auto out_max = testutil::fd_check_params(fwd_max, encoder_params, 1e-2, 5);
  CHECK(out_max.max_rel_err < 1e-3);

  auto fwd_min = [&]() {
    Tensor tok = model.patch_embed(imgs);
    LatentBatch l0 = model.encode(gather_patches(tok, vis0), 0);
    LatentBatch l1 = model.encode(gather_patches(tok, vis1), 1);
    GaussianPosterior q0 = net.forward(x_flat);
    GaussianPosterior q1 = net.forward(x_flat);
    std::vector<GaussianPosterior> detached{{q0.mu.detach(), q0.sigma.detach()},
                                            {q1.mu.detach(), q1.sigma.detach()}};
    return min_mi_loss(detached, {l0.z_vec, l1.z_vec}, mc.sigma_floor);
  };
  auto out_min = testutil::fd_check_params(fwd_min, encoder_params, 1e-2, 5);
  CHECK(out_min.max_rel_err < 1e-3);
}
