#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mimae/gradcheck.hpp"
#include "mimae/ops.hpp"
#include "mimae/optim.hpp"
#include "mimae/rng.hpp"
#include "mimae/tensor.hpp"

using namespace mimae;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<float> v(size_t(numel(shape)));
  for (float& x : v) x = float(scale * rng.normal());
  return Tensor::from_values(std::move(shape), std::move(v));
}

// keeps relu/leaky inputs away from the kink so central differences are valid
Tensor random_off_kink(Rng& rng, Shape shape) {
  std::vector<float> v(size_t(numel(shape)));
  for (float& x : v) {
    double d = rng.normal();
    if (std::abs(d) < 0.15) d = d < 0 ? d - 0.15 : d + 0.15;
    x = float(d);
  }
  return Tensor::from_values(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("matmul identity and scalar cases") {
  Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  Tensor c = matmul(eye, a);
  for (size_t i = 0; i < 4; ++i) CHECK(c.values()[i] == doctest::Approx(a.values()[i]));

  Tensor s = matmul(Tensor::from_values({1, 1}, {2.0f}), Tensor::from_values({1, 1}, {3.0f}));
  CHECK(s.values()[0] == doctest::Approx(6.0f));
}

TEST_CASE("matmul matches a straight triple-loop oracle") {
  Rng rng(11);
  Tensor a = random_tensor(rng, {5, 7});
  Tensor b = random_tensor(rng, {7, 3});
  Tensor c = matmul(a, b);
  for (int m = 0; m < 5; ++m)
    for (int n = 0; n < 3; ++n) {
      double acc = 0;
      for (int k = 0; k < 7; ++k) acc += double(a.values()[size_t(m * 7 + k)]) * double(b.values()[size_t(k * 3 + n)]);
      CHECK(double(c.values()[size_t(m * 3 + n)]) == doctest::Approx(acc).epsilon(1e-5));
    }
}

TEST_CASE("matmul shape mismatch raises a dimension error") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("matmul gradients vs central differences") {
  Rng rng(42);
  auto rep = grad_check(
      [](const std::vector<Tensor>& p) { return sum_all(square(matmul(p[0], p[1]))); },
      {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})});
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("softmax basics") {
  Tensor s = softmax_last(Tensor::from_values({1, 2}, {0.0f, 0.0f}));
  CHECK(s.values()[0] == doctest::Approx(0.5));
  CHECK(s.values()[1] == doctest::Approx(0.5));

  Tensor big = softmax_last(Tensor::from_values({1, 2}, {1000.0f, 0.0f}));
  CHECK(big.values()[0] == doctest::Approx(1.0));
  CHECK(big.values()[1] == doctest::Approx(0.0));

  Rng rng(3);
  Tensor x = random_tensor(rng, {4, 6});
  Tensor a = softmax_last(x);
  Tensor b = softmax_last(add_scalar(x, 5.0f));
  for (size_t i = 0; i < a.values().size(); ++i)
    CHECK(std::abs(a.values()[i] - b.values()[i]) < 1e-6);

  for (int r = 0; r < 4; ++r) {
    double row = 0;
    for (int c = 0; c < 6; ++c) row += a.values()[size_t(r * 6 + c)];
    CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("layer_norm values") {
  Tensor g = Tensor::from_values({3}, {1, 1, 1});
  Tensor b = Tensor::from_values({3}, {0, 0, 0});
  Tensor flat = layer_norm(Tensor::from_values({1, 3}, {5, 5, 5}), g, b, 1e-6f);
  for (float v : flat.values()) CHECK(std::abs(v) < 1e-4);

  Tensor g2 = Tensor::from_values({2}, {1, 1});
  Tensor b2 = Tensor::from_values({2}, {0, 0});
  Tensor two = layer_norm(Tensor::from_values({1, 2}, {1, 3}), g2, b2, 1e-6f);
  CHECK(two.values()[0] == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(two.values()[1] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("layer_norm gradient vs central differences") {
  Rng rng(17);
  auto rep = grad_check(
      [](const std::vector<Tensor>& p) {
        return mean_all(square(layer_norm(p[0], p[1], p[2], 1e-6f)));
      },
      {random_tensor(rng, {4, 6}), random_tensor(rng, {6}), random_tensor(rng, {6})});
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("activation values") {
  CHECK(gelu(Tensor::scalar(0.0f)).item() == doctest::Approx(0.0));
  CHECK(relu(Tensor::scalar(-2.0f)).item() == doctest::Approx(0.0));
  CHECK(leaky_relu(Tensor::scalar(-2.0f)).item() == doctest::Approx(-0.02));
  CHECK(gelu(Tensor::scalar(10.0f)).item() == doctest::Approx(10.0).epsilon(1e-3));
}

TEST_CASE("every exported differentiable op passes FD checks at 100 random points") {
  Rng rng(20260810);
  struct Case {
    const char* name;
    std::function<Tensor(const std::vector<Tensor>&)> f;
    std::function<std::vector<Tensor>()> point;
  };
  auto r2 = [&rng]() { return random_tensor(rng, {3, 4}); };
  std::vector<Case> cases = {
      {"add", [](const std::vector<Tensor>& p) { return sum_all(square(add(p[0], p[1]))); },
       [&]() { return std::vector<Tensor>{r2(), r2()}; }},
      {"sub", [](const std::vector<Tensor>& p) { return sum_all(square(sub(p[0], p[1]))); },
       [&]() { return std::vector<Tensor>{r2(), r2()}; }},
      {"mul", [](const std::vector<Tensor>& p) { return sum_all(square(mul(p[0], p[1]))); },
       [&]() { return std::vector<Tensor>{r2(), r2()}; }},
      {"divide", [](const std::vector<Tensor>& p) { return sum_all(square(divide(p[0], add_scalar(square(p[1]), 1.0f)))); },
       [&]() { return std::vector<Tensor>{r2(), r2()}; }},
      {"scale_add", [](const std::vector<Tensor>& p) { return mean_all(add_scalar(scale(p[0], 1.7f), 0.3f)); },
       [&]() { return std::vector<Tensor>{r2()}; }},
      {"log", [](const std::vector<Tensor>& p) { return sum_all(log_op(add_scalar(square(p[0]), 0.5f))); },
       [&]() { return std::vector<Tensor>{r2()}; }},
      {"gelu", [](const std::vector<Tensor>& p) { return sum_all(square(gelu(p[0]))); },
       [&]() { return std::vector<Tensor>{r2()}; }},
      {"relu", [](const std::vector<Tensor>& p) { return sum_all(square(relu(p[0]))); },
       [&]() { return std::vector<Tensor>{random_off_kink(rng, {3, 4})}; }},
      {"leaky_relu", [](const std::vector<Tensor>& p) { return sum_all(square(leaky_relu(p[0]))); },
       [&]() { return std::vector<Tensor>{random_off_kink(rng, {3, 4})}; }},
      {"matmul", [](const std::vector<Tensor>& p) { return sum_all(square(matmul(p[0], p[1]))); },
       [&]() { return std::vector<Tensor>{random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})}; }},
      {"bmm_transpose",
       [](const std::vector<Tensor>& p) { return mean_all(square(bmm(p[0], transpose_last(p[1])))); },
       [&]() { return std::vector<Tensor>{random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 3, 4})}; }},
      {"softmax", [](const std::vector<Tensor>& p) { return sum_all(square(softmax_last(p[0]))); },
       [&]() { return std::vector<Tensor>{r2()}; }},
      {"layer_norm",
       [](const std::vector<Tensor>& p) { return mean_all(square(layer_norm(p[0], p[1], p[2], 1e-6f))); },
       [&]() { return std::vector<Tensor>{random_tensor(rng, {3, 5}), random_tensor(rng, {5}), random_tensor(rng, {5})}; }},
      {"normalize_rows", [](const std::vector<Tensor>& p) { return sum_all(square(normalize_rows(p[0]))); },
       [&]() { return std::vector<Tensor>{random_tensor(rng, {4, 5})}; }},
      {"logsumexp", [](const std::vector<Tensor>& p) { return sum_all(logsumexp_rows(p[0])); },
       [&]() { return std::vector<Tensor>{r2()}; }},
      {"row_sum_mean", [](const std::vector<Tensor>& p) { return mean_all(square(row_sum(p[0]))); },
       [&]() { return std::vector<Tensor>{r2()}; }},
      {"reshape_concat",
       [](const std::vector<Tensor>& p) {
         return sum_all(square(concat_rows({reshape(p[0], {4, 3}), p[1]})));
       },
       [&]() { return std::vector<Tensor>{random_tensor(rng, {3, 4}), random_tensor(rng, {2, 3})}; }},
      {"gather_scatter",
       [](const std::vector<Tensor>& p) {
         std::vector<std::vector<int>> idx{{0, 2}, {1, 3}};
         return mean_all(square(scatter_patches(gather_patches(p[0], idx), idx, 4)));
       },
       [&]() { return std::vector<Tensor>{random_tensor(rng, {2, 4, 3})}; }},
      {"heads_tokens",
       [](const std::vector<Tensor>& p) {
         Tensor h = merge_heads(split_heads(p[0], 2), 2);
         Tensor withcls = concat_tokens(broadcast_to_batch(p[1], 2), h);
         return sum_all(square(slice_tokens(withcls, 0, 2)));
       },
       [&]() { return std::vector<Tensor>{random_tensor(rng, {2, 3, 4}), random_tensor(rng, {4})}; }},
      {"add_rowvec", [](const std::vector<Tensor>& p) { return sum_all(square(add_rowvec(p[0], p[1]))); },
       [&]() { return std::vector<Tensor>{random_tensor(rng, {2, 3, 4}), random_tensor(rng, {4})}; }},
  };

  int total_points = 0;
  for (auto& c : cases) {
    double worst = 0;
    for (int i = 0; i < 5; ++i) {
      auto rep = grad_check(c.f, c.point());
      worst = std::max(worst, rep.max_rel_err);
      ++total_points;
    }
    INFO(std::string(c.name));
    CHECK(worst < 1e-3);
  }
  CHECK(total_points >= 100);
}

TEST_CASE("backward basics") {
  Tensor x = Tensor::param({1}, {3.0f});
  Tensor loss = sum_all(square(x));
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0));

  // repeated backward accumulates
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(12.0));

  // unrelated parameter stays at zero
  Tensor p = Tensor::param({2}, {1.0f, 2.0f});
  auto g = p.grad_or_zeros();
  CHECK(g[0] == 0.0f);
  CHECK(g[1] == 0.0f);

  CHECK_THROWS_AS(backward(Tensor::zeros({2})), ContractError);
}

TEST_CASE("non-finite forward values raise a numeric error") {
  Tensor z = Tensor::zeros({2});
  CHECK_THROWS_AS(divide(Tensor::from_values({2}, {1, 1}), z), NumericError);
  CHECK_THROWS_AS(log_op(Tensor::from_values({2}, {0.0f, 1.0f})), NumericError);
}

TEST_CASE("adamw single hand-computed step") {
  Tensor p = Tensor::param({1}, {1.0f});
  AdamW opt({p}, AdamConfig{0.1f, 0.9f, 0.95f, 0.0f, 1e-8f});
  p.materialize_grad();
  p.node()->grad[0] = 1.0f;
  opt.step();

  // hand evaluation of one AdamW step with g=1, t=1
  const double m = 0.1, v = 0.05;
  const double mhat = m / (1 - 0.9), vhat = v / (1 - 0.95);
  const double expect = 1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  CHECK(double(p.values()[0]) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("adamw zero gradient and decay-only behavior") {
  Tensor p = Tensor::param({1}, {1.0f});
  AdamW opt({p}, AdamConfig{0.1f, 0.9f, 0.95f, 0.0f, 1e-8f});
  p.materialize_grad();
  opt.step();
  CHECK(p.values()[0] == doctest::Approx(1.0f));  // identity under zero grad, zero decay

  Tensor q = Tensor::param({1}, {1.0f});
  AdamW opt2({q}, AdamConfig{0.1f, 0.9f, 0.95f, 0.05f, 1e-8f});
  q.materialize_grad();
  opt2.step();
  CHECK(q.values()[0] == doctest::Approx(1.0f * (1.0f - 0.1f * 0.05f)));
}

TEST_CASE("adamw without populated gradient is a contract error") {
  Tensor p = Tensor::param({1}, {1.0f});
  AdamW opt({p}, AdamConfig{});
  CHECK_THROWS_AS(opt.step(), ContractError);
}

TEST_CASE("cosine schedule boundary values") {
  LrSchedule s{1.0f, 10, 100, 0.05f};
  CHECK(cosine_lr(0, s) == doctest::Approx(0.0));
  CHECK(cosine_lr(10, s) == doctest::Approx(1.0));
  CHECK(cosine_lr(100, s) == doctest::Approx(0.05));
  CHECK(cosine_lr(9, s) == doctest::Approx(0.9));
  // monotone decay after warmup, bounded by base_lr
  float prev = 2.0f;
  for (int64_t t = 10; t <= 100; t += 5) {
    const float lr = cosine_lr(t, s);
    CHECK(lr <= 1.0f + 1e-6f);
    CHECK(lr <= prev + 1e-6f);
    CHECK(lr >= 0.05f - 1e-6f);
    prev = lr;
  }
  CHECK_THROWS_AS(cosine_lr(101, s), ContractError);
  CHECK_THROWS_AS(cosine_lr(-1, s), ContractError);
}

TEST_CASE("grad_check against known analytic derivatives") {
  auto square_fn = [](const std::vector<Tensor>& p) { return square(p[0]); };
  auto rep = grad_check(square_fn, {Tensor::from_values({}, {3.0f})}, 1e-3);
  CHECK(rep.max_rel_err < 1e-4);

  auto linear_fn = [](const std::vector<Tensor>& p) { return scale(p[0], 4.0f); };
  auto rep2 = grad_check(linear_fn, {Tensor::from_values({}, {1.25f})}, 1e-2);
  CHECK(rep2.max_rel_err < 1e-5);
}

TEST_CASE("determinism: identical seeds give bit-identical forward and gradients") {
  auto run = [] {
    Rng rng(99);
    Tensor a = Tensor::param({4, 4}, random_tensor(rng, {4, 4}).values());
    Tensor b = Tensor::param({4, 4}, random_tensor(rng, {4, 4}).values());
    Tensor loss = mean_all(square(gelu(matmul(a, b))));
    backward(loss);
    std::vector<float> out = {loss.item()};
    for (float g : a.grad()) out.push_back(g);
    for (float g : b.grad()) out.push_back(g);
    return out;
  };
  auto r1 = run(), r2 = run();
  REQUIRE(r1.size() == r2.size());
  for (size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}
