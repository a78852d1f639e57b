#include "mimae/miverify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mimae/ops.hpp"
#include "mimae/optim.hpp"
#include "mimae/rng.hpp"

namespace mimae {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr int kClubBatch = 256;
constexpr int kProjDim = 16;

Tensor rows_tensor(const std::vector<float>& data, const std::vector<int>& idx, int dim) {
  std::vector<float> out(idx.size() * size_t(dim));
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy(data.begin() + int64_t(idx[r]) * dim, data.begin() + int64_t(idx[r] + 1) * dim,
              out.begin() + int64_t(r) * dim);
  return Tensor::from_values({int(idx.size()), dim}, std::move(out));
}

// two-layer projection head for the InfoNCE critic
struct Projector {
  Linear fc1, fc2;

  Projector(int in, int hidden, int out, Rng& rng) {
    auto make = [&rng](int fi, int fo) {
      const double limit = std::sqrt(6.0 / double(fi + fo));
      std::vector<float> w(size_t(fi) * size_t(fo));
      for (float& x : w) x = float(rng.uniform(-limit, limit));
      Linear l;
      l.w = Tensor::param({fi, fo}, std::move(w));
      l.b = Tensor::param({fo}, std::vector<float>(size_t(fo), 0.0f));
      return l;
    };
    fc1 = make(in, hidden);
    fc2 = make(hidden, out);
  }

  Tensor apply(const Tensor& x) const { return fc2.apply(gelu(fc1.apply(x))); }
  std::vector<Tensor> params() const { return {fc1.w, fc1.b, fc2.w, fc2.b}; }
};

}  // namespace

void GaussianPairSpec::validate() const {
  if (!(std::abs(rho) < 1.0f)) throw ContractError("gaussian pair: |rho| must be < 1");
  if (n < 100) throw ContractError("gaussian pair: need n >= 100 samples");
  if (dim < 1) throw ContractError("gaussian pair: dim must be positive");
}

SamplePair gen_correlated_gaussian(const GaussianPairSpec& spec) {
  spec.validate();
  Rng rng(mix64(spec.seed, 0x67617573ull));
  SamplePair s;
  s.n = spec.n;
  s.dim = spec.dim;
  s.x.resize(size_t(spec.n) * size_t(spec.dim));
  s.z.resize(s.x.size());
  const double k = std::sqrt(1.0 - double(spec.rho) * double(spec.rho));
  for (size_t i = 0; i < s.x.size(); ++i) {
    const double x = rng.normal();
    const double noise = rng.normal();
    s.x[i] = float(x);
    s.z[i] = float(double(spec.rho) * x + k * noise);
  }
  return s;
}

double true_gaussian_mi(double rho, int dim) {
  if (!(std::abs(rho) < 1.0)) throw ContractError("true_gaussian_mi: |rho| must be < 1");
  return -0.5 * double(dim) * std::log(1.0 - rho * rho);
}

double club_value(const SamplePair& s, const std::vector<float>& mu, const std::vector<float>& sigma) {
  const size_t want = size_t(s.n) * size_t(s.dim);
  if (mu.size() != want || sigma.size() != want)
    throw ContractError("club_value: posterior parameter arrays do not match the sample set");
  const int n = s.n, d = s.dim;

  std::vector<double> sum_z(size_t(d), 0.0), sum_z2(size_t(d), 0.0);
  for (int k = 0; k < n; ++k)
    for (int dd = 0; dd < d; ++dd) {
      const double z = double(s.z[size_t(int64_t(k) * d + dd)]);
      sum_z[size_t(dd)] += z;
      sum_z2[size_t(dd)] += z * z;
    }

  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double positive = 0.0, contrast = 0.0;
    for (int dd = 0; dd < d; ++dd) {
      const double m = double(mu[size_t(int64_t(i) * d + dd)]);
      const double sg = double(sigma[size_t(int64_t(i) * d + dd)]);
      const double var = sg * sg;
      const double zi = double(s.z[size_t(int64_t(i) * d + dd)]);
      positive += -0.5 * ((zi - m) * (zi - m) / var + std::log(var) + kLog2Pi);
      const double mean_sq = (sum_z2[size_t(dd)] - 2.0 * m * sum_z[size_t(dd)] + n * m * m) / n;
      contrast += -0.5 * (mean_sq / var + std::log(var) + kLog2Pi);
    }
    acc += positive - contrast;
  }
  return acc / n;
}

MiBenchOptions MiBenchOptions::from_config(const RunConfig& cfg) {
  MiBenchOptions o;
  o.tau = cfg.mi_tau;
  o.batch = cfg.mi_batch;
  o.club_epochs = cfg.mi_club_epochs;
  o.nce_epochs = cfg.mi_nce_epochs;
  o.hidden = cfg.mi_hidden;
  o.sigma_floor = cfg.sigma_floor;
  o.delta = cfg.mi_delta;
  o.train_seed = cfg.mi_seed;
  return o;
}

void train_club_net(const SamplePair& samples, ApproxNet& net, const MiBenchOptions& opt) {
  if (net.input_dim() != samples.dim || net.latent_dim() != samples.dim)
    throw ContractError("train_club_net: net dimensions do not match the samples");
  AdamW optim(net.params(), AdamConfig{1e-3f, 0.9f, 0.95f, 0.0f, 1e-8f});

  double best = 1e300;
  int since_best = 0;
  for (int e = 0; e < opt.club_epochs; ++e) {
    Rng rng(mix64(opt.train_seed, 0x636c7562ull, uint64_t(e)));
    std::vector<int> order = rng.permutation(samples.n);
    double nll_sum = 0.0;
    int64_t nll_count = 0;
    for (int lo = 0; lo < samples.n; lo += kClubBatch) {
      const int hi = std::min(samples.n, lo + kClubBatch);
      std::vector<int> idx(order.begin() + lo, order.begin() + hi);
      Tensor xb = rows_tensor(samples.x, idx, samples.dim);
      Tensor zb = rows_tensor(samples.z, idx, samples.dim);
      GaussianPosterior post = net.forward(xb);
      Tensor loss = scale(mean_all(gaussian_log_prob(post, zb, net.sigma_floor())), -1.0f);
      optim.zero_grad();
      backward(loss);
      for (const Tensor& p : optim.params()) const_cast<Tensor&>(p).materialize_grad();
      optim.step();
      nll_sum += double(loss.item()) * (hi - lo);
      nll_count += hi - lo;
    }
    const double nll = nll_sum / double(nll_count);
    if (nll < best - 1e-4) {
      best = nll;
      since_best = 0;
    } else if (++since_best >= 10) {
      return;  // plateau
    }
  }
}

namespace {

std::pair<std::vector<float>, std::vector<float>> posterior_params(const SamplePair& samples,
                                                                   const ApproxNet& net) {
  std::vector<float> mu, sigma;
  mu.reserve(size_t(samples.n) * size_t(samples.dim));
  sigma.reserve(mu.capacity());
  for (int lo = 0; lo < samples.n; lo += kClubBatch) {
    const int hi = std::min(samples.n, lo + kClubBatch);
    std::vector<int> idx;
    for (int i = lo; i < hi; ++i) idx.push_back(i);
    GaussianPosterior post = net.forward(rows_tensor(samples.x, idx, samples.dim));
    mu.insert(mu.end(), post.mu.values().begin(), post.mu.values().end());
    sigma.insert(sigma.end(), post.sigma.values().begin(), post.sigma.values().end());
  }
  return {std::move(mu), std::move(sigma)};
}

double club_nll(const SamplePair& samples, const std::vector<float>& mu,
                const std::vector<float>& sigma) {
  double acc = 0.0;
  for (size_t i = 0; i < mu.size(); ++i) {
    const double m = double(mu[i]), sg = double(sigma[i]), z = double(samples.z[i]);
    acc += -0.5 * ((z - m) * (z - m) / (sg * sg) + 2.0 * std::log(sg) + kLog2Pi);
  }
  return -acc / double(samples.n);
}

}  // namespace

ClubEstimate club_estimate(const SamplePair& samples, const MiBenchOptions& opt) {
  ApproxNet net(samples.dim, opt.hidden, samples.dim, opt.sigma_floor,
                mix64(opt.train_seed, 0x6e6574ull));
  train_club_net(samples, net, opt);
  auto [mu, sigma] = posterior_params(samples, net);

  ClubEstimate est;
  est.value = club_value(samples, mu, sigma);
  est.final_nll = club_nll(samples, mu, sigma);
  // an untrained/diverged net is flagged: its NLL would sit far above the
  // Gaussian entropy floor 0.5*d*(1+log 2pi)
  const double entropy_floor = 0.5 * samples.dim * (1.0 + kLog2Pi);
  est.converged = est.final_nll < entropy_floor + 0.5 * samples.dim + 0.5;
  return est;
}

double infonce_estimate(const SamplePair& samples, const MiBenchOptions& opt) {
  if (opt.batch < 2) throw ContractError("infonce_estimate: batch must be >= 2");
  if (samples.n < opt.batch) throw ContractError("infonce_estimate: fewer samples than one batch");
  Rng init_rng(mix64(opt.train_seed, 0x6e6365ull));
  Projector fx(samples.dim, opt.hidden, kProjDim, init_rng);
  Projector gz(samples.dim, opt.hidden, kProjDim, init_rng);
  std::vector<Tensor> params = fx.params();
  for (const Tensor& p : gz.params()) params.push_back(p);
  AdamW optim(params, AdamConfig{1e-3f, 0.9f, 0.95f, 0.0f, 1e-8f});

  auto batch_loss = [&](const std::vector<int>& idx) {
    const int B = int(idx.size());
    Tensor u = normalize_rows(fx.apply(rows_tensor(samples.x, idx, samples.dim)));
    Tensor v = normalize_rows(gz.apply(rows_tensor(samples.z, idx, samples.dim)));
    Tensor logits = scale(matmul(u, transpose_last(v)), 1.0f / opt.tau);
    std::vector<float> eye(size_t(B) * size_t(B), 0.0f);
    for (int i = 0; i < B; ++i) eye[size_t(int64_t(i) * B + i)] = 1.0f;
    Tensor diag = row_sum(mul(logits, Tensor::from_values({B, B}, std::move(eye))));
    return mean_all(sub(logsumexp_rows(logits), diag));
  };

  for (int e = 0; e < opt.nce_epochs; ++e) {
    Rng rng(mix64(opt.train_seed, 0x6e636570ull, uint64_t(e)));
    std::vector<int> order = rng.permutation(samples.n);
    for (int lo = 0; lo + opt.batch <= samples.n; lo += opt.batch) {
      std::vector<int> idx(order.begin() + lo, order.begin() + lo + opt.batch);
      Tensor loss = batch_loss(idx);
      optim.zero_grad();
      backward(loss);
      for (const Tensor& p : optim.params()) const_cast<Tensor&>(p).materialize_grad();
      optim.step();
    }
  }

  // deterministic evaluation partition over full batches
  Rng eval_rng(mix64(opt.train_seed, 0x6576616cull));
  std::vector<int> order = eval_rng.permutation(samples.n);
  double loss_sum = 0.0;
  int batches = 0;
  for (int lo = 0; lo + opt.batch <= samples.n; lo += opt.batch) {
    std::vector<int> idx(order.begin() + lo, order.begin() + lo + opt.batch);
    loss_sum += double(batch_loss(idx).item());
    ++batches;
  }
  if (batches == 0) throw ContractError("infonce_estimate: no full evaluation batch");
  return std::log(double(opt.batch)) - loss_sum / batches;
}

bool SandwichReport::all_pass() const {
  for (const SandwichRow& r : rows)
    if (!r.pass_club || !r.pass_infonce) return false;
  return !rows.empty();
}

SandwichReport sandwich_report(const std::vector<float>& rhos, int dim, int n, uint64_t seed,
                               const MiBenchOptions& opt) {
  SandwichReport report;
  report.delta = opt.delta;
  for (size_t i = 0; i < rhos.size(); ++i) {
    GaussianPairSpec spec;
    spec.dim = dim;
    spec.rho = rhos[i];
    spec.n = n;
    spec.seed = mix64(seed, uint64_t(i), 0x726f77ull);
    SamplePair samples = gen_correlated_gaussian(spec);

    MiBenchOptions local = opt;
    local.train_seed = mix64(opt.train_seed, uint64_t(i));

    SandwichRow row;
    row.rho = rhos[i];
    row.dim = dim;
    row.true_mi = true_gaussian_mi(double(rhos[i]), dim);
    row.club = club_estimate(samples, local).value;
    row.infonce = infonce_estimate(samples, local);
    row.pass_club = row.club >= row.true_mi - opt.delta;
    row.pass_infonce = row.infonce <= row.true_mi + opt.delta;
    report.rows.push_back(row);
  }
  return report;
}

std::string sandwich_csv(const SandwichReport& report) {
  std::string out = "rho,dim,true_mi,club,infonce,pass_club,pass_infonce\n";
  char buf[160];
  for (const SandwichRow& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%.6g,%d,%.6f,%.6f,%.6f,%d,%d\n", double(r.rho), r.dim, r.true_mi,
                  r.club, r.infonce, r.pass_club ? 1 : 0, r.pass_infonce ? 1 : 0);
    out += buf;
  }
  return out;
}

void write_sandwich_csv(const SandwichReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open MI report '" + path + "' for writing");
  out << sandwich_csv(report);
  if (!out) throw IoError("write failed for MI report '" + path + "'");
}

}  // namespace mimae
