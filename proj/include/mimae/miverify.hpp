#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mimae/config.hpp"
#include "mimae/model.hpp"

namespace mimae {

// Correlated Gaussian pairs with closed-form mutual information:
// z_d = rho*x_d + sqrt(1-rho^2)*noise_d per dimension.
struct GaussianPairSpec {
  int dim = 1;
  float rho = 0.5f;
  int n = 10000;
  uint64_t seed = 1;

  void validate() const;
};

struct SamplePair {
  int n = 0;
  int dim = 0;
  std::vector<float> x;  // n x dim row-major
  std::vector<float> z;
};

SamplePair gen_correlated_gaussian(const GaussianPairSpec& spec);

// -(d/2) * ln(1 - rho^2), in nats.
double true_gaussian_mi(double rho, int dim);

// CLUB estimator given per-sample posterior parameters:
// mean_i[ log q(z_i|x_i) - (1/n) sum_k log q(z_k|x_i) ], exact over the
// full n x n contrast via per-dimension sufficient statistics.
double club_value(const SamplePair& samples, const std::vector<float>& mu,
                  const std::vector<float>& sigma);

struct MiBenchOptions {
  float tau = 0.1f;
  int batch = 128;
  int club_epochs = 150;
  int nce_epochs = 30;
  int hidden = 64;
  float sigma_floor = 1e-4f;
  float delta = 0.1f;  // sandwich slack in nats
  uint64_t train_seed = 7;

  static MiBenchOptions from_config(const RunConfig& cfg);
};

// Fits the variational net on the sample set by NLL until plateau.
void train_club_net(const SamplePair& samples, ApproxNet& net, const MiBenchOptions& opt);

// Trains the net internally, then evaluates the CLUB estimator on the set.
struct ClubEstimate {
  double value = 0.0;
  double final_nll = 0.0;
  bool converged = false;  // NLL plateau reached within the epoch budget
};
ClubEstimate club_estimate(const SamplePair& samples, const MiBenchOptions& opt);

// InfoNCE lower-bound estimator with a learned cosine critic:
// log(batch) - mean InfoNCE loss over full batches; never exceeds log(batch).
double infonce_estimate(const SamplePair& samples, const MiBenchOptions& opt);

struct SandwichRow {
  float rho = 0.0f;
  int dim = 1;
  double true_mi = 0.0;
  double club = 0.0;
  double infonce = 0.0;
  bool pass_club = false;
  bool pass_infonce = false;
};

struct SandwichReport {
  std::vector<SandwichRow> rows;
  double delta = 0.1;
  bool all_pass() const;
};

SandwichReport sandwich_report(const std::vector<float>& rhos, int dim, int n, uint64_t seed,
                               const MiBenchOptions& opt);

std::string sandwich_csv(const SandwichReport& report);
void write_sandwich_csv(const SandwichReport& report, const std::string& path);

}  // namespace mimae
