// Empirical harness for the masked-domain adaptation bound: measures every
// term (pixel errors, pseudo-label noise, A-distance proxy for the domain
// discrepancy, joint-error estimate) and reports the inequality margin.
#pragma once

#include <cstdint>
#include <vector>

#include "advmim/datagen.hpp"
#include "advmim/training.hpp"

namespace advmim {

struct BoundReport {
  double eps_p = 0;       // true-label error on the original domain
  double eps_pp = 0;      // error vs pseudo-labels, original domain
  double eps_qp = 0;      // error vs pseudo-labels, masked domain
  double d_proxy = 0;     // A-distance estimate of the domain discrepancy, [0,2]
  double lambda_hat = 0;  // joint best-hypothesis error estimate
  double gamma = 0;       // pseudo-label noise ratio
  double rhs = 0;
  double margin = 0;      // rhs - eps_p

  static double compose_rhs(double eps_pp, double eps_qp, double d_proxy, double lambda_hat,
                            double gamma) {
    return 0.5 * eps_pp + 0.5 * eps_qp + 0.25 * d_proxy + 0.5 * lambda_hat + gamma;
  }
  void finalize() {
    rhs = compose_rhs(eps_pp, eps_qp, d_proxy, lambda_hat, gamma);
    margin = rhs - eps_p;
  }
};

// fraction of pixels where pseudo != truth, averaged over samples
double estimate_pseudo_noise_ratio(const std::vector<std::vector<int>>& pseudo_labels,
                                   const std::vector<std::vector<int>>& true_labels);

// A-distance proxy 2*(1 - 2*heldout_err) of a two-layer domain classifier,
// clipped to [0, 2]. Needs >= 20 samples per domain.
double estimate_a_distance(const std::vector<std::vector<double>>& domain_a,
                           const std::vector<std::vector<double>>& domain_b, std::uint64_t seed,
                           double* heldout_err = nullptr);

// permutation test: p-value for the observed A-distance against the null of
// identical domains (domain labels shuffled)
double a_distance_permutation_pvalue(const std::vector<std::vector<double>>& domain_a,
                                     const std::vector<std::vector<double>>& domain_b,
                                     int n_permutations, std::uint64_t seed,
                                     double* observed = nullptr);

// average-pooled probability-map feature for the domain classifier
std::vector<double> pool_probs_feature(const TensorF& probs, int pooled = 8);

struct BoundOptions {
  int lambda_iterations = 150;  // budget for the joint-hypothesis fit
  int lambda_batch = 4;
  double lambda_lr = 0.05;
  std::uint64_t seed = 1;
};

// Measures all Theorem-style terms for the transformer of a trained model set
// on full images: pseudo-labels come from the CNN, the masked domain uses
// cfg.mask_ratio, and unlabeled ground truth is read from withheld_mask.
BoundReport check_bound(ModelSet<float>& ms, const Dataset& labeled, const Dataset& unlabeled,
                        const TrainConfig& cfg, const BoundOptions& opt = {});

}  // namespace advmim
