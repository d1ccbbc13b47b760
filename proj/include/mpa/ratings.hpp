#pragma once

#include <cstdint>
#include <vector>

#include "mpa/errors.hpp"

namespace mpa {

// Normalized rating histogram over classes 1..N. Entries are
// non-negative and sum to 1 (absolute tolerance 1e-9; construction
// renormalizes when the raw sum is within 1e-6 of 1).
class RatingDistribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  // Empty placeholder (num_classes() == 0); every populated instance
  // comes from a validating factory.
  RatingDistribution() = default;

  // Builds from raw probabilities, renormalizing small drift.
  static RatingDistribution from_probs(std::vector<double> probs);

  int num_classes() const { return static_cast<int>(probs_.size()); }
  const std::vector<double>& probs() const { return probs_; }
  double operator[](int i) const { return probs_[static_cast<std::size_t>(i)]; }

  bool operator==(const RatingDistribution& other) const;

 private:
  std::vector<double> probs_;
};

// Hyperparameters of the distance / certainty / weight chain:
// r-norm order of the distance, expansion coefficient k, weight
// exponent beta, and the certainty clamp floor epsilon.
struct EmdParams {
  double r = 2.0;
  double k = 1.2;
  double beta = 0.4;
  double epsilon = 1e-6;

  void validate() const;
};

// Count normalization for ground-truth histograms. Throws
// InvalidHistogram when every count is zero.
RatingDistribution normalize(const std::vector<std::int64_t>& counts);

// Mean of the distribution with class values 1..N; the aesthetics score.
double mean_score(const RatingDistribution& d);

// Running sum of probabilities; out[k] = P(class <= k+1).
std::vector<double> cdf(const RatingDistribution& d);

// r-norm distance between two distributions over the same ordered
// classes: ((1/N) * sum_k |CDF_p(k) - CDF_q(k)|^r)^(1/r).
double emd(const RatingDistribution& p, const RatingDistribution& q,
           double r = 2.0);

// Certainty transform: max(epsilon, 1 - k * emd_value). Close to 1 for
// small distances, clamped at epsilon for large ones.
double emd_certainty(double emd_value, const EmdParams& params);

// Patch weight 1 - emd_c^beta. Zero for perfectly predicted patches,
// approaching 1 as certainty drops toward 0.
double patch_weight(double emd_c, double beta);

}  // namespace mpa
