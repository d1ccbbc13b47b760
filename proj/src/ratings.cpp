#include "mpa/ratings.hpp"

#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>

namespace mpa {

RatingDistribution RatingDistribution::from_probs(std::vector<double> probs) {
  if (probs.size() < 2) {
    throw InvalidHistogram("distribution needs at least 2 classes, got " +
                           std::to_string(probs.size()));
  }
  double sum = 0.0;
  for (const double p : probs) {
    if (!(p >= 0.0)) {
      throw InvalidHistogram("negative or non-finite probability entry");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw InvalidHistogram("probabilities sum to " + std::to_string(sum) +
                           ", expected 1");
  }
  for (double& p : probs) p /= sum;
  RatingDistribution d;
  d.probs_ = std::move(probs);
  return d;
}

bool RatingDistribution::operator==(const RatingDistribution& other) const {
  if (probs_.size() != other.probs_.size()) return false;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (std::abs(probs_[i] - other.probs_[i]) > kSumTolerance) return false;
  }
  return true;
}

void EmdParams::validate() const {
  if (r < 1.0) throw InvalidArgument("norm order r must be >= 1");
  if (k <= 0.0) throw InvalidArgument("expansion coefficient k must be > 0");
  if (beta <= 0.0) throw InvalidArgument("weight exponent beta must be > 0");
  if (epsilon <= 0.0 || epsilon >= 1.0) {
    throw InvalidArgument("epsilon must lie in (0, 1)");
  }
}

RatingDistribution normalize(const std::vector<std::int64_t>& counts) {
  if (counts.size() < 2) {
    throw InvalidHistogram("histogram needs at least 2 classes");
  }
  std::int64_t total = 0;
  for (const std::int64_t c : counts) {
    if (c < 0) throw InvalidHistogram("negative rating count");
    total += c;
  }
  if (total == 0) throw InvalidHistogram("all rating counts are zero");
  std::vector<double> probs(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    probs[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  }
  return RatingDistribution::from_probs(std::move(probs));
}

double mean_score(const RatingDistribution& d) {
  double acc = 0.0;
  for (int i = 0; i < d.num_classes(); ++i) {
    acc += static_cast<double>(i + 1) * d[i];
  }
  return acc;
}

std::vector<double> cdf(const RatingDistribution& d) {
  std::vector<double> out(static_cast<std::size_t>(d.num_classes()));
  double acc = 0.0;
  for (int i = 0; i < d.num_classes(); ++i) {
    acc += d[i];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

double emd(const RatingDistribution& p, const RatingDistribution& q,
           double r) {
  if (p.num_classes() != q.num_classes()) {
    throw DimensionMismatch("distribution class counts differ: " +
                            std::to_string(p.num_classes()) + " vs " +
                            std::to_string(q.num_classes()));
  }
  if (r < 1.0) throw InvalidArgument("norm order r must be >= 1");
  const int n = p.num_classes();
  double acc = 0.0;
  double cp = 0.0;
  double cq = 0.0;
  for (int i = 0; i < n; ++i) {
    cp += p[i];
    cq += q[i];
    acc += std::pow(std::abs(cp - cq), r);
  }
  return std::pow(acc / static_cast<double>(n), 1.0 / r);
}

double emd_certainty(double emd_value, const EmdParams& params) {
  params.validate();
  if (emd_value < 0.0) throw InvalidArgument("distance must be >= 0");
  const double raw = 1.0 - params.k * emd_value;
  return raw < params.epsilon ? params.epsilon : raw;
}

double patch_weight(double emd_c, double beta) {
  if (beta <= 0.0) throw InvalidArgument("weight exponent beta must be > 0");
  return 1.0 - std::pow(emd_c, beta);
}

}  // namespace mpa
