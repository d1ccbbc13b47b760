#pragma once

#include <string>
#include <vector>

#include "mpa/ratings.hpp"

namespace mpa {

enum class Strategy { kCollective, kIndividual };

// One row of the loss-variant ablation grid: strategy x {plain,
// weighted, log, weighted-log}. The weighted-log combination is the
// headline loss for each strategy.
struct LossSpec {
  Strategy strategy = Strategy::kIndividual;
  bool use_log = true;
  bool use_weight = true;
  EmdParams params;
  // When set, the patch weight is treated as a constant during
  // differentiation instead of being chained through the certainty.
  bool stop_weight_gradient = false;
};

// Logits and their softmax, kept together so downstream code never
// recomputes the distribution inconsistently.
struct PatchPrediction {
  std::vector<double> logits;
  RatingDistribution dist;
};

std::vector<double> softmax(const std::vector<double>& logits);
PatchPrediction make_prediction(std::vector<double> logits);

// Per-patch loss term. With certainty e = max(eps, 1 - k*EMD) and
// weight w = 1 - e^beta the four variants are:
//   plain         -e
//   weighted      -w * e
//   log           -log(e)
//   weighted-log  -w * log(e)
// The log variants are >= 0 and reach 0 exactly at a perfect
// prediction. The plain variant reaches its minimum -1 there. The
// weighted variant is 0 at BOTH e = 1 and e -> 0 and dips negative in
// between (minimum at e = (1+beta)^(-1/beta)); it is kept exactly as
// defined because it is an ablation arm, not a recommended objective.
double per_patch_loss(const LossSpec& spec, const PatchPrediction& pred,
                      const RatingDistribution& truth);

// Arithmetic mean of the per-patch term over a patch set.
double collective_loss(const LossSpec& spec,
                       const std::vector<PatchPrediction>& preds,
                       const RatingDistribution& truth);

// d(per-patch loss)/d(logits), r = 2 only. Defined as the zero vector
// at EMD = 0 (the loss minimum) and whenever the certainty clamp is
// active.
std::vector<double> loss_gradient(const LossSpec& spec,
                                  const PatchPrediction& pred,
                                  const RatingDistribution& truth);

// Square-resize pre-training objective: the raw distance itself,
// minimized directly with no certainty transform, weight, or log.
double plain_emd_loss(const PatchPrediction& pred,
                      const RatingDistribution& truth);
std::vector<double> plain_emd_gradient(const PatchPrediction& pred,
                                       const RatingDistribution& truth);

// Slug <-> spec mapping used by the CLI and training configs:
// {col,ind}-emd[-simple|-weighted|-log].
LossSpec loss_spec_from_slug(const std::string& slug);
std::string loss_slug(const LossSpec& spec);
const std::vector<std::string>& loss_slugs();

}  // namespace mpa
