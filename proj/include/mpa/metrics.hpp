#pragma once

#include <map>
#include <string>
#include <vector>

#include "mpa/dataio.hpp"
#include "mpa/ratings.hpp"
#include "mpa/scorer.hpp"

namespace mpa {

// One evaluated image: aggregated prediction next to its ground truth.
struct ImagePrediction {
  std::string image_id;
  RatingDistribution predicted_dist;
  double predicted_score = 0.0;
  RatingDistribution ground_truth_dist;
  double ground_truth_score = 0.0;
  double aspect_ratio = 0.0;  // height / width of the original image
};

// Metrics of one (strategy, patch count) evaluation pass. lcc/srcc are
// NaN with `degenerate` set when the score series has no variance or
// fewer than two points.
struct SweepRow {
  TestStrategy strategy = TestStrategy::kGlobalLocal;
  int patch_count = 0;
  double lcc = 0.0;
  double srcc = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  double mean_emd = 0.0;
  double binary_accuracy = 0.0;
  bool degenerate = false;
};

inline constexpr int kAeHistogramBins = 21;  // 0.1-wide, last bin open at 2.0

// Aspect-ratio bucket labels, lower bound inclusive: "0.4-0.6" ...
// "1.4-1.6", "1.6-". Ratios below 0.4 fold into the lowest bucket.
extern const std::vector<std::string> kAspectBucketLabels;
int aspect_bucket_index(double ratio);

struct EvalReport {
  SweepRow primary;
  std::vector<long long> ae_histogram;  // kAeHistogramBins counts
  std::map<std::string, double> bucket_mse;
  std::map<std::string, long long> bucket_counts;
  std::vector<SweepRow> sweeps;
  std::vector<ImagePrediction> per_image;
};

// Entrywise arithmetic mean of rating distributions.
RatingDistribution aggregate_patches(
    const std::vector<RatingDistribution>& dists);

// Pearson correlation. Throws DegenerateSeries for n < 2 or a
// zero-variance side.
double lcc(const std::vector<double>& pred, const std::vector<double>& truth);

// Spearman rank correlation with average ranks for ties.
double srcc(const std::vector<double>& pred, const std::vector<double>& truth);

double mse(const std::vector<double>& pred, const std::vector<double>& truth);
double rmse(const std::vector<double>& pred, const std::vector<double>& truth);

// Fraction of images on the same side of the threshold: score > 5 is
// positive, <= 5 negative, applied to both series.
double binary_accuracy(const std::vector<double>& pred,
                       const std::vector<double>& truth);

// Per-bucket MSE over the images falling in each bucket; empty buckets
// are omitted rather than reported as NaN.
std::map<std::string, double> bucket_mse(
    const std::vector<ImagePrediction>& preds);

// (mse_a - mse_b) / mse_a per bucket present in both maps.
std::map<std::string, double> mse_reduction_rate(
    const std::map<std::string, double>& mse_a,
    const std::map<std::string, double>& mse_b);

// Evaluates one plan over the samples; fills `out_preds` when non-null.
SweepRow evaluate_plan(const Scorer& scorer, const std::vector<Sample>& samples,
                       const PatchPlan& plan, std::uint64_t seed,
                       std::vector<ImagePrediction>* out_preds);

// Full report: the primary plan (with per-image detail, AE histogram
// and bucket table) plus one sweep row per extra plan.
EvalReport evaluate(const Scorer& scorer, const std::vector<Sample>& samples,
                    const PatchPlan& primary,
                    const std::vector<PatchPlan>& sweep_plans,
                    std::uint64_t seed);

// The patch-count grid used in the strategy-comparison figures:
// mp-random n=1..10, mp-local m in {1,2,3}, mp-globallocal m in {1,2,3}.
std::vector<PatchPlan> standard_sweep_plans(const PatchPlan& base);

// JSON rendering of the report (stable key order, suitable for
// byte-comparison across reruns).
std::string report_to_json(const EvalReport& report);

}  // namespace mpa
