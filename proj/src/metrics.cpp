#include "mpa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "mpa/loss.hpp"
#include "mpa/rng.hpp"

using nlohmann::json;

namespace mpa {

const std::vector<std::string> kAspectBucketLabels = {
    "0.4-0.6", "0.6-0.8", "0.8-1.0", "1.0-1.2", "1.2-1.4", "1.4-1.6", "1.6-"};

int aspect_bucket_index(double ratio) {
  if (ratio <= 0.0) throw InvalidArgument("aspect ratio must be > 0");
  if (ratio < 0.6) return 0;  // sub-0.4 ratios fold into the lowest bucket
  if (ratio < 0.8) return 1;
  if (ratio < 1.0) return 2;
  if (ratio < 1.2) return 3;
  if (ratio < 1.4) return 4;
  if (ratio < 1.6) return 5;
  return 6;
}

RatingDistribution aggregate_patches(
    const std::vector<RatingDistribution>& dists) {
  if (dists.empty()) throw EmptyPatchSet("no patch distributions to average");
  const int n = dists.front().num_classes();
  std::vector<double> mean(static_cast<std::size_t>(n), 0.0);
  for (const RatingDistribution& d : dists) {
    if (d.num_classes() != n) {
      throw DimensionMismatch("patch distributions have differing class counts");
    }
    for (int i = 0; i < n; ++i) mean[static_cast<std::size_t>(i)] += d[i];
  }
  for (double& v : mean) v /= static_cast<double>(dists.size());
  return RatingDistribution::from_probs(std::move(mean));
}

namespace {

void check_pair(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("series lengths differ: " +
                            std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
  }
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) throw DegenerateSeries("correlation needs at least 2 points");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DegenerateSeries("correlation undefined for zero-variance series");
  }
  return sxy / std::sqrt(sxx * syy);
}

// Average ranks (ties share the mean of their positions), 1-based.
std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double lcc(const std::vector<double>& pred, const std::vector<double>& truth) {
  check_pair(pred, truth);
  return pearson(pred, truth);
}

double srcc(const std::vector<double>& pred, const std::vector<double>& truth) {
  check_pair(pred, truth);
  return pearson(average_ranks(pred), average_ranks(truth));
}

double mse(const std::vector<double>& pred, const std::vector<double>& truth) {
  check_pair(pred, truth);
  if (pred.empty()) throw DimensionMismatch("mse over empty series");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
  return std::sqrt(mse(pred, truth));
}

double binary_accuracy(const std::vector<double>& pred,
                       const std::vector<double>& truth) {
  check_pair(pred, truth);
  if (pred.empty()) throw DimensionMismatch("accuracy over empty series");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if ((pred[i] > 5.0) == (truth[i] > 5.0)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::map<std::string, double> bucket_mse(
    const std::vector<ImagePrediction>& preds) {
  std::map<std::string, double> acc;
  std::map<std::string, long long> count;
  for (const ImagePrediction& p : preds) {
    const std::string& label =
        kAspectBucketLabels[static_cast<std::size_t>(
            aspect_bucket_index(p.aspect_ratio))];
    const double d = p.predicted_score - p.ground_truth_score;
    acc[label] += d * d;
    ++count[label];
  }
  std::map<std::string, double> out;
  for (const auto& [label, sum] : acc) {
    out[label] = sum / static_cast<double>(count[label]);
  }
  return out;
}

std::map<std::string, double> mse_reduction_rate(
    const std::map<std::string, double>& mse_a,
    const std::map<std::string, double>& mse_b) {
  std::map<std::string, double> out;
  for (const auto& [label, a] : mse_a) {
    const auto it = mse_b.find(label);
    if (it == mse_b.end() || a == 0.0) continue;
    out[label] = (a - it->second) / a;
  }
  return out;
}

SweepRow evaluate_plan(const Scorer& scorer, const std::vector<Sample>& samples,
                       const PatchPlan& plan, std::uint64_t seed,
                       std::vector<ImagePrediction>* out_preds) {
  if (samples.empty()) throw EmptyDataset("evaluation over no images");
  plan.validate();
  std::vector<double> pred_scores;
  std::vector<double> truth_scores;
  std::vector<double> emds;
  if (out_preds != nullptr) out_preds->clear();

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    Rng rng(mix_seed(seed, i));
    const std::vector<Patch> patches = select_test_patches(s.image, plan, rng);
    std::vector<RatingDistribution> dists;
    dists.reserve(patches.size());
    for (const Patch& p : patches) {
      dists.push_back(
          RatingDistribution::from_probs(softmax(scorer.predict(p.pixels))));
    }
    const RatingDistribution agg = aggregate_patches(dists);
    ImagePrediction ip;
    ip.image_id = s.id;
    ip.predicted_dist = agg;
    ip.predicted_score = mean_score(agg);
    ip.ground_truth_dist = s.truth;
    ip.ground_truth_score = mean_score(s.truth);
    ip.aspect_ratio = s.image.aspect_ratio();
    pred_scores.push_back(ip.predicted_score);
    truth_scores.push_back(ip.ground_truth_score);
    emds.push_back(emd(agg, s.truth, 2.0));
    if (out_preds != nullptr) out_preds->push_back(std::move(ip));
  }

  SweepRow row;
  row.strategy = plan.strategy;
  row.patch_count = plan.patch_count();
  row.mse = mse(pred_scores, truth_scores);
  row.rmse = std::sqrt(row.mse);
  row.mean_emd =
      std::accumulate(emds.begin(), emds.end(), 0.0) / emds.size();
  row.binary_accuracy = binary_accuracy(pred_scores, truth_scores);
  try {
    row.lcc = lcc(pred_scores, truth_scores);
    row.srcc = srcc(pred_scores, truth_scores);
  } catch (const DegenerateSeries&) {
    row.lcc = std::numeric_limits<double>::quiet_NaN();
    row.srcc = std::numeric_limits<double>::quiet_NaN();
    row.degenerate = true;
  }
  return row;
}

EvalReport evaluate(const Scorer& scorer, const std::vector<Sample>& samples,
                    const PatchPlan& primary,
                    const std::vector<PatchPlan>& sweep_plans,
                    std::uint64_t seed) {
  EvalReport report;
  report.primary =
      evaluate_plan(scorer, samples, primary, mix_seed(seed, 0), &report.per_image);

  report.ae_histogram.assign(kAeHistogramBins, 0);
  std::map<std::string, long long> counts;
  for (const ImagePrediction& p : report.per_image) {
    const double ae = std::abs(p.predicted_score - p.ground_truth_score);
    const int bin = std::min(kAeHistogramBins - 1,
                             static_cast<int>(std::floor(ae / 0.1)));
    ++report.ae_histogram[static_cast<std::size_t>(bin)];
    ++counts[kAspectBucketLabels[static_cast<std::size_t>(
        aspect_bucket_index(p.aspect_ratio))]];
  }
  report.bucket_counts = std::move(counts);
  report.bucket_mse = bucket_mse(report.per_image);

  for (std::size_t k = 0; k < sweep_plans.size(); ++k) {
    report.sweeps.push_back(evaluate_plan(scorer, samples, sweep_plans[k],
                                          mix_seed(seed, 1 + k), nullptr));
  }
  return report;
}

std::vector<PatchPlan> standard_sweep_plans(const PatchPlan& base) {
  std::vector<PatchPlan> plans;
  for (int n = 1; n <= 10; ++n) {
    PatchPlan p = base;
    p.strategy = TestStrategy::kRandom;
    p.n_random = n;
    plans.push_back(p);
  }
  for (int m = 1; m <= 3; ++m) {
    PatchPlan p = base;
    p.strategy = TestStrategy::kLocal;
    p.m = m;
    plans.push_back(p);
  }
  for (int m = 1; m <= 3; ++m) {
    PatchPlan p = base;
    p.strategy = TestStrategy::kGlobalLocal;
    p.m = m;
    plans.push_back(p);
  }
  return plans;
}

namespace {

json row_to_json(const SweepRow& row) {
  json j;
  j["lcc"] = row.lcc;
  j["srcc"] = row.srcc;
  j["mse"] = row.mse;
  j["rmse"] = row.rmse;
  j["mean_emd"] = row.mean_emd;
  j["binary_accuracy"] = row.binary_accuracy;
  j["degenerate_correlation"] = row.degenerate;
  return j;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  json j;
  j["n_images"] = report.per_image.size();
  j["strategy"] = strategy_name(report.primary.strategy);
  j["patch_count"] = report.primary.patch_count;
  j["metrics"] = row_to_json(report.primary);
  j["ae_histogram"] = {{"bin_width", 0.1},
                       {"counts", report.ae_histogram}};
  j["bucket_mse"] = report.bucket_mse;
  j["bucket_counts"] = report.bucket_counts;

  json sweeps = json::object();
  for (const SweepRow& row : report.sweeps) {
    const std::string strat = strategy_name(row.strategy);
    if (!sweeps.contains(strat)) sweeps[strat] = json::object();
    sweeps[strat][std::to_string(row.patch_count)] = row_to_json(row);
  }
  j["sweeps"] = sweeps;

  json per_image = json::array();
  for (const ImagePrediction& p : report.per_image) {
    json e;
    e["id"] = p.image_id;
    e["predicted_score"] = p.predicted_score;
    e["ground_truth_score"] = p.ground_truth_score;
    e["aspect_ratio"] = p.aspect_ratio;
    e["predicted_dist"] = p.predicted_dist.probs();
    per_image.push_back(std::move(e));
  }
  j["per_image"] = per_image;
  return j.dump(2);
}

}  // namespace mpa
