// Acceptance suite: one pass/fail line per criterion. Runs standalone
// on a laptop-class machine; the training criterion is the long pole
// (a few minutes).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpa/commands.hpp"
#include "mpa/dataio.hpp"
#include "mpa/loss.hpp"
#include "mpa/metrics.hpp"
#include "mpa/trainer.hpp"
#include "../tests/oracles.hpp"

namespace fs = std::filesystem;
using namespace mpa;
using nlohmann::json;

namespace {

struct Criterion {
  int id;
  std::string name;
  std::function<void()> body;
};

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw Failure(msg);
}

double elapsed_s(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

RatingDistribution one_hot(int cls) {
  std::vector<double> v(10, 0.0);
  v[static_cast<std::size_t>(cls - 1)] = 1.0;
  return RatingDistribution::from_probs(std::move(v));
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(is),
                     std::istreambuf_iterator<char>());
}

// Shared state across criteria 7 and 8: one dataset, one training run.
const fs::path g_root = fs::temp_directory_path() / "mpa_acceptance";
const fs::path g_data = g_root / "data";
const fs::path g_run = g_root / "run";
const fs::path g_eval = g_root / "eval";
constexpr std::uint64_t kDataSeed = 20240817;
constexpr std::uint64_t kSplitSeed = 11;
constexpr std::uint64_t kTrainSeed = 5;

// Desk-scale geometry for the synthetic training run; the dataset's
// 64-128 px images keep their aspect ratios under a 56 px shorter-edge
// rescale with 48 px crops.
constexpr int kS = 56;
constexpr int kP = 48;
constexpr int kG = 56;

void criterion_1_transport_oracle() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(101);
  for (int it = 0; it < 1000; ++it) {
    const auto p = testutil::random_distribution(rng);
    const auto q = testutil::random_distribution(rng);
    const double via_cdf = emd(p, q, 1.0);
    const double via_lp = testutil::transport_cost_r1(p.probs(), q.probs());
    require(std::abs(via_cdf - via_lp) < 1e-9,
            "r=1 distance disagrees with the transport oracle");
  }
  const double secs = elapsed_s(start);
  require(secs < 10.0, "oracle comparison too slow: " + std::to_string(secs));
}

void criterion_2_metric_axioms() {
  Rng rng(202);
  for (const double r : {1.0, 2.0}) {
    for (int it = 0; it < 1000; ++it) {
      const auto a = testutil::random_distribution(rng);
      const auto b = testutil::random_distribution(rng);
      const auto c = testutil::random_distribution(rng);
      require(emd(a, b, r) >= 0.0, "negativity");
      require(std::abs(emd(a, b, r) - emd(b, a, r)) < 1e-12, "symmetry");
      require(emd(a, a, r) == 0.0, "identity");
      if (!(a == b)) require(emd(a, b, r) > 0.0, "discernibles");
      require(emd(a, c, r) <= emd(a, b, r) + emd(b, c, r) + 1e-12,
              "triangle inequality");
    }
  }
}

void criterion_3_spot_values() {
  require(std::abs(emd(one_hot(1), one_hot(10), 2.0) - 0.948683) < 1e-6,
          "extreme one-hot distance");
  EmdParams params;
  require(emd_certainty(0.5, params) == 0.4, "certainty at distance 0.5");
  require(std::abs(patch_weight(0.5, 0.4) - 0.242142) < 1e-6,
          "patch weight at certainty 0.5");
}

void criterion_4_gradient_checks() {
  const auto start = std::chrono::steady_clock::now();

  // All eight variants against central finite differences.
  for (const std::string& slug : loss_slugs()) {
    LossSpec spec = loss_spec_from_slug(slug);
    Rng rng(400 + static_cast<std::uint64_t>(slug.size()));
    int done = 0;
    while (done < 100) {
      const auto pred = make_prediction(testutil::random_logits(rng));
      const auto truth = testutil::random_distribution(rng);
      const double e = emd_certainty(emd(pred.dist, truth, 2.0), spec.params);
      if (e <= spec.params.epsilon + 0.05 || e >= 0.95) continue;
      ++done;
      const auto analytic = loss_gradient(spec, pred, truth);
      const auto fd = testutil::finite_difference(
          [&](const std::vector<double>& logits) {
            return per_patch_loss(spec, make_prediction(logits), truth);
          },
          pred.logits, 1e-5);
      require(testutil::max_relative_error(analytic, fd, 1e-6) < 1e-4,
              slug + " gradient mismatch");
    }
  }

  // End-to-end parameter gradients on a miniature scorer. The case is
  // drawn away from the flat region near certainty 1 so the gradient
  // scale sits well above single-precision finite-difference noise;
  // components under 1% of the largest gradient are compared against
  // that scale rather than entrywise.
  ScorerConfig mini;
  mini.conv_channels = {2, 3};
  mini.input_min_side = 16;
  ConvNet<float> net(mini, 11);
  Rng rng(41);
  ImageBuffer patch(16, 16);
  for (float& v : patch.pixels) v = static_cast<float>(rng.uniform());
  const LossSpec spec = loss_spec_from_slug("ind-emd");
  RatingDistribution truth;
  {
    const auto probe = make_prediction(net.predict(patch));
    for (;;) {
      const auto candidate = testutil::random_distribution(rng);
      const double e =
          emd_certainty(emd(probe.dist, candidate, 2.0), spec.params);
      if (e > 0.55 && e < 0.90) {
        truth = candidate;
        break;
      }
    }
  }
  const auto pred = make_prediction(net.forward(patch));
  const auto grads = net.backward(loss_gradient(spec, pred, truth));
  double max_abs = 0.0;
  for (const auto& g : grads) {
    for (const double v : g.data) max_abs = std::max(max_abs, std::abs(v));
  }
  const double floor = std::max(1e-10, 1e-2 * max_abs);
  auto& params = net.parameters();
  const double h = 3e-4;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t j = 0; j < params[t].data.size(); ++j) {
      const float orig = params[t].data[j];
      params[t].data[j] = orig + static_cast<float>(h);
      const double hi =
          per_patch_loss(spec, make_prediction(net.predict(patch)), truth);
      params[t].data[j] = orig - static_cast<float>(h);
      const double lo =
          per_patch_loss(spec, make_prediction(net.predict(patch)), truth);
      params[t].data[j] = orig;
      const double fd = (hi - lo) / (2.0 * h);
      const double analytic = grads[t].data[j];
      const double scale = std::max({std::abs(fd), std::abs(analytic), floor});
      require(std::abs(fd - analytic) / scale < 1e-3,
              "parameter gradient mismatch in " + params[t].name);
    }
  }

  const double secs = elapsed_s(start);
  require(secs < 60.0, "gradient checks too slow: " + std::to_string(secs));
}

void criterion_5_patch_geometry() {
  Rng rng(505);
  for (int it = 0; it < 50; ++it) {
    const double ratio = rng.uniform(0.4, 2.5);  // height/width
    const int w = static_cast<int>(rng.uniform_int(360, 900));
    const int h = std::max(360, static_cast<int>(std::lround(w * ratio)));
    ImageBuffer img(w, h);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      img.pixels[i] = static_cast<float>((i * 2654435761u % 9973) / 9973.0);
    }
    const ImageBuffer rescaled = rescale_shorter_edge(img, 342);
    require(std::min(rescaled.width, rescaled.height) == 342,
            "shorter edge not exactly 342");

    for (const int m : {2, 3}) {
      const auto grid = grid_crops(rescaled, 299, m);
      require(static_cast<int>(grid.size()) == m * m, "grid patch count");
      require(grid.front().x == 0 && grid.front().y == 0,
              "grid misses the origin");
      require(grid.back().x == rescaled.width - 299 &&
                  grid.back().y == rescaled.height - 299,
              "grid misses the far corner");
      // Local patches are verbatim copies of their source rectangles.
      const Patch& p = grid[static_cast<std::size_t>(it % (m * m))];
      for (int y = 0; y < 299; y += 37) {
        for (int x = 0; x < 299; x += 41) {
          for (int c = 0; c < 3; ++c) {
            require(p.pixels.at(x, y, c) == rescaled.at(p.x + x, p.y + y, c),
                    "local patch resampled its content");
          }
        }
      }
    }

    PatchPlan plan;
    plan.strategy = TestStrategy::kGlobalLocal;
    plan.m = 1 + it % 3;
    Rng prng(it);
    const auto patches = select_test_patches(img, plan, prng);
    require(static_cast<int>(patches.size()) == plan.m * plan.m + 1,
            "global-local patch count");
  }
}

void criterion_6_weight_curve() {
  const double eps = 1e-6;
  const std::vector<double> betas = {0.2, 0.4, 1.0, 2.0, 4.0};
  for (const double beta : betas) {
    require(patch_weight(1.0, beta) == 0.0, "weight nonzero at certainty 1");
    require(patch_weight(eps, beta) > 0.0, "weight vanished at the floor");
    double prev = patch_weight(eps, beta);
    for (int i = 1; i <= 1000; ++i) {
      const double e = eps + (1.0 - eps) * i / 1000.0;
      const double w = patch_weight(e, beta);
      require(w <= prev + 1e-15, "weight curve not monotone");
      prev = w;
    }
  }
  for (std::size_t b = 0; b + 1 < betas.size(); ++b) {
    for (int i = 1; i < 1000; ++i) {
      const double e = eps + (1.0 - 2.0 * eps) * i / 1000.0;
      require(patch_weight(e, betas[b]) < patch_weight(e, betas[b + 1]),
              "weight curves out of order in beta");
    }
  }
}

void criterion_7_training_effect() {
  const auto start = std::chrono::steady_clock::now();
  fs::remove_all(g_root);
  fs::create_directories(g_root);

  SynthOptions synth;
  synth.out = g_data.string();
  synth.n = 500;
  synth.min_side = 64;
  synth.max_side = 128;
  synth.aspect_min = 0.4;
  synth.aspect_max = 2.5;
  synth.seed = kDataSeed;
  require(cmd_synth(synth) == 0, "synthesis failed");

  // Learning-rate schedule and epoch count stay at the per-loss
  // defaults (1e-2, decay 0.9 every 10 epochs, 200 epochs).
  TrainOptions train;
  train.data = g_data.string();
  train.out = g_run.string();
  train.loss = "ind-emd";
  train.batch_images = 32;
  train.S = kS;
  train.P = kP;
  train.G = kG;
  train.validation_interval = 2;
  train.channels = "8,16,32";
  train.input_min_side = 32;
  train.seed = kTrainSeed;
  train.split_seed = kSplitSeed;
  require(cmd_train(train) == 0, "training failed");

  // Epoch-0 validation mean EMD vs the best across the run, from the
  // training log (columns: epoch, lr, train loss, LCC, RMSE, mean EMD).
  std::ifstream log(g_run / "train_log.tsv");
  require(static_cast<bool>(log), "missing training log");
  std::string line;
  double epoch0 = -1.0;
  double best = 1e9;
  while (std::getline(log, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string epoch_s, lr_s, loss_s, lcc_s, rmse_s, emd_s;
    std::getline(row, epoch_s, '\t');
    std::getline(row, lr_s, '\t');
    std::getline(row, loss_s, '\t');
    std::getline(row, lcc_s, '\t');
    std::getline(row, rmse_s, '\t');
    std::getline(row, emd_s, '\t');
    if (emd_s.empty() || emd_s == "-") continue;
    const double v = std::stod(emd_s);
    if (epoch_s == "0") epoch0 = v;
    best = std::min(best, v);
  }
  require(epoch0 > 0.0, "no epoch-0 validation row");
  require(best <= 0.5 * epoch0,
          "best mean EMD " + std::to_string(best) + " vs epoch-0 " +
              std::to_string(epoch0) + ": less than a 50% reduction");

  // Test LCC under the 5-patch global-local plan.
  EvalOptions eval;
  eval.data = g_data.string();
  eval.checkpoint = (g_run / "best.ckpt").string();
  eval.out = g_eval.string();
  eval.strategy = "mp-globallocal";
  eval.m = 2;
  eval.S = kS;
  eval.P = kP;
  eval.G = kG;
  eval.sweep = true;  // reused by criterion 8
  eval.split = "test";
  eval.seed = 17;
  eval.split_seed = kSplitSeed;
  require(cmd_eval(eval) == 0, "evaluation failed");

  const json report = json::parse(read_file(g_eval / "report.json"));
  const double lcc_test = report.at("metrics").at("lcc").get<double>();
  require(lcc_test >= 0.7,
          "test LCC " + std::to_string(lcc_test) + " below 0.7");

  const double secs = elapsed_s(start);
  require(secs < 900.0, "training run exceeded 15 minutes");
}

void criterion_8_sweep_report() {
  // Uses the evaluation emitted in criterion 7.
  const json report = json::parse(read_file(g_eval / "report.json"));

  const auto& sweeps = report.at("sweeps");
  for (int n = 1; n <= 10; ++n) {
    require(sweeps.at("mp-random").contains(std::to_string(n)),
            "missing mp-random sweep row " + std::to_string(n));
  }
  for (const int m : {1, 2, 3}) {
    require(sweeps.at("mp-local").contains(std::to_string(m * m)),
            "missing mp-local sweep row");
    require(sweeps.at("mp-globallocal").contains(std::to_string(m * m + 1)),
            "missing mp-globallocal sweep row");
  }

  const auto& bucket_mse = report.at("bucket_mse");
  const auto& bucket_counts = report.at("bucket_counts");
  long long total = 0;
  double recombined = 0.0;
  for (const std::string& label : kAspectBucketLabels) {
    require(bucket_counts.contains(label),
            "test split left bucket " + label + " empty");
    const long long c = bucket_counts.at(label).get<long long>();
    require(c > 0, "test split left bucket " + label + " empty");
    recombined += bucket_mse.at(label).get<double>() * static_cast<double>(c);
    total += c;
  }
  const double global = report.at("metrics").at("mse").get<double>();
  require(std::abs(recombined / static_cast<double>(total) - global) < 1e-9,
          "bucket-weighted MSE does not recombine to the global MSE");
}

void criterion_9_determinism() {
  const fs::path root = fs::temp_directory_path() / "mpa_determinism";
  fs::remove_all(root);
  fs::create_directories(root);

  SynthOptions synth;
  synth.out = (root / "data").string();
  synth.n = 40;
  synth.min_side = 48;
  synth.max_side = 72;
  synth.seed = 3;
  require(cmd_synth(synth) == 0, "synthesis failed");

  auto run_once = [&](const std::string& tag) {
    TrainOptions train;
    train.data = synth.out;
    train.out = (root / ("run_" + tag)).string();
    train.loss = "col-emd";
    train.epochs = 2;
    train.batch_images = 8;
    train.S = 48;
    train.P = 40;
    train.G = 48;
    train.pretrain_epochs = 1;
    train.channels = "4,8";
    train.input_min_side = 24;
    train.seed = 21;
    train.split_seed = 2;
    require(cmd_train(train) == 0, "training failed");

    EvalOptions eval;
    eval.data = synth.out;
    eval.checkpoint = (root / ("run_" + tag) / "best.ckpt").string();
    eval.out = (root / ("eval_" + tag)).string();
    eval.strategy = "mp-random";
    eval.m = 1;
    eval.n = "3";
    eval.S = 48;
    eval.P = 40;
    eval.G = 48;
    eval.split_seed = 2;
    eval.seed = 9;
    require(cmd_eval(eval) == 0, "evaluation failed");
  };
  run_once("a");
  run_once("b");

  for (const std::string f : {"best.ckpt", "last.ckpt", "pretrain_best.ckpt",
                              "train_log.tsv", "best.json"}) {
    require(read_file(root / "run_a" / f) == read_file(root / "run_b" / f),
            f + " differs across identical runs");
  }
  for (const std::string f : {"report.json", "sweep.csv", "ae_histogram.csv",
                              "bucket_mse.csv"}) {
    require(read_file(root / "eval_a" / f) == read_file(root / "eval_b" / f),
            f + " differs across identical runs");
  }
  fs::remove_all(root);
}

void criterion_10_split_arithmetic() {
  std::vector<ManifestEntry> entries(255494);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entries[i].image_path = std::to_string(i);
    entries[i].ratings = {1, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  }
  const Dataset ds = split_dataset(std::move(entries), 1);
  require(ds.indices_of(Split::kTrain).size() == 235054, "train count");
  require(ds.indices_of(Split::kValidation).size() == 10220,
          "validation count");
  require(ds.indices_of(Split::kTest).size() == 10220, "test count");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "r=1 distance equals the transportation oracle (1000 pairs)",
       criterion_1_transport_oracle},
      {2, "metric axioms on 1000 random triples (r in {1,2})",
       criterion_2_metric_axioms},
      {3, "closed-form spot values", criterion_3_spot_values},
      {4, "analytic gradients match finite differences (8 variants + net)",
       criterion_4_gradient_checks},
      {5, "patch geometry over 50 random image shapes",
       criterion_5_patch_geometry},
      {6, "patch-weight curve family", criterion_6_weight_curve},
      {7, "synthetic training effect (mean EMD halves, test LCC >= 0.7)",
       criterion_7_training_effect},
      {8, "strategy sweep and aspect-bucket report", criterion_8_sweep_report},
      {9, "byte-identical train + eval reruns", criterion_9_determinism},
      {10, "92/4/4 split arithmetic at 255,494 entries",
       criterion_10_split_arithmetic},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string verdict = "PASS";
    std::string detail;
    try {
      c.body();
    } catch (const std::exception& e) {
      verdict = "FAIL";
      detail = e.what();
      ++failures;
    }
    std::printf("%s criterion %2d: %s (%.1fs)%s%s\n", verdict.c_str(), c.id,
                c.name.c_str(), elapsed_s(start),
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
  }
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
