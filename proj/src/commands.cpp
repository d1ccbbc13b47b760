#include "mpa/commands.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mpa/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mpa {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_u64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%" PRIu64, v);
  return buf;
}

void write_config_echo(const std::string& out_dir,
                       const std::map<std::string, std::string>& kv) {
  std::ofstream os(fs::path(out_dir) / "config.txt", std::ios::trunc);
  if (!os) throw IoError("cannot write config echo under " + out_dir);
  for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
}

std::string manifest_path(const std::string& data) {
  if (fs::is_directory(data)) return (fs::path(data) / "manifest.jsonl").string();
  return data;
}

std::vector<int> parse_channels(const std::string& csv) {
  std::vector<int> out;
  std::istringstream is(csv);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw InvalidArgument("bad channel list: " + csv);
    }
  }
  if (out.empty()) throw InvalidArgument("empty channel list");
  return out;
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation" || name == "val") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw InvalidArgument("unknown split: " + name);
}

ConvScorer scorer_from_checkpoint(const Checkpoint& ckpt) {
  ConvScorer scorer(scorer_config_from_fingerprint(ckpt.fingerprint), 0);
  restore(ckpt, scorer, nullptr);
  return scorer;
}

void write_sweep_csv(const EvalReport& report, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os << "strategy,patch_count,lcc,srcc,mse,rmse,mean_emd,binary_accuracy\n";
  auto row = [&](const SweepRow& r) {
    os << strategy_name(r.strategy) << ',' << r.patch_count << ','
       << fmt_double(r.lcc) << ',' << fmt_double(r.srcc) << ','
       << fmt_double(r.mse) << ',' << fmt_double(r.rmse) << ','
       << fmt_double(r.mean_emd) << ',' << fmt_double(r.binary_accuracy)
       << '\n';
  };
  row(report.primary);
  for (const SweepRow& r : report.sweeps) {
    // The primary configuration already has a row.
    if (r.strategy == report.primary.strategy &&
        r.patch_count == report.primary.patch_count) {
      continue;
    }
    row(r);
  }
}

void write_ae_csv(const EvalReport& report, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os << "bin_lo,bin_hi,count,fraction\n";
  long long total = 0;
  for (const long long c : report.ae_histogram) total += c;
  for (int i = 0; i < kAeHistogramBins; ++i) {
    os << fmt_double(0.1 * i) << ',';
    if (i + 1 < kAeHistogramBins) {
      os << fmt_double(0.1 * (i + 1));
    } else {
      os << "inf";
    }
    const long long c = report.ae_histogram[static_cast<std::size_t>(i)];
    os << ',' << c << ','
       << fmt_double(total > 0 ? static_cast<double>(c) / total : 0.0) << '\n';
  }
}

void write_bucket_csv(const EvalReport& report,
                      const std::map<std::string, double>* baseline,
                      const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os << "bucket,count,mse";
  if (baseline != nullptr) os << ",baseline_mse,mse_reduction";
  os << '\n';
  for (const std::string& label : kAspectBucketLabels) {
    const auto it = report.bucket_mse.find(label);
    if (it == report.bucket_mse.end()) continue;
    os << label << ',' << report.bucket_counts.at(label) << ','
       << fmt_double(it->second);
    if (baseline != nullptr) {
      const auto bit = baseline->find(label);
      if (bit != baseline->end() && bit->second != 0.0) {
        os << ',' << fmt_double(bit->second) << ','
           << fmt_double((bit->second - it->second) / bit->second);
      } else {
        os << ",,";
      }
    }
    os << '\n';
  }
}

}  // namespace

LossDefaults loss_defaults(const std::string& slug) {
  if (slug == "col-emd-simple") return {1e-4, 0.85, 5, 50};
  if (slug == "col-emd-weighted") return {1e-3, 0.85, 5, 50};
  if (slug == "col-emd-log") return {1e-3, 0.7, 10, 50};
  if (slug == "col-emd") return {1e-3, 0.7, 10, 50};
  if (slug == "ind-emd-simple") return {1e-3, 0.9, 10, 200};
  if (slug == "ind-emd-weighted") return {1e-2, 0.9, 10, 200};
  if (slug == "ind-emd-log") return {1e-3, 0.9, 10, 200};
  if (slug == "ind-emd") return {1e-2, 0.9, 10, 200};
  std::string all;
  for (const std::string& s : loss_slugs()) all += " " + s;
  throw InvalidArgument("unknown loss variant '" + slug +
                        "'; valid variants:" + all);
}

int cmd_synth(const SynthOptions& opt) {
  if (opt.out.empty()) throw InvalidArgument("--out is required");
  SynthParams params;
  params.n = opt.n;
  params.min_side = opt.min_side;
  params.max_side = opt.max_side;
  params.aspect_min = opt.aspect_min;
  params.aspect_max = opt.aspect_max;
  params.seed = opt.seed;
  params.raters = opt.raters;
  fs::create_directories(opt.out);
  write_config_echo(opt.out,
                    {{"n", std::to_string(opt.n)},
                     {"min-side", std::to_string(opt.min_side)},
                     {"max-side", std::to_string(opt.max_side)},
                     {"aspect-min", fmt_double(opt.aspect_min)},
                     {"aspect-max", fmt_double(opt.aspect_max)},
                     {"raters", std::to_string(opt.raters)},
                     {"seed", fmt_u64(opt.seed)},
                     {"out", opt.out}});
  synth_generate(params, opt.out);
  std::cout << "wrote " << opt.n << " images under " << opt.out << "\n";
  return 0;
}

int cmd_train(const TrainOptions& opt, const StopFlag& stop) {
  if (opt.data.empty() || opt.out.empty()) {
    throw InvalidArgument("--data and --out are required");
  }
  LossSpec spec = loss_spec_from_slug(opt.loss);
  spec.params.k = opt.k;
  spec.params.beta = opt.beta;
  spec.params.epsilon = opt.epsilon;
  spec.params.validate();
  spec.stop_weight_gradient = opt.stop_weight_gradient;

  const std::string derived_strategy =
      spec.strategy == Strategy::kCollective ? "collective" : "individual";
  if (!opt.strategy.empty() && opt.strategy != derived_strategy) {
    throw InvalidArgument("--strategy " + opt.strategy +
                          " conflicts with loss variant " + opt.loss);
  }
  const bool collective = spec.strategy == Strategy::kCollective;

  const LossDefaults defaults = loss_defaults(opt.loss);
  TrainPlan plan;
  plan.phase = collective ? Phase::kCollective : Phase::kIndividual;
  plan.loss = spec;
  plan.epochs = opt.epochs >= 0 ? opt.epochs : defaults.epochs;
  plan.batch_images = opt.batch_images;
  plan.patches_per_image =
      opt.patches_per_image >= 1 ? opt.patches_per_image : (collective ? 8 : 1);
  plan.S = opt.S;
  plan.P = opt.P;
  plan.G = opt.G;
  plan.seed = opt.seed;
  plan.validation_interval = opt.validation_interval;
  plan.val_grid_m = opt.val_grid_m;
  plan.opt.momentum = opt.momentum;
  plan.opt.weight_decay = opt.weight_decay;
  plan.opt.init_lr = opt.init_lr >= 0 ? opt.init_lr : defaults.init_lr;
  plan.opt.decay_factor =
      opt.decay_factor > 0 ? opt.decay_factor : defaults.decay_factor;
  plan.opt.decay_interval_epochs =
      opt.decay_interval >= 1 ? opt.decay_interval : defaults.decay_interval;
  plan.validate();

  const int pretrain_epochs =
      opt.pretrain_epochs >= 0 ? opt.pretrain_epochs : (collective ? 100 : 0);

  ScorerConfig cfg;
  cfg.conv_channels = parse_channels(opt.channels);
  cfg.input_min_side = opt.input_min_side;
  cfg.validate();
  if (cfg.input_min_side > plan.P) {
    throw InvalidArgument("training crop side P is below the scorer's minimum");
  }

  fs::create_directories(opt.out);
  write_config_echo(
      opt.out,
      {{"data", opt.data},
       {"out", opt.out},
       {"loss", opt.loss},
       {"strategy", derived_strategy},
       {"k", fmt_double(spec.params.k)},
       {"beta", fmt_double(spec.params.beta)},
       {"epsilon", fmt_double(spec.params.epsilon)},
       {"stop-weight-gradient", opt.stop_weight_gradient ? "true" : "false"},
       {"epochs", std::to_string(plan.epochs)},
       {"batch-images", std::to_string(plan.batch_images)},
       {"patches-per-image", std::to_string(plan.patches_per_image)},
       {"s", std::to_string(plan.S)},
       {"p", std::to_string(plan.P)},
       {"g", std::to_string(plan.G)},
       {"init-lr", fmt_double(plan.opt.init_lr)},
       {"decay-factor", fmt_double(plan.opt.decay_factor)},
       {"decay-interval", std::to_string(plan.opt.decay_interval_epochs)},
       {"momentum", fmt_double(plan.opt.momentum)},
       {"weight-decay", fmt_double(plan.opt.weight_decay)},
       {"validation-interval", std::to_string(plan.validation_interval)},
       {"val-grid-m", std::to_string(plan.val_grid_m)},
       {"pretrain-epochs", std::to_string(pretrain_epochs)},
       {"pretrain-lr", fmt_double(opt.pretrain_lr)},
       {"pretrain-decay-factor", fmt_double(opt.pretrain_decay_factor)},
       {"pretrain-decay-interval", std::to_string(opt.pretrain_decay_interval)},
       {"channels", opt.channels},
       {"input-min-side", std::to_string(opt.input_min_side)},
       {"seed", fmt_u64(opt.seed)},
       {"split-seed", fmt_u64(opt.split_seed)}});

  Dataset ds = split_dataset(load_manifest(manifest_path(opt.data)),
                             opt.split_seed);
  const std::vector<Sample> train = load_split(ds, Split::kTrain);
  const std::vector<Sample> val = load_split(ds, Split::kValidation);
  std::cout << "dataset: " << train.size() << " train / " << val.size()
            << " validation images\n";

  ConvScorer scorer = init_scorer(cfg, mix_seed(opt.seed, 0x171));

  if (collective && pretrain_epochs > 0) {
    TrainPlan pre = plan;
    pre.phase = Phase::kPretrainSquare;
    pre.epochs = pretrain_epochs;
    pre.patches_per_image = 1;
    pre.opt.init_lr = opt.pretrain_lr;
    pre.opt.decay_factor = opt.pretrain_decay_factor;
    pre.opt.decay_interval_epochs = opt.pretrain_decay_interval;
    std::ofstream log(fs::path(opt.out) / "pretrain_log.tsv", std::ios::trunc);
    log << "# epoch\tlr\ttrain_loss\tval_lcc\tval_rmse\tval_mean_emd\n";
    std::cout << "pre-training for " << pre.epochs << " epochs\n";
    TrainResult res = pretrain_square(scorer, train, val, pre, &log, stop);
    save_checkpoint(res.best, (fs::path(opt.out) / "pretrain_best.ckpt").string());
    if (res.interrupted) {
      std::cout << "interrupted; pretrain checkpoint saved\n";
      return 3;
    }
  }

  std::ofstream log(fs::path(opt.out) / "train_log.tsv", std::ios::trunc);
  log << "# epoch\tlr\ttrain_loss\tval_lcc\tval_rmse\tval_mean_emd\n";
  std::cout << "training " << opt.loss << " for " << plan.epochs
            << " epochs\n";
  TrainResult res = collective
                        ? train_collective(scorer, train, val, plan, &log, stop)
                        : train_individual(scorer, train, val, plan, &log, stop);

  save_checkpoint(res.best, (fs::path(opt.out) / "best.ckpt").string());
  save_checkpoint(res.last, (fs::path(opt.out) / "last.ckpt").string());

  const EpochStats* best_row = nullptr;
  for (const EpochStats& e : res.history) {
    if (e.epoch == res.best_epoch) best_row = &e;
  }
  json marker;
  marker["phase"] = derived_strategy;
  marker["best_epoch"] = res.best_epoch;
  marker["checkpoint"] = "best.ckpt";
  if (best_row != nullptr) {
    marker["val_lcc"] = best_row->val_lcc;
    marker["val_rmse"] = best_row->val_rmse;
    marker["val_mean_emd"] = best_row->val_mean_emd;
  }
  std::ofstream bm(fs::path(opt.out) / "best.json", std::ios::trunc);
  bm << marker.dump(2) << "\n";

  if (res.interrupted) {
    std::cout << "interrupted; checkpoints saved\n";
    return 3;
  }
  std::cout << "best epoch " << res.best_epoch << "; checkpoints under "
            << opt.out << "\n";
  return 0;
}

int cmd_eval(const EvalOptions& opt) {
  if (opt.data.empty() || opt.checkpoint.empty() || opt.out.empty()) {
    throw InvalidArgument("--data, --checkpoint and --out are required");
  }
  PatchPlan primary;
  primary.strategy = strategy_from_name(opt.strategy);
  primary.m = opt.m;
  primary.S = opt.S;
  primary.P = opt.P;
  primary.G = opt.G;

  // --n accepts "K" or a range "A..B" (sweeps the random strategy).
  int n_lo = 1;
  int n_hi = 1;
  {
    const auto dots = opt.n.find("..");
    try {
      if (dots == std::string::npos) {
        n_lo = n_hi = std::stoi(opt.n);
      } else {
        n_lo = std::stoi(opt.n.substr(0, dots));
        n_hi = std::stoi(opt.n.substr(dots + 2));
      }
    } catch (const std::exception&) {
      throw InvalidArgument("bad --n value: " + opt.n);
    }
    if (n_lo < 1 || n_hi < n_lo) {
      throw InvalidArgument("bad --n range: " + opt.n);
    }
  }
  primary.n_random = n_hi;
  primary.validate();

  std::vector<PatchPlan> sweep_plans;
  if (n_hi > n_lo) {
    if (primary.strategy != TestStrategy::kRandom) {
      throw InvalidArgument("--n ranges apply to mp-random only");
    }
    for (int n = n_lo; n <= n_hi; ++n) {
      PatchPlan p = primary;
      p.n_random = n;
      sweep_plans.push_back(p);
    }
  }
  if (opt.sweep) {
    for (const PatchPlan& p : standard_sweep_plans(primary)) {
      const bool dup =
          std::any_of(sweep_plans.begin(), sweep_plans.end(),
                      [&](const PatchPlan& q) {
                        return q.strategy == p.strategy &&
                               q.patch_count() == p.patch_count();
                      });
      if (!dup) sweep_plans.push_back(p);
    }
  }

  fs::create_directories(opt.out);
  write_config_echo(opt.out,
                    {{"data", opt.data},
                     {"checkpoint", opt.checkpoint},
                     {"out", opt.out},
                     {"strategy", opt.strategy},
                     {"m", std::to_string(opt.m)},
                     {"n", opt.n},
                     {"s", std::to_string(opt.S)},
                     {"p", std::to_string(opt.P)},
                     {"g", std::to_string(opt.G)},
                     {"sweep", opt.sweep ? "true" : "false"},
                     {"split", opt.split},
                     {"baseline", opt.baseline},
                     {"seed", fmt_u64(opt.seed)},
                     {"split-seed", fmt_u64(opt.split_seed)}});

  const ConvScorer scorer = scorer_from_checkpoint(load_checkpoint(opt.checkpoint));
  Dataset ds = split_dataset(load_manifest(manifest_path(opt.data)),
                             opt.split_seed);
  const std::vector<Sample> samples = load_split(ds, split_from_name(opt.split));
  if (samples.empty()) throw EmptyDataset("selected split is empty");

  const EvalReport report =
      evaluate(scorer, samples, primary, sweep_plans, opt.seed);

  std::ofstream rj(fs::path(opt.out) / "report.json", std::ios::trunc);
  if (!rj) throw IoError("cannot write report under " + opt.out);
  rj << report_to_json(report) << "\n";
  write_sweep_csv(report, (fs::path(opt.out) / "sweep.csv").string());
  write_ae_csv(report, (fs::path(opt.out) / "ae_histogram.csv").string());

  std::map<std::string, double> baseline;
  bool have_baseline = false;
  if (!opt.baseline.empty()) {
    std::ifstream bs(opt.baseline);
    if (!bs) throw IoError("cannot open baseline report: " + opt.baseline);
    json bj;
    try {
      bs >> bj;
    } catch (const json::exception& e) {
      throw ParseError(std::string("baseline report: ") + e.what());
    }
    for (const auto& [label, v] : bj.at("bucket_mse").items()) {
      baseline[label] = v.get<double>();
    }
    have_baseline = true;
  }
  write_bucket_csv(report, have_baseline ? &baseline : nullptr,
                   (fs::path(opt.out) / "bucket_mse.csv").string());

  const SweepRow& r = report.primary;
  std::cout << "n=" << report.per_image.size() << " strategy=" << opt.strategy
            << " patches=" << r.patch_count << " lcc=" << r.lcc
            << " srcc=" << r.srcc << " mse=" << r.mse << " rmse=" << r.rmse
            << " mean_emd=" << r.mean_emd << " acc=" << r.binary_accuracy
            << "\n";
  return 0;
}

int cmd_predict(const PredictOptions& opt) {
  if (opt.checkpoint.empty() || opt.image.empty()) {
    throw InvalidArgument("--checkpoint and --image are required");
  }
  PatchPlan plan;
  plan.strategy = strategy_from_name(opt.strategy);
  plan.m = opt.m;
  plan.n_random = opt.n;
  plan.S = opt.S;
  plan.P = opt.P;
  plan.G = opt.G;
  plan.validate();

  const ConvScorer scorer = scorer_from_checkpoint(load_checkpoint(opt.checkpoint));
  const ImageBuffer img = decode_image(opt.image);
  Rng rng(opt.seed);
  const std::vector<Patch> patches = select_test_patches(img, plan, rng);
  std::vector<RatingDistribution> dists;
  for (const Patch& p : patches) {
    dists.push_back(
        RatingDistribution::from_probs(softmax(scorer.predict(p.pixels))));
  }
  const RatingDistribution agg = aggregate_patches(dists);

  std::cout << "class probabilities:";
  for (int i = 0; i < agg.num_classes(); ++i) std::cout << ' ' << agg[i];
  std::cout << "\naesthetics score: " << mean_score(agg) << "\n";
  return 0;
}

}  // namespace mpa
