#include "mpa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "mpa/metrics.hpp"
#include "mpa/rng.hpp"

namespace mpa {

void TrainPlan::validate() const {
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (batch_images < 1) throw InvalidArgument("batch size must be >= 1");
  if (patches_per_image < 1) {
    throw InvalidArgument("patches per image must be >= 1");
  }
  if (P < 1 || S < 1 || G < 1 || P > S) {
    throw InvalidArgument("training geometry requires 1 <= P <= S");
  }
  if (validation_interval < 1) {
    throw InvalidArgument("validation interval must be >= 1 epoch");
  }
  if (val_grid_m < 1) throw InvalidArgument("validation grid must be >= 1");
  opt.validate();
}

namespace {

ParamGradients make_zero_grads(const Scorer& scorer) {
  ParamGradients grads;
  for (const Tensor& t : scorer.parameters()) {
    GradTensor g;
    g.name = t.name;
    g.dims = t.dims;
    g.data.assign(t.size(), 0.0);
    grads.push_back(std::move(g));
  }
  return grads;
}

void add_grads(ParamGradients& dst, const ParamGradients& src, double scale) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    for (std::size_t j = 0; j < dst[i].data.size(); ++j) {
      dst[i].data[j] += scale * src[i].data[j];
    }
  }
}

void write_log_line(std::ostream* log, const EpochStats& e) {
  if (log == nullptr) return;
  *log << e.epoch << '\t' << e.lr << '\t';
  if (e.has_train_loss) {
    *log << e.train_loss;
  } else {
    *log << '-';
  }
  *log << '\t';
  if (e.validated && !e.val_degenerate) {
    *log << e.val_lcc << '\t' << e.val_rmse << '\t' << e.val_mean_emd;
  } else if (e.validated) {
    *log << "-\t" << e.val_rmse << '\t' << e.val_mean_emd;
  } else {
    *log << "-\t-\t-";
  }
  *log << '\n' << std::flush;
}

// Per-image loss + accumulated parameter gradients for one training
// image. `scale` multiplies the gradient contribution (1/batch).
struct ImageGradFn {
  virtual ~ImageGradFn() = default;
  virtual double accumulate(Scorer& scorer, const ImageBuffer& prepared,
                            const RatingDistribution& truth, Rng& rng,
                            ParamGradients& dst, double scale) const = 0;
};

// Shared per-patch step: forward, per-patch loss term, scaled backward.
double patch_step(Scorer& scorer, const ImageBuffer& patch,
                  const RatingDistribution& truth, const LossSpec& spec,
                  ParamGradients& dst, double scale) {
  const PatchPrediction pred = make_prediction(scorer.forward(patch));
  const double value = per_patch_loss(spec, pred, truth);
  std::vector<double> gl = loss_gradient(spec, pred, truth);
  for (double& v : gl) v *= scale;
  add_grads(dst, scorer.backward(gl), 1.0);
  return value;
}

struct PretrainGrad final : ImageGradFn {
  int P;
  explicit PretrainGrad(int p) : P(p) {}
  double accumulate(Scorer& scorer, const ImageBuffer& prepared,
                    const RatingDistribution& truth, Rng& rng,
                    ParamGradients& dst, double scale) const override {
    Patch patch = random_crop(prepared, P, rng);
    if (rng.uniform() < 0.5) patch.pixels = horizontal_flip(patch.pixels);
    const PatchPrediction pred = make_prediction(scorer.forward(patch.pixels));
    const double value = plain_emd_loss(pred, truth);
    std::vector<double> gl = plain_emd_gradient(pred, truth);
    for (double& v : gl) v *= scale;
    add_grads(dst, scorer.backward(gl), 1.0);
    return value;
  }
};

struct CropGrad final : ImageGradFn {
  LossSpec spec;
  int P;
  int patches_per_image;
  double accumulate(Scorer& scorer, const ImageBuffer& prepared,
                    const RatingDistribution& truth, Rng& rng,
                    ParamGradients& dst, double scale) const override {
    const double patch_scale =
        scale / static_cast<double>(patches_per_image);
    double acc = 0.0;
    for (int i = 0; i < patches_per_image; ++i) {
      const Patch patch = random_crop(prepared, P, rng);
      acc += patch_step(scorer, patch.pixels, truth, spec, dst, patch_scale);
    }
    return acc / static_cast<double>(patches_per_image);
  }
};

enum class Selection { kMinMeanEmd, kMaxLcc };

int pick_best(const std::vector<EpochStats>& history, Selection sel) {
  int best = -1;
  for (const EpochStats& e : history) {
    if (!e.validated) continue;
    if (best < 0) {
      best = e.epoch;
      continue;
    }
    const EpochStats& b = *std::find_if(
        history.begin(), history.end(),
        [&](const EpochStats& x) { return x.epoch == best; });
    if (sel == Selection::kMinMeanEmd) {
      if (e.val_mean_emd < b.val_mean_emd) best = e.epoch;
    } else {
      const double el = e.val_degenerate ? -2.0 : e.val_lcc;
      const double bl = b.val_degenerate ? -2.0 : b.val_lcc;
      if (el > bl || (el == bl && e.val_rmse < b.val_rmse)) best = e.epoch;
    }
  }
  if (best < 0) throw StateError("no validated epochs in history");
  return best;
}

TrainResult run_training(Scorer& scorer, const std::vector<Sample>& train,
                         const std::vector<Sample>& val, const TrainPlan& plan,
                         const ImageGradFn& grad_fn, bool square_resize,
                         Selection selection, std::ostream* log,
                         const StopFlag& stop) {
  plan.validate();
  if (train.empty()) throw EmptyDataset("no training images");
  if (val.empty()) throw EmptyDataset("no validation images");

  // Geometry is fixed for the whole run, so the rescaled copies are
  // computed once. Desk-scale datasets fit in memory comfortably.
  std::vector<ImageBuffer> prepared;
  prepared.reserve(train.size());
  for (const Sample& s : train) {
    prepared.push_back(square_resize
                           ? resize_bilinear(s.image, plan.S, plan.S)
                           : rescale_shorter_edge(s.image, plan.S));
  }

  PatchPlan val_plan;
  val_plan.strategy = TestStrategy::kGlobalLocal;
  val_plan.m = plan.val_grid_m;
  val_plan.P = plan.P;
  val_plan.S = plan.S;
  val_plan.G = plan.G;

  OptimizerState opt_state = make_optimizer_state(scorer);
  Rng master(mix_seed(plan.seed, 0xB00));

  TrainResult result;
  auto validate_into = [&](EpochStats& stats) {
    const SweepRow row = evaluate_plan(scorer, val, val_plan,
                                       mix_seed(plan.seed, 0xEA1), nullptr);
    stats.validated = true;
    stats.val_lcc = row.lcc;
    stats.val_srcc = row.srcc;
    stats.val_rmse = row.rmse;
    stats.val_mean_emd = row.mean_emd;
    stats.val_degenerate = row.degenerate;
  };

  // Epoch 0: the untrained (or donor-initialized) model.
  {
    EpochStats e;
    e.epoch = 0;
    e.lr = lr_at_epoch(plan.opt, 0);
    validate_into(e);
    result.history.push_back(e);
    write_log_line(log, e);
    result.best = snapshot(scorer, opt_state, 0, master.state());
    result.best_epoch = 0;
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= plan.epochs && !result.interrupted; ++epoch) {
    const double lr = lr_at_epoch(plan.opt, epoch - 1);
    shuffle(order, master);

    double loss_acc = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(plan.batch_images)) {
      if (stop && stop()) {
        result.interrupted = true;
        break;
      }
      const std::size_t end =
          std::min(order.size(),
                   start + static_cast<std::size_t>(plan.batch_images));
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      ParamGradients batch_grads = make_zero_grads(scorer);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        Rng rng(mix_seed(mix_seed(plan.seed, 0xC40 + epoch), idx));
        loss_acc += grad_fn.accumulate(scorer, prepared[idx],
                                       train[idx].truth, rng, batch_grads,
                                       inv_batch);
      }
      sgd_step(scorer, batch_grads, opt_state, plan.opt, lr);
    }
    if (result.interrupted) break;

    EpochStats e;
    e.epoch = epoch;
    e.lr = lr;
    e.train_loss = loss_acc / static_cast<double>(train.size());
    e.has_train_loss = true;
    if (epoch % plan.validation_interval == 0 || epoch == plan.epochs) {
      validate_into(e);
    }
    result.history.push_back(e);
    write_log_line(log, e);

    if (e.validated) {
      const int now_best = pick_best(result.history, selection);
      if (now_best == epoch) {
        result.best = snapshot(scorer, opt_state, static_cast<std::uint64_t>(epoch),
                               master.state());
        result.best_epoch = epoch;
      }
    }
  }

  result.last = snapshot(scorer, opt_state,
                         static_cast<std::uint64_t>(result.history.back().epoch),
                         master.state());
  // Leave the scorer holding the best parameters.
  restore(result.best, scorer, nullptr);
  return result;
}

}  // namespace

TrainResult pretrain_square(Scorer& scorer, const std::vector<Sample>& train,
                            const std::vector<Sample>& val,
                            const TrainPlan& plan, std::ostream* log,
                            const StopFlag& stop) {
  if (plan.phase != Phase::kPretrainSquare) {
    throw InvalidArgument("plan phase is not pretrain_square");
  }
  PretrainGrad fn(plan.P);
  return run_training(scorer, train, val, plan, fn, /*square_resize=*/true,
                      Selection::kMinMeanEmd, log, stop);
}

TrainResult train_collective(Scorer& scorer, const std::vector<Sample>& train,
                             const std::vector<Sample>& val,
                             const TrainPlan& plan, std::ostream* log,
                             const StopFlag& stop) {
  if (plan.phase != Phase::kCollective) {
    throw InvalidArgument("plan phase is not collective");
  }
  CropGrad fn;
  fn.spec = plan.loss;
  fn.P = plan.P;
  fn.patches_per_image = plan.patches_per_image;
  return run_training(scorer, train, val, plan, fn, /*square_resize=*/false,
                      Selection::kMaxLcc, log, stop);
}

TrainResult train_individual(Scorer& scorer, const std::vector<Sample>& train,
                             const std::vector<Sample>& val,
                             const TrainPlan& plan, std::ostream* log,
                             const StopFlag& stop) {
  if (plan.phase != Phase::kIndividual) {
    throw InvalidArgument("plan phase is not individual");
  }
  CropGrad fn;
  fn.spec = plan.loss;
  fn.P = plan.P;
  fn.patches_per_image = plan.patches_per_image;
  return run_training(scorer, train, val, plan, fn, /*square_resize=*/false,
                      Selection::kMaxLcc, log, stop);
}

int select_best(const std::vector<EpochStats>& history) {
  return pick_best(history, Selection::kMaxLcc);
}

}  // namespace mpa
