#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "mpa/checkpoint.hpp"
#include "mpa/dataio.hpp"
#include "mpa/loss.hpp"
#include "mpa/scorer.hpp"

namespace mpa {

enum class Phase { kPretrainSquare, kCollective, kIndividual };

// One training run. An epoch is a full pass over the training images in
// a freshly shuffled seeded order; every image contributes exactly
// patches_per_image patches per epoch, drawn fresh (no reuse).
struct TrainPlan {
  Phase phase = Phase::kIndividual;
  LossSpec loss;
  int epochs = 200;
  int batch_images = 32;
  int patches_per_image = 1;  // 8 for the collective phase
  int S = 342;                // shorter-edge rescale target
  int P = 299;                // training crop side
  int G = 342;                // global patch side (validation plan)
  std::uint64_t seed = 0;
  int validation_interval = 1;
  int val_grid_m = 1;  // validation uses mp-globallocal with this grid
  OptimizerConfig opt;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  bool has_train_loss = false;
  bool validated = false;
  double val_lcc = 0.0;
  double val_srcc = 0.0;
  double val_rmse = 0.0;
  double val_mean_emd = 0.0;
  bool val_degenerate = false;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<EpochStats> history;
  int best_epoch = 0;
  bool interrupted = false;
};

// Polled between batches; return true to stop after saving state.
using StopFlag = std::function<bool()>;

// Square-resize pre-training: every image resized to S x S, one random
// P-crop with a 50% horizontal flip per epoch, plain distance loss.
// Model selection minimizes validation mean EMD. The scorer is left
// holding the best parameters.
TrainResult pretrain_square(Scorer& scorer, const std::vector<Sample>& train,
                            const std::vector<Sample>& val,
                            const TrainPlan& plan, std::ostream* log = nullptr,
                            const StopFlag& stop = {});

// Collective strategy: patches_per_image fresh random aspect-preserving
// crops per image per epoch, averaged into one per-image loss; one
// optimizer step per mini-batch. Model selection maximizes validation
// LCC (ties: lower RMSE, then earlier epoch).
TrainResult train_collective(Scorer& scorer, const std::vector<Sample>& train,
                             const std::vector<Sample>& val,
                             const TrainPlan& plan, std::ostream* log = nullptr,
                             const StopFlag& stop = {});

// Individual strategy: one random crop per image per epoch; batches mix
// patches from different images. Same model selection as collective.
TrainResult train_individual(Scorer& scorer, const std::vector<Sample>& train,
                             const std::vector<Sample>& val,
                             const TrainPlan& plan, std::ostream* log = nullptr,
                             const StopFlag& stop = {});

// Epoch with the highest validation LCC; ties broken by lowest RMSE,
// then earliest epoch. Only validated entries count.
int select_best(const std::vector<EpochStats>& history);

}  // namespace mpa
