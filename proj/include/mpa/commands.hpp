#pragma once

#include <cstdint>
#include <string>

#include "mpa/trainer.hpp"

namespace mpa {

// Command bodies behind the CLI. Each resolves its options, echoes the
// resolved configuration into the output directory (config.txt, in the
// same key=value format --config accepts), runs, and returns 0 on
// success; failures are reported by throwing.

struct SynthOptions {
  std::string out;
  int n = 500;
  int min_side = 64;
  int max_side = 128;
  double aspect_min = 0.4;
  double aspect_max = 2.5;
  int raters = 210;
  std::uint64_t seed = 0;
};

struct TrainOptions {
  std::string data;  // dataset directory or manifest path
  std::string out;
  std::string loss = "ind-emd";
  std::string strategy;  // derived from the loss slug when empty
  double k = 1.2;
  double beta = 0.4;
  double epsilon = 1e-6;
  bool stop_weight_gradient = false;
  int epochs = -1;             // -1: per-loss default
  int batch_images = 32;
  int patches_per_image = -1;  // -1: 8 collective / 1 individual
  int S = 342;
  int P = 299;
  int G = 342;
  double init_lr = -1.0;       // -1: per-loss default
  double decay_factor = -1.0;  // -1: per-loss default
  int decay_interval = -1;     // -1: per-loss default
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int validation_interval = 1;
  int val_grid_m = 1;
  int pretrain_epochs = -1;  // -1: 100 for collective, 0 for individual
  double pretrain_lr = 1e-3;
  double pretrain_decay_factor = 0.95;
  int pretrain_decay_interval = 10;
  std::string channels = "8,16,32";
  int input_min_side = 32;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 11;
};

struct EvalOptions {
  std::string data;
  std::string checkpoint;
  std::string out;
  std::string strategy = "mp-globallocal";
  int m = 3;
  std::string n = "1";  // single count or range "1..10" for mp-random
  int S = 342;
  int P = 299;
  int G = 342;
  bool sweep = false;  // adds the full strategy/patch-count grid
  std::string split = "test";
  std::string baseline;  // earlier report.json for bucket MSE reduction
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 11;
};

struct PredictOptions {
  std::string checkpoint;
  std::string image;
  std::string strategy = "mp-globallocal";
  int m = 3;
  int n = 1;
  int S = 342;
  int P = 299;
  int G = 342;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthOptions& opt);
int cmd_train(const TrainOptions& opt, const StopFlag& stop = {});
int cmd_eval(const EvalOptions& opt);
int cmd_predict(const PredictOptions& opt);

// Per-loss training defaults (learning-rate schedule and epoch count).
struct LossDefaults {
  double init_lr;
  double decay_factor;
  int decay_interval;
  int epochs;
};
LossDefaults loss_defaults(const std::string& slug);

}  // namespace mpa
