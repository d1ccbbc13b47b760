// Command-line front end: dataset synthesis, training, evaluation, and
// single-image prediction.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 runtime
// failure. A --config file supplies key=value defaults (same keys as
// the long flags, and the same format the resolved-config echo uses);
// flags given on the command line win.

#include <algorithm>
#include <csignal>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpa/commands.hpp"

namespace {

volatile std::sig_atomic_t g_interrupted = 0;

void handle_sigint(int) { g_interrupted = 1; }

// Reads key=value lines; '#' starts a comment.
std::vector<std::string> config_to_flags(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw mpa::IoError("cannot open config file: " + path);
  std::vector<std::string> flags;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw mpa::InvalidArgument("config line is not key=value: " + line);
    }
    flags.push_back("--" + line);
  }
  return flags;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-patch aesthetics scorer"};
  app.require_subcommand(1);
  // Lets config-file values be overridden by explicit flags.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  mpa::SynthOptions synth;
  CLI::App* s = app.add_subcommand("synth", "generate a synthetic dataset");
  s->add_option("--out", synth.out, "output dataset directory")->required();
  s->add_option("--n", synth.n, "number of images");
  s->add_option("--min-side", synth.min_side, "minimum shorter edge [px]");
  s->add_option("--max-side", synth.max_side, "maximum shorter edge [px]");
  s->add_option("--aspect-min", synth.aspect_min, "minimum height/width");
  s->add_option("--aspect-max", synth.aspect_max, "maximum height/width");
  s->add_option("--raters", synth.raters, "votes behind each histogram");
  s->add_option("--seed", synth.seed, "generation seed");

  mpa::TrainOptions train;
  CLI::App* t = app.add_subcommand("train", "train a scorer");
  t->add_option("--data", train.data, "dataset directory or manifest")->required();
  t->add_option("--out", train.out, "output directory")->required();
  t->add_option("--loss", train.loss,
                "loss variant: col-emd[-simple|-weighted|-log] or "
                "ind-emd[-simple|-weighted|-log]");
  t->add_option("--strategy", train.strategy,
                "collective|individual (implied by --loss)");
  t->add_option("--k", train.k, "certainty expansion coefficient");
  t->add_option("--beta", train.beta, "patch weight exponent");
  t->add_option("--epsilon", train.epsilon, "certainty clamp floor");
  t->add_option("--stop-weight-gradient", train.stop_weight_gradient,
                "treat the patch weight as constant when differentiating");
  t->add_option("--epochs", train.epochs, "epochs (-1: per-loss default)");
  t->add_option("--batch-images", train.batch_images, "images per mini-batch");
  t->add_option("--patches-per-image", train.patches_per_image,
                "patches per image per epoch (-1: 8 collective / 1 individual)");
  t->add_option("--s", train.S, "shorter-edge rescale target [px]");
  t->add_option("--p", train.P, "training crop side [px]");
  t->add_option("--g", train.G, "global patch side [px]");
  t->add_option("--init-lr", train.init_lr,
                "initial learning rate (-1: per-loss default)");
  t->add_option("--decay-factor", train.decay_factor,
                "lr decay factor (-1: per-loss default)");
  t->add_option("--decay-interval", train.decay_interval,
                "lr decay interval in epochs (-1: per-loss default)");
  t->add_option("--momentum", train.momentum, "SGD momentum");
  t->add_option("--weight-decay", train.weight_decay, "weight decay rate");
  t->add_option("--validation-interval", train.validation_interval,
                "epochs between validations");
  t->add_option("--val-grid-m", train.val_grid_m,
                "validation grid side (mp-globallocal)");
  t->add_option("--pretrain-epochs", train.pretrain_epochs,
                "square-resize pre-training epochs (-1: 100 for collective, "
                "0 for individual)");
  t->add_option("--pretrain-lr", train.pretrain_lr, "pre-training learning rate");
  t->add_option("--pretrain-decay-factor", train.pretrain_decay_factor,
                "pre-training lr decay factor");
  t->add_option("--pretrain-decay-interval", train.pretrain_decay_interval,
                "pre-training lr decay interval [epochs]");
  t->add_option("--channels", train.channels, "conv channels, e.g. 8,16,32");
  t->add_option("--input-min-side", train.input_min_side,
                "smallest patch side the scorer accepts");
  t->add_option("--seed", train.seed, "run seed");
  t->add_option("--split-seed", train.split_seed, "dataset split seed");

  mpa::EvalOptions eval;
  CLI::App* e = app.add_subcommand("eval", "evaluate a checkpoint");
  e->add_option("--data", eval.data, "dataset directory or manifest")->required();
  e->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  e->add_option("--out", eval.out, "output directory")->required();
  e->add_option("--strategy", eval.strategy,
                "mp-random|mp-local|mp-globallocal");
  e->add_option("--m", eval.m, "grid side for fixed-location strategies");
  e->add_option("--n", eval.n,
                "random patch count, single value or range like 1..10");
  e->add_option("--s", eval.S, "shorter-edge rescale target [px]");
  e->add_option("--p", eval.P, "local patch side [px]");
  e->add_option("--g", eval.G, "global patch side [px]");
  e->add_option("--sweep", eval.sweep,
                "also evaluate the full strategy/patch-count grid");
  e->add_option("--split", eval.split, "train|validation|test");
  e->add_option("--baseline", eval.baseline,
                "earlier report.json for bucket MSE reduction rates");
  e->add_option("--seed", eval.seed, "random-crop seed");
  e->add_option("--split-seed", eval.split_seed, "dataset split seed");

  mpa::PredictOptions predict;
  CLI::App* p = app.add_subcommand("predict", "score one image");
  p->add_option("--checkpoint", predict.checkpoint, "checkpoint file")->required();
  p->add_option("--image", predict.image, "image file (png/jpeg)")->required();
  p->add_option("--strategy", predict.strategy,
                "mp-random|mp-local|mp-globallocal");
  p->add_option("--m", predict.m, "grid side");
  p->add_option("--n", predict.n, "random patch count");
  p->add_option("--s", predict.S, "shorter-edge rescale target [px]");
  p->add_option("--p", predict.P, "local patch side [px]");
  p->add_option("--g", predict.G, "global patch side [px]");
  p->add_option("--seed", predict.seed, "random-crop seed");

  // Splice config-file values in right after the subcommand token so
  // explicit flags (parsed later, TakeLast) override them.
  std::vector<std::string> args;
  try {
    std::string config_path;
    for (int i = 1; i < argc; ++i) {
      const std::string a = argv[i];
      if (a == "--config") {
        if (i + 1 >= argc) {
          std::cerr << "--config needs a path\n";
          return 1;
        }
        config_path = argv[++i];
      } else if (a.rfind("--config=", 0) == 0) {
        config_path = a.substr(9);
      } else {
        args.push_back(a);
      }
    }
    if (!config_path.empty()) {
      if (args.empty()) {
        std::cerr << "--config requires a subcommand\n";
        return 1;
      }
      const std::vector<std::string> extra = config_to_flags(config_path);
      args.insert(args.begin() + 1, extra.begin(), extra.end());
    }
  } catch (const mpa::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }

  try {
    std::reverse(args.begin(), args.end());  // CLI11's vector convention
    app.parse(args);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  std::signal(SIGINT, handle_sigint);
  const auto stop = []() { return g_interrupted != 0; };

  try {
    if (*s) return mpa::cmd_synth(synth);
    if (*t) return mpa::cmd_train(train, stop);
    if (*e) return mpa::cmd_eval(eval);
    if (*p) return mpa::cmd_predict(predict);
  } catch (const mpa::InvalidArgument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const mpa::DecodeError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const mpa::ParseError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const mpa::SchemaError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const mpa::EmptyDataset& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const mpa::IoError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 3;
  }
  return 1;
}
