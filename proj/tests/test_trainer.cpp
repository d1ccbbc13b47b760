#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mpa/dataio.hpp"
#include "mpa/trainer.hpp"

using namespace mpa;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

// One small decoded dataset shared by the suite (synthesized once).
const Fixture& fixture() {
  static const Fixture fx = [] {
    const fs::path dir = fs::temp_directory_path() / "mpa_trainer_fixture";
    fs::remove_all(dir);
    SynthParams params;
    params.n = 50;
    params.min_side = 56;
    params.max_side = 88;
    params.seed = 1234;
    synth_generate(params, dir.string());
    const Dataset ds =
        split_dataset(load_manifest((dir / "manifest.jsonl").string()), 99);
    Fixture out;
    out.train = load_split(ds, Split::kTrain);
    out.val = load_split(ds, Split::kValidation);
    return out;
  }();
  return fx;
}

ScorerConfig small_scorer() {
  ScorerConfig cfg;
  cfg.conv_channels = {4, 8};
  cfg.input_min_side = 24;
  return cfg;
}

TrainPlan small_plan(Phase phase, const char* loss_slug) {
  TrainPlan plan;
  plan.phase = phase;
  plan.loss = loss_spec_from_slug(loss_slug);
  plan.epochs = 2;
  plan.batch_images = 8;
  plan.patches_per_image = phase == Phase::kCollective ? 8 : 1;
  plan.S = 56;
  plan.P = 48;
  plan.G = 56;
  plan.seed = 7;
  plan.opt.init_lr = 1e-2;
  plan.opt.decay_factor = 0.9;
  plan.opt.decay_interval_epochs = 10;
  return plan;
}

// Counts training-mode forward passes.
class CountingScorer final : public Scorer {
 public:
  explicit CountingScorer(ConvScorer inner) : inner_(std::move(inner)) {}

  int num_classes() const override { return inner_.num_classes(); }
  int input_min_side() const override { return inner_.input_min_side(); }
  std::vector<double> predict(const ImageBuffer& p) const override {
    return inner_.predict(p);
  }
  std::vector<double> forward(const ImageBuffer& p) override {
    ++forward_calls;
    return inner_.forward(p);
  }
  ParamGradients backward(const std::vector<double>& g) override {
    return inner_.backward(g);
  }
  std::vector<Tensor>& parameters() override { return inner_.parameters(); }
  const std::vector<Tensor>& parameters() const override {
    return inner_.parameters();
  }
  void set_parameters(const std::vector<Tensor>& p) override {
    inner_.set_parameters(p);
  }
  std::string config_fingerprint() const override {
    return inner_.config_fingerprint();
  }

  long long forward_calls = 0;

 private:
  ConvScorer inner_;
};

std::string checkpoint_bytes(const Checkpoint& ckpt) {
  const fs::path tmp =
      fs::temp_directory_path() /
      ("mpa_ckpt_" + std::to_string(reinterpret_cast<std::uintptr_t>(&ckpt)));
  save_checkpoint(ckpt, tmp.string());
  std::ifstream is(tmp, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  fs::remove(tmp);
  return bytes;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("zero learning rate leaves the parameters untouched") {
  const Fixture& fx = fixture();
  for (const Phase phase :
       {Phase::kPretrainSquare, Phase::kIndividual, Phase::kCollective}) {
    ConvScorer scorer = init_scorer(small_scorer(), 5);
    const auto before = scorer.parameters();
    TrainPlan plan = small_plan(phase, phase == Phase::kCollective
                                           ? "col-emd"
                                           : "ind-emd");
    plan.epochs = 1;
    plan.opt.init_lr = 0.0;
    plan.opt.weight_decay = 0.0;
    TrainResult res;
    switch (phase) {
      case Phase::kPretrainSquare:
        res = pretrain_square(scorer, fx.train, fx.val, plan);
        break;
      case Phase::kCollective:
        res = train_collective(scorer, fx.train, fx.val, plan);
        break;
      case Phase::kIndividual:
        res = train_individual(scorer, fx.train, fx.val, plan);
        break;
    }
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(scorer.parameters()[i].data == before[i].data);
    }
    CHECK(res.history.size() == 2);  // epoch 0 plus one trained epoch
  }
}

TEST_CASE("identical plans and seeds give bit-identical checkpoints") {
  const Fixture& fx = fixture();
  const TrainPlan plan = small_plan(Phase::kIndividual, "ind-emd");

  ConvScorer a = init_scorer(small_scorer(), 5);
  ConvScorer b = init_scorer(small_scorer(), 5);
  const TrainResult ra = train_individual(a, fx.train, fx.val, plan);
  const TrainResult rb = train_individual(b, fx.train, fx.val, plan);
  CHECK(checkpoint_bytes(ra.best) == checkpoint_bytes(rb.best));
  CHECK(checkpoint_bytes(ra.last) == checkpoint_bytes(rb.last));
  CHECK(ra.best_epoch == rb.best_epoch);

  // A different seed trains on different patches.
  TrainPlan other = plan;
  other.seed = 8;
  ConvScorer c = init_scorer(small_scorer(), 5);
  const TrainResult rc = train_individual(c, fx.train, fx.val, other);
  CHECK(checkpoint_bytes(rc.last) != checkpoint_bytes(ra.last));
}

TEST_CASE("collective with one patch matches individual exactly") {
  const Fixture& fx = fixture();
  TrainPlan col = small_plan(Phase::kCollective, "col-emd");
  col.patches_per_image = 1;
  TrainPlan ind = small_plan(Phase::kIndividual, "ind-emd");
  ind.patches_per_image = 1;

  ConvScorer a = init_scorer(small_scorer(), 5);
  ConvScorer b = init_scorer(small_scorer(), 5);
  const TrainResult rc = train_collective(a, fx.train, fx.val, col);
  const TrainResult ri = train_individual(b, fx.train, fx.val, ind);
  CHECK(checkpoint_bytes(rc.last) == checkpoint_bytes(ri.last));
}

TEST_CASE("every image contributes exactly patches_per_image patches per epoch") {
  const Fixture& fx = fixture();
  {
    TrainPlan plan = small_plan(Phase::kIndividual, "ind-emd");
    plan.epochs = 3;
    CountingScorer spy(init_scorer(small_scorer(), 5));
    train_individual(spy, fx.train, fx.val, plan);
    CHECK(spy.forward_calls ==
          static_cast<long long>(fx.train.size()) * 3);
  }
  {
    TrainPlan plan = small_plan(Phase::kCollective, "col-emd");
    plan.epochs = 2;
    plan.patches_per_image = 8;
    CountingScorer spy(init_scorer(small_scorer(), 5));
    train_collective(spy, fx.train, fx.val, plan);
    CHECK(spy.forward_calls ==
          static_cast<long long>(fx.train.size()) * 8 * 2);
  }
}

TEST_CASE("select_best follows LCC, then RMSE, then earliest") {
  auto entry = [](int epoch, double lcc, double rmse) {
    EpochStats e;
    e.epoch = epoch;
    e.validated = true;
    e.val_lcc = lcc;
    e.val_rmse = rmse;
    return e;
  };

  CHECK(select_best({entry(0, 0.3, 1.0)}) == 0);
  CHECK(select_best({entry(0, 0.3, 1.0), entry(1, 0.5, 1.2)}) == 1);
  // LCC tie: lower RMSE wins.
  CHECK(select_best({entry(0, 0.5, 1.0), entry(1, 0.5, 0.8)}) == 1);
  // Full tie: earliest wins.
  CHECK(select_best({entry(0, 0.5, 1.0), entry(1, 0.5, 1.0)}) == 0);
  // Strictly improving: last.
  CHECK(select_best({entry(0, 0.1, 1.0), entry(1, 0.2, 1.0),
                     entry(2, 0.3, 1.0)}) == 2);
  // Unvalidated epochs are ignored.
  EpochStats skip;
  skip.epoch = 5;
  CHECK(select_best({entry(0, 0.3, 1.0), skip}) == 0);
  CHECK_THROWS_AS(select_best({}), StateError);
  CHECK_THROWS_AS(select_best({skip}), StateError);
}

TEST_CASE("training log format") {
  const Fixture& fx = fixture();
  TrainPlan plan = small_plan(Phase::kIndividual, "ind-emd");
  plan.epochs = 2;
  ConvScorer scorer = init_scorer(small_scorer(), 5);
  std::ostringstream log;
  train_individual(scorer, fx.train, fx.val, plan, &log);

  std::istringstream lines(log.str());
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    int tabs = 0;
    for (const char c : line) tabs += c == '\t';
    CHECK(tabs == 5);  // epoch, lr, train loss, LCC, RMSE, mean EMD
  }
  CHECK(rows == 3);  // epoch 0 + 2 trained epochs
}

TEST_CASE("collective training trends the validation distance down") {
  const Fixture& fx = fixture();
  TrainPlan plan = small_plan(Phase::kCollective, "col-emd");
  plan.epochs = 8;
  plan.patches_per_image = 8;
  plan.opt.init_lr = 3e-3;
  plan.opt.decay_factor = 0.7;
  plan.opt.decay_interval_epochs = 10;
  ConvScorer scorer = init_scorer(small_scorer(), 5);
  const TrainResult res = train_collective(scorer, fx.train, fx.val, plan);

  std::vector<double> emds;
  for (const EpochStats& e : res.history) {
    if (e.validated) emds.push_back(e.val_mean_emd);
  }
  REQUIRE(emds.size() == 9);
  // Trend over the run, tolerating per-epoch noise: the last three
  // validations average below the first three, and the best beats the
  // untrained model.
  const double head = (emds[0] + emds[1] + emds[2]) / 3.0;
  const double tail = (emds[6] + emds[7] + emds[8]) / 3.0;
  CHECK(tail < head);
  CHECK(*std::min_element(emds.begin(), emds.end()) < emds.front());
}

TEST_CASE("pretraining reduces the validation distance on the fixture") {
  const Fixture& fx = fixture();
  TrainPlan plan = small_plan(Phase::kPretrainSquare, "ind-emd");
  plan.epochs = 6;
  plan.opt.init_lr = 2e-2;
  ConvScorer scorer = init_scorer(small_scorer(), 5);
  const TrainResult res = pretrain_square(scorer, fx.train, fx.val, plan);

  double best = 1e9;
  for (const EpochStats& e : res.history) {
    if (e.validated) best = std::min(best, e.val_mean_emd);
  }
  CHECK(best < res.history.front().val_mean_emd);
  CHECK(res.best_epoch > 0);
}

TEST_CASE("interrupt stops after a batch and still saves state") {
  const Fixture& fx = fixture();
  TrainPlan plan = small_plan(Phase::kIndividual, "ind-emd");
  plan.epochs = 50;
  ConvScorer scorer = init_scorer(small_scorer(), 5);
  int batches = 0;
  const TrainResult res = train_individual(
      scorer, fx.train, fx.val, plan, nullptr,
      [&batches]() { return ++batches > 3; });
  CHECK(res.interrupted);
  CHECK_FALSE(res.last.params.empty());
}

}  // TEST_SUITE
