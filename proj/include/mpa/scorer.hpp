#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpa/patchgrid.hpp"

namespace mpa {

// Named parameter tensor. Weights live in single precision; reductions
// that produce or consume them accumulate in double.
template <typename S>
struct TensorT {
  std::string name;
  std::vector<int> dims;
  std::vector<S> data;

  std::size_t size() const { return data.size(); }
};

using Tensor = TensorT<float>;
using GradTensor = TensorT<double>;
using ParamGradients = std::vector<GradTensor>;

// Architecture of the built-in patch scorer: a stack of valid 3x3
// stride-2 convolutions with ReLU, global average pooling, and an
// affine head to one logit per rating class. Global pooling makes the
// head independent of the input side, so 299 and 342 patches share one
// model.
struct ScorerConfig {
  std::vector<int> conv_channels = {8, 16, 32};
  int kernel = 3;
  int stride = 2;
  int num_classes = 10;
  int input_min_side = 32;

  void validate() const;
  std::string fingerprint() const;
};

// Compute core, parameterized over the scalar type so tests can run the
// identical arithmetic end to end in double precision. Production code
// uses ConvNet<float> through the Scorer interface below.
template <typename S>
class ConvNet {
 public:
  ConvNet(const ScorerConfig& cfg, std::uint64_t seed);

  const ScorerConfig& config() const { return cfg_; }

  std::vector<double> predict(const ImageBuffer& patch) const;
  std::vector<double> forward(const ImageBuffer& patch);
  ParamGradients backward(const std::vector<double>& grad_logits);

  std::vector<TensorT<S>>& parameters() { return params_; }
  const std::vector<TensorT<S>>& parameters() const { return params_; }

 private:
  struct Activations {
    // stages[0] is the planar input; stages[l+1] the post-ReLU output
    // of conv layer l. dims tracks (width, height) per stage.
    std::vector<std::vector<S>> stages;
    std::vector<std::pair<int, int>> dims;
    std::vector<S> pooled;
  };

  std::vector<double> run_forward(const ImageBuffer& patch,
                                  Activations* acts) const;

  ScorerConfig cfg_;
  std::vector<TensorT<S>> params_;
  Activations cache_;
  bool has_cache_ = false;
};

// Differentiable patch-to-logits map. One in-flight forward/backward
// pair per instance; predict() is side-effect free and safe to call
// from const contexts.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual int num_classes() const = 0;
  virtual int input_min_side() const = 0;

  // Logits without touching the activation cache.
  virtual std::vector<double> predict(const ImageBuffer& patch) const = 0;

  // Logits, caching activations for a following backward().
  virtual std::vector<double> forward(const ImageBuffer& patch) = 0;

  // Parameter gradients for the cached forward pass. Throws StateError
  // when no forward pass has been cached.
  virtual ParamGradients backward(const std::vector<double>& grad_logits) = 0;

  virtual std::vector<Tensor>& parameters() = 0;
  virtual const std::vector<Tensor>& parameters() const = 0;
  virtual void set_parameters(const std::vector<Tensor>& params) = 0;

  virtual std::string config_fingerprint() const = 0;
};

// The built-in scorer.
class ConvScorer final : public Scorer {
 public:
  ConvScorer(const ScorerConfig& cfg, std::uint64_t seed) : net_(cfg, seed) {}

  int num_classes() const override { return net_.config().num_classes; }
  int input_min_side() const override { return net_.config().input_min_side; }
  const ScorerConfig& config() const { return net_.config(); }

  std::vector<double> predict(const ImageBuffer& patch) const override {
    return net_.predict(patch);
  }
  std::vector<double> forward(const ImageBuffer& patch) override {
    return net_.forward(patch);
  }
  ParamGradients backward(const std::vector<double>& grad_logits) override {
    return net_.backward(grad_logits);
  }

  std::vector<Tensor>& parameters() override { return net_.parameters(); }
  const std::vector<Tensor>& parameters() const override {
    return net_.parameters();
  }
  void set_parameters(const std::vector<Tensor>& params) override;

  std::string config_fingerprint() const override {
    return net_.config().fingerprint();
  }

 private:
  ConvNet<float> net_;
};

// Fresh scorer with fan-in-scaled uniform weights and zero biases,
// fully determined by the seed.
ConvScorer init_scorer(const ScorerConfig& cfg, std::uint64_t seed);

// Inverse of ScorerConfig::fingerprint(); lets a checkpoint rebuild its
// architecture without a side channel.
ScorerConfig scorer_config_from_fingerprint(const std::string& fingerprint);

// Momentum SGD with coupled weight decay plus the step-decay schedule.
struct OptimizerConfig {
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double init_lr = 1e-2;
  double decay_factor = 0.9;
  int decay_interval_epochs = 10;

  void validate() const;
};

struct OptimizerState {
  std::vector<Tensor> velocity;
};

OptimizerState make_optimizer_state(const Scorer& scorer);

// v <- momentum*v + (g + weight_decay*w); w <- w - lr*v.
void sgd_step(Scorer& scorer, const ParamGradients& grads,
              OptimizerState& state, const OptimizerConfig& cfg, double lr);

// init_lr * decay_factor^floor(epoch / decay_interval_epochs).
double lr_at_epoch(const OptimizerConfig& cfg, int epoch);

}  // namespace mpa
