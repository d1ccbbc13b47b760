// Test-only scorer whose predictions come from a plain function of the
// patch pixels.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mpa/scorer.hpp"

namespace testutil {

class FunctionScorer final : public mpa::Scorer {
 public:
  using Fn = std::function<std::vector<double>(const mpa::ImageBuffer&)>;

  explicit FunctionScorer(Fn fn) : fn_(std::move(fn)) {}

  int num_classes() const override { return 10; }
  int input_min_side() const override { return 1; }

  std::vector<double> predict(const mpa::ImageBuffer& patch) const override {
    return fn_(patch);
  }
  std::vector<double> forward(const mpa::ImageBuffer& patch) override {
    return fn_(patch);
  }
  mpa::ParamGradients backward(const std::vector<double>&) override {
    throw mpa::StateError("stub scorer has no gradients");
  }
  std::vector<mpa::Tensor>& parameters() override { return params_; }
  const std::vector<mpa::Tensor>& parameters() const override { return params_; }
  void set_parameters(const std::vector<mpa::Tensor>&) override {
    throw mpa::StateError("stub scorer has no parameters");
  }
  std::string config_fingerprint() const override { return "stub"; }

 private:
  Fn fn_;
  std::vector<mpa::Tensor> params_;
};

// Scores a constant-color image by the class its gray level encodes:
// pixel value (c-1)/9 maps to a sharp peak at class c.
inline FunctionScorer class_color_scorer() {
  return FunctionScorer([](const mpa::ImageBuffer& patch) {
    const int cls =
        static_cast<int>(std::lround(static_cast<double>(patch.pixels[0]) * 9.0));
    std::vector<double> logits(10, 0.0);
    logits[static_cast<std::size_t>(cls)] = 40.0;
    return logits;
  });
}

}  // namespace testutil
