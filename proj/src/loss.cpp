#include "mpa/loss.hpp"

#include <algorithm>
#include <cmath>

namespace mpa {

namespace {

// Per-patch term as a function of the certainty e.
double variant_value(const LossSpec& spec, double e) {
  const double w =
      spec.use_weight ? patch_weight(e, spec.params.beta) : 1.0;
  const double body = spec.use_log ? std::log(e) : e;
  return -w * body;
}

// d(term)/de, honoring the stop-weight-gradient switch.
double variant_derivative(const LossSpec& spec, double e) {
  const double beta = spec.params.beta;
  const double w = spec.use_weight ? patch_weight(e, beta) : 1.0;
  const double dw =
      (spec.use_weight && !spec.stop_weight_gradient)
          ? -beta * std::pow(e, beta - 1.0)
          : 0.0;
  const double body = spec.use_log ? std::log(e) : e;
  const double dbody = spec.use_log ? 1.0 / e : 1.0;
  return -(dw * body + w * dbody);
}

}  // namespace

std::vector<double> softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

PatchPrediction make_prediction(std::vector<double> logits) {
  auto dist = RatingDistribution::from_probs(softmax(logits));
  return PatchPrediction{std::move(logits), std::move(dist)};
}

double per_patch_loss(const LossSpec& spec, const PatchPrediction& pred,
                      const RatingDistribution& truth) {
  spec.params.validate();
  const double d = emd(pred.dist, truth, spec.params.r);
  const double e = emd_certainty(d, spec.params);
  return variant_value(spec, e);
}

double collective_loss(const LossSpec& spec,
                       const std::vector<PatchPrediction>& preds,
                       const RatingDistribution& truth) {
  if (preds.empty()) throw EmptyPatchSet("collective loss over no patches");
  double acc = 0.0;
  for (const PatchPrediction& p : preds) acc += per_patch_loss(spec, p, truth);
  return acc / static_cast<double>(preds.size());
}

std::vector<double> loss_gradient(const LossSpec& spec,
                                  const PatchPrediction& pred,
                                  const RatingDistribution& truth) {
  spec.params.validate();
  if (spec.params.r != 2.0) {
    throw InvalidArgument("loss gradients are defined for r = 2 only");
  }
  const int n = truth.num_classes();
  if (pred.dist.num_classes() != n) {
    throw DimensionMismatch("prediction and truth class counts differ");
  }

  const std::vector<double>& q = pred.dist.probs();
  const std::vector<double>& t = truth.probs();
  std::vector<double> zero(static_cast<std::size_t>(n), 0.0);

  // Cumulative differences D_j = CDF_pred(j) - CDF_truth(j).
  std::vector<double> d(static_cast<std::size_t>(n));
  double acc = 0.0;
  double sumsq = 0.0;
  for (int j = 0; j < n; ++j) {
    acc += q[static_cast<std::size_t>(j)] - t[static_cast<std::size_t>(j)];
    d[static_cast<std::size_t>(j)] = acc;
    sumsq += acc * acc;
  }
  const double dist = std::sqrt(sumsq / static_cast<double>(n));
  if (dist == 0.0) return zero;  // loss minimum; subgradient 0

  const double raw = 1.0 - spec.params.k * dist;
  if (raw < spec.params.epsilon) return zero;  // certainty clamp active
  const double e = raw;

  const double dl_de = variant_derivative(spec, e);
  const double de_ddist = -spec.params.k;

  // dDist/dq_j = (1/(N*dist)) * sum_{m >= j} D_m, via a suffix sum.
  std::vector<double> grad_q(static_cast<std::size_t>(n));
  double suffix = 0.0;
  for (int j = n - 1; j >= 0; --j) {
    suffix += d[static_cast<std::size_t>(j)];
    grad_q[static_cast<std::size_t>(j)] =
        dl_de * de_ddist * suffix / (static_cast<double>(n) * dist);
  }

  // Chain through softmax: dL/dz_i = q_i * (g_i - sum_j g_j q_j).
  double dot = 0.0;
  for (int j = 0; j < n; ++j) {
    dot += grad_q[static_cast<std::size_t>(j)] * q[static_cast<std::size_t>(j)];
  }
  std::vector<double> grad_z(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    grad_z[static_cast<std::size_t>(i)] =
        q[static_cast<std::size_t>(i)] *
        (grad_q[static_cast<std::size_t>(i)] - dot);
  }
  return grad_z;
}

double plain_emd_loss(const PatchPrediction& pred,
                      const RatingDistribution& truth) {
  return emd(pred.dist, truth, 2.0);
}

std::vector<double> plain_emd_gradient(const PatchPrediction& pred,
                                       const RatingDistribution& truth) {
  const int n = truth.num_classes();
  if (pred.dist.num_classes() != n) {
    throw DimensionMismatch("prediction and truth class counts differ");
  }
  const std::vector<double>& q = pred.dist.probs();
  const std::vector<double>& t = truth.probs();
  std::vector<double> grad_z(static_cast<std::size_t>(n), 0.0);

  std::vector<double> d(static_cast<std::size_t>(n));
  double acc = 0.0;
  double sumsq = 0.0;
  for (int j = 0; j < n; ++j) {
    acc += q[static_cast<std::size_t>(j)] - t[static_cast<std::size_t>(j)];
    d[static_cast<std::size_t>(j)] = acc;
    sumsq += acc * acc;
  }
  const double dist = std::sqrt(sumsq / static_cast<double>(n));
  if (dist == 0.0) return grad_z;

  std::vector<double> grad_q(static_cast<std::size_t>(n));
  double suffix = 0.0;
  for (int j = n - 1; j >= 0; --j) {
    suffix += d[static_cast<std::size_t>(j)];
    grad_q[static_cast<std::size_t>(j)] =
        suffix / (static_cast<double>(n) * dist);
  }
  double dot = 0.0;
  for (int j = 0; j < n; ++j) {
    dot += grad_q[static_cast<std::size_t>(j)] * q[static_cast<std::size_t>(j)];
  }
  for (int i = 0; i < n; ++i) {
    grad_z[static_cast<std::size_t>(i)] =
        q[static_cast<std::size_t>(i)] *
        (grad_q[static_cast<std::size_t>(i)] - dot);
  }
  return grad_z;
}

namespace {

[[noreturn]] void throw_unknown_variant(const std::string& slug) {
  std::string all;
  for (const std::string& s : loss_slugs()) all += " " + s;
  throw InvalidArgument("unknown loss variant '" + slug +
                        "'; valid variants:" + all);
}

}  // namespace

LossSpec loss_spec_from_slug(const std::string& slug) {
  LossSpec spec;
  std::string rest;
  if (slug.rfind("col-emd", 0) == 0) {
    spec.strategy = Strategy::kCollective;
    rest = slug.substr(7);
  } else if (slug.rfind("ind-emd", 0) == 0) {
    spec.strategy = Strategy::kIndividual;
    rest = slug.substr(7);
  } else {
    throw_unknown_variant(slug);
  }
  if (rest.empty()) {
    spec.use_log = true;
    spec.use_weight = true;
  } else if (rest == "-simple") {
    spec.use_log = false;
    spec.use_weight = false;
  } else if (rest == "-weighted") {
    spec.use_log = false;
    spec.use_weight = true;
  } else if (rest == "-log") {
    spec.use_log = true;
    spec.use_weight = false;
  } else {
    throw_unknown_variant(slug);
  }
  return spec;
}

std::string loss_slug(const LossSpec& spec) {
  std::string s =
      spec.strategy == Strategy::kCollective ? "col-emd" : "ind-emd";
  if (spec.use_log && spec.use_weight) return s;
  if (!spec.use_log && !spec.use_weight) return s + "-simple";
  if (spec.use_weight) return s + "-weighted";
  return s + "-log";
}

const std::vector<std::string>& loss_slugs() {
  static const std::vector<std::string> kSlugs = {
      "col-emd-simple", "col-emd-weighted", "col-emd-log", "col-emd",
      "ind-emd-simple", "ind-emd-weighted", "ind-emd-log", "ind-emd"};
  return kSlugs;
}

}  // namespace mpa
