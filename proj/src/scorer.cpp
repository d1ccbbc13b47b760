#include "mpa/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mpa/rng.hpp"

namespace mpa {

void ScorerConfig::validate() const {
  if (conv_channels.empty()) {
    throw InvalidArgument("scorer needs at least one conv layer");
  }
  for (const int c : conv_channels) {
    if (c < 1) throw InvalidArgument("conv channel counts must be >= 1");
  }
  if (kernel < 1 || stride < 1) {
    throw InvalidArgument("kernel and stride must be >= 1");
  }
  if (num_classes < 2) throw InvalidArgument("need at least 2 rating classes");
  // The smallest accepted input must survive every stride.
  int side = input_min_side;
  for (std::size_t l = 0; l < conv_channels.size(); ++l) {
    side = (side - kernel) / stride + 1;
    if (side < 1) {
      throw InvalidArgument(
          "input_min_side too small for the configured conv stack");
    }
  }
}

std::string ScorerConfig::fingerprint() const {
  std::ostringstream os;
  os << "convnet;channels=";
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    if (i) os << ',';
    os << conv_channels[i];
  }
  os << ";kernel=" << kernel << ";stride=" << stride
     << ";classes=" << num_classes << ";min_side=" << input_min_side;
  return os.str();
}

namespace {

std::size_t tensor_elems(const std::vector<int>& dims) {
  std::size_t n = 1;
  for (const int d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

template <typename S>
ConvNet<S>::ConvNet(const ScorerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  auto add = [&](const std::string& name, std::vector<int> dims, int fan_in,
                 bool zero) {
    TensorT<S> t;
    t.name = name;
    t.dims = std::move(dims);
    t.data.resize(tensor_elems(t.dims));
    if (!zero) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (S& v : t.data) v = static_cast<S>(rng.uniform(-bound, bound));
    }
    params_.push_back(std::move(t));
  };
  int in_ch = 3;
  for (std::size_t l = 0; l < cfg_.conv_channels.size(); ++l) {
    const int out_ch = cfg_.conv_channels[l];
    const std::string base = "conv" + std::to_string(l);
    add(base + ".weight", {out_ch, in_ch, cfg_.kernel, cfg_.kernel},
        in_ch * cfg_.kernel * cfg_.kernel, false);
    add(base + ".bias", {out_ch}, 0, true);
    in_ch = out_ch;
  }
  add("head.weight", {cfg_.num_classes, in_ch}, in_ch, false);
  add("head.bias", {cfg_.num_classes}, 0, true);
}

template <typename S>
std::vector<double> ConvNet<S>::run_forward(const ImageBuffer& patch,
                                            Activations* acts) const {
  if (std::min(patch.width, patch.height) < cfg_.input_min_side) {
    throw InputTooSmall("patch " + std::to_string(patch.width) + "x" +
                        std::to_string(patch.height) + " below minimum side " +
                        std::to_string(cfg_.input_min_side));
  }
  const int k = cfg_.kernel;
  const int s = cfg_.stride;
  const std::size_t n_layers = cfg_.conv_channels.size();

  acts->stages.assign(n_layers + 1, {});
  acts->dims.assign(n_layers + 1, {0, 0});

  // De-interleave to planar [c][y][x].
  {
    auto& in = acts->stages[0];
    in.resize(static_cast<std::size_t>(patch.width) * patch.height * 3);
    const std::size_t plane =
        static_cast<std::size_t>(patch.width) * patch.height;
    for (std::size_t i = 0; i < plane; ++i) {
      in[i] = static_cast<S>(patch.pixels[i * 3]);
      in[plane + i] = static_cast<S>(patch.pixels[i * 3 + 1]);
      in[2 * plane + i] = static_cast<S>(patch.pixels[i * 3 + 2]);
    }
    acts->dims[0] = {patch.width, patch.height};
  }

  int in_ch = 3;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const int out_ch = cfg_.conv_channels[l];
    const int in_w = acts->dims[l].first;
    const int in_h = acts->dims[l].second;
    const int out_w = (in_w - k) / s + 1;
    const int out_h = (in_h - k) / s + 1;
    if (out_w < 1 || out_h < 1) {
      throw InputTooSmall("patch collapsed to zero size at conv layer " +
                          std::to_string(l));
    }
    const std::vector<S>& w = params_[2 * l].data;
    const std::vector<S>& b = params_[2 * l + 1].data;
    const std::vector<S>& in = acts->stages[l];
    auto& out = acts->stages[l + 1];
    out.resize(static_cast<std::size_t>(out_ch) * out_w * out_h);
    const std::size_t in_plane = static_cast<std::size_t>(in_w) * in_h;
    const std::size_t out_plane = static_cast<std::size_t>(out_w) * out_h;
    const std::size_t w_per_oc = static_cast<std::size_t>(in_ch) * k * k;

    for (int oc = 0; oc < out_ch; ++oc) {
      const S* woc = w.data() + static_cast<std::size_t>(oc) * w_per_oc;
      S* orow = out.data() + static_cast<std::size_t>(oc) * out_plane;
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          double acc = static_cast<double>(b[static_cast<std::size_t>(oc)]);
          const int iy0 = oy * s;
          const int ix0 = ox * s;
          for (int ic = 0; ic < in_ch; ++ic) {
            const S* iplane = in.data() + static_cast<std::size_t>(ic) * in_plane;
            const S* wk = woc + static_cast<std::size_t>(ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
              const S* irow = iplane + static_cast<std::size_t>(iy0 + ky) * in_w + ix0;
              const S* wrow = wk + static_cast<std::size_t>(ky) * k;
              for (int kx = 0; kx < k; ++kx) {
                acc += static_cast<double>(irow[kx]) *
                       static_cast<double>(wrow[kx]);
              }
            }
          }
          // ReLU
          orow[static_cast<std::size_t>(oy) * out_w + ox] =
              acc > 0.0 ? static_cast<S>(acc) : S(0);
        }
      }
    }
    acts->dims[l + 1] = {out_w, out_h};
    in_ch = out_ch;
  }

  // Global average pool.
  const int last_ch = cfg_.conv_channels.back();
  const int lw = acts->dims[n_layers].first;
  const int lh = acts->dims[n_layers].second;
  const std::size_t plane = static_cast<std::size_t>(lw) * lh;
  acts->pooled.resize(static_cast<std::size_t>(last_ch));
  const std::vector<S>& last = acts->stages[n_layers];
  for (int c = 0; c < last_ch; ++c) {
    double acc = 0.0;
    const S* p = last.data() + static_cast<std::size_t>(c) * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(p[i]);
    acts->pooled[static_cast<std::size_t>(c)] =
        static_cast<S>(acc / static_cast<double>(plane));
  }

  // Affine head.
  const std::vector<S>& hw = params_[2 * n_layers].data;
  const std::vector<S>& hb = params_[2 * n_layers + 1].data;
  std::vector<double> logits(static_cast<std::size_t>(cfg_.num_classes));
  for (int n = 0; n < cfg_.num_classes; ++n) {
    double acc = static_cast<double>(hb[static_cast<std::size_t>(n)]);
    const S* wr = hw.data() + static_cast<std::size_t>(n) * last_ch;
    for (int c = 0; c < last_ch; ++c) {
      acc += static_cast<double>(wr[c]) *
             static_cast<double>(acts->pooled[static_cast<std::size_t>(c)]);
    }
    logits[static_cast<std::size_t>(n)] = acc;
  }
  return logits;
}

template <typename S>
std::vector<double> ConvNet<S>::predict(const ImageBuffer& patch) const {
  Activations scratch;
  return run_forward(patch, &scratch);
}

template <typename S>
std::vector<double> ConvNet<S>::forward(const ImageBuffer& patch) {
  auto logits = run_forward(patch, &cache_);
  has_cache_ = true;
  return logits;
}

template <typename S>
ParamGradients ConvNet<S>::backward(const std::vector<double>& grad_logits) {
  if (!has_cache_) {
    throw StateError("backward called without a cached forward pass");
  }
  if (static_cast<int>(grad_logits.size()) != cfg_.num_classes) {
    throw DimensionMismatch("grad_logits size does not match class count");
  }
  const int k = cfg_.kernel;
  const int s = cfg_.stride;
  const std::size_t n_layers = cfg_.conv_channels.size();

  ParamGradients grads(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    grads[i].name = params_[i].name;
    grads[i].dims = params_[i].dims;
    grads[i].data.assign(params_[i].size(), 0.0);
  }

  const int last_ch = cfg_.conv_channels.back();
  const int lw = cache_.dims[n_layers].first;
  const int lh = cache_.dims[n_layers].second;
  const std::size_t last_plane = static_cast<std::size_t>(lw) * lh;

  // Head: dW = g (x) pooled, db = g, dpooled = W^T g.
  std::vector<double> dpooled(static_cast<std::size_t>(last_ch), 0.0);
  {
    const std::vector<S>& hw = params_[2 * n_layers].data;
    auto& dhw = grads[2 * n_layers].data;
    auto& dhb = grads[2 * n_layers + 1].data;
    for (int n = 0; n < cfg_.num_classes; ++n) {
      const double g = grad_logits[static_cast<std::size_t>(n)];
      dhb[static_cast<std::size_t>(n)] = g;
      for (int c = 0; c < last_ch; ++c) {
        dhw[static_cast<std::size_t>(n) * last_ch + c] =
            g * static_cast<double>(cache_.pooled[static_cast<std::size_t>(c)]);
        dpooled[static_cast<std::size_t>(c)] +=
            g * static_cast<double>(hw[static_cast<std::size_t>(n) * last_ch + c]);
      }
    }
  }

  // Spread the pooling gradient uniformly, masked by ReLU.
  std::vector<double> dout(static_cast<std::size_t>(last_ch) * last_plane);
  {
    const std::vector<S>& last = cache_.stages[n_layers];
    const double inv = 1.0 / static_cast<double>(last_plane);
    for (int c = 0; c < last_ch; ++c) {
      const double g = dpooled[static_cast<std::size_t>(c)] * inv;
      for (std::size_t i = 0; i < last_plane; ++i) {
        const std::size_t idx = static_cast<std::size_t>(c) * last_plane + i;
        dout[idx] = last[idx] > S(0) ? g : 0.0;
      }
    }
  }

  // Walk the conv stack backwards.
  for (std::size_t l = n_layers; l-- > 0;) {
    const int out_ch = cfg_.conv_channels[l];
    const int in_ch = l == 0 ? 3 : cfg_.conv_channels[l - 1];
    const int in_w = cache_.dims[l].first;
    const int in_h = cache_.dims[l].second;
    const int out_w = cache_.dims[l + 1].first;
    const int out_h = cache_.dims[l + 1].second;
    const std::size_t in_plane = static_cast<std::size_t>(in_w) * in_h;
    const std::size_t out_plane = static_cast<std::size_t>(out_w) * out_h;
    const std::size_t w_per_oc = static_cast<std::size_t>(in_ch) * k * k;

    const std::vector<S>& in = cache_.stages[l];
    const std::vector<S>& w = params_[2 * l].data;
    auto& dw = grads[2 * l].data;
    auto& db = grads[2 * l + 1].data;
    const bool need_din = l > 0;
    std::vector<double> din;
    if (need_din) din.assign(static_cast<std::size_t>(in_ch) * in_plane, 0.0);

    for (int oc = 0; oc < out_ch; ++oc) {
      const S* woc = w.data() + static_cast<std::size_t>(oc) * w_per_oc;
      double* dwoc = dw.data() + static_cast<std::size_t>(oc) * w_per_oc;
      const double* doc = dout.data() + static_cast<std::size_t>(oc) * out_plane;
      double db_acc = 0.0;
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          const double g = doc[static_cast<std::size_t>(oy) * out_w + ox];
          if (g == 0.0) continue;
          db_acc += g;
          const int iy0 = oy * s;
          const int ix0 = ox * s;
          for (int ic = 0; ic < in_ch; ++ic) {
            const S* iplane = in.data() + static_cast<std::size_t>(ic) * in_plane;
            const S* wk = woc + static_cast<std::size_t>(ic) * k * k;
            double* dwk = dwoc + static_cast<std::size_t>(ic) * k * k;
            double* dik =
                need_din ? din.data() + static_cast<std::size_t>(ic) * in_plane
                         : nullptr;
            for (int ky = 0; ky < k; ++ky) {
              const std::size_t irow0 =
                  static_cast<std::size_t>(iy0 + ky) * in_w + ix0;
              for (int kx = 0; kx < k; ++kx) {
                dwk[static_cast<std::size_t>(ky) * k + kx] +=
                    g * static_cast<double>(iplane[irow0 + kx]);
                if (need_din) {
                  dik[irow0 + kx] +=
                      g * static_cast<double>(
                              wk[static_cast<std::size_t>(ky) * k + kx]);
                }
              }
            }
          }
        }
      }
      db[static_cast<std::size_t>(oc)] += db_acc;
    }

    if (need_din) {
      // ReLU mask of the previous stage's output.
      const std::vector<S>& prev = cache_.stages[l];
      for (std::size_t i = 0; i < din.size(); ++i) {
        if (prev[i] <= S(0)) din[i] = 0.0;
      }
      dout = std::move(din);
    }
  }
  return grads;
}

template class ConvNet<float>;
template class ConvNet<double>;

void ConvScorer::set_parameters(const std::vector<Tensor>& params) {
  auto& own = net_.parameters();
  if (params.size() != own.size()) {
    throw DimensionMismatch("parameter tensor count mismatch");
  }
  for (std::size_t i = 0; i < own.size(); ++i) {
    if (params[i].name != own[i].name || params[i].dims != own[i].dims) {
      throw DimensionMismatch("parameter tensor " + own[i].name +
                              " has mismatched shape or name");
    }
    own[i].data = params[i].data;
  }
}

ConvScorer init_scorer(const ScorerConfig& cfg, std::uint64_t seed) {
  return ConvScorer(cfg, seed);
}

ScorerConfig scorer_config_from_fingerprint(const std::string& fingerprint) {
  ScorerConfig cfg;
  cfg.conv_channels.clear();
  std::istringstream is(fingerprint);
  std::string field;
  bool tagged = false;
  while (std::getline(is, field, ';')) {
    if (field == "convnet") {
      tagged = true;
      continue;
    }
    const auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = field.substr(0, eq);
    const std::string value = field.substr(eq + 1);
    try {
      if (key == "channels") {
        std::istringstream cs(value);
        std::string c;
        while (std::getline(cs, c, ',')) cfg.conv_channels.push_back(std::stoi(c));
      } else if (key == "kernel") {
        cfg.kernel = std::stoi(value);
      } else if (key == "stride") {
        cfg.stride = std::stoi(value);
      } else if (key == "classes") {
        cfg.num_classes = std::stoi(value);
      } else if (key == "min_side") {
        cfg.input_min_side = std::stoi(value);
      }
    } catch (const std::exception&) {
      throw StateError("malformed model fingerprint: " + fingerprint);
    }
  }
  if (!tagged || cfg.conv_channels.empty()) {
    throw StateError("unrecognized model fingerprint: " + fingerprint);
  }
  cfg.validate();
  return cfg;
}

void OptimizerConfig::validate() const {
  if (momentum < 0.0 || momentum >= 1.0) {
    throw InvalidArgument("momentum must lie in [0, 1)");
  }
  if (weight_decay < 0.0) throw InvalidArgument("weight decay must be >= 0");
  if (init_lr < 0.0) throw InvalidArgument("learning rate must be >= 0");
  if (decay_factor <= 0.0 || decay_factor > 1.0) {
    throw InvalidArgument("decay factor must lie in (0, 1]");
  }
  if (decay_interval_epochs < 1) {
    throw InvalidArgument("decay interval must be >= 1 epoch");
  }
}

OptimizerState make_optimizer_state(const Scorer& scorer) {
  OptimizerState state;
  for (const Tensor& t : scorer.parameters()) {
    Tensor v;
    v.name = t.name;
    v.dims = t.dims;
    v.data.assign(t.size(), 0.0f);
    state.velocity.push_back(std::move(v));
  }
  return state;
}

void sgd_step(Scorer& scorer, const ParamGradients& grads,
              OptimizerState& state, const OptimizerConfig& cfg, double lr) {
  cfg.validate();
  auto& params = scorer.parameters();
  if (grads.size() != params.size() || state.velocity.size() != params.size()) {
    throw DimensionMismatch("gradient/velocity tensor count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i];
    const GradTensor& g = grads[i];
    Tensor& v = state.velocity[i];
    if (g.dims != w.dims || v.dims != w.dims) {
      throw DimensionMismatch("tensor " + w.name + " shape mismatch in update");
    }
    for (std::size_t j = 0; j < w.data.size(); ++j) {
      const double vel = cfg.momentum * static_cast<double>(v.data[j]) +
                         (g.data[j] + cfg.weight_decay *
                                          static_cast<double>(w.data[j]));
      // Update from the float-rounded velocity so a run resumed from a
      // checkpoint stays bit-identical to an uninterrupted one.
      v.data[j] = static_cast<float>(vel);
      w.data[j] = static_cast<float>(static_cast<double>(w.data[j]) -
                                     lr * static_cast<double>(v.data[j]));
    }
  }
}

double lr_at_epoch(const OptimizerConfig& cfg, int epoch) {
  if (epoch < 0) throw InvalidArgument("epoch must be >= 0");
  cfg.validate();
  const int steps = epoch / cfg.decay_interval_epochs;
  return cfg.init_lr * std::pow(cfg.decay_factor, steps);
}

}  // namespace mpa
