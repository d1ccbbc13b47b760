#include "mpa/patchgrid.hpp"

#include <algorithm>
#include <cmath>

namespace mpa {

namespace {

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int side) {
  ImageBuffer out(side, side);
  for (int y = 0; y < side; ++y) {
    const float* src = &img.pixels[(static_cast<std::size_t>(y0 + y) *
                                        img.width +
                                    x0) *
                                   3];
    float* dst = &out.pixels[static_cast<std::size_t>(y) * side * 3];
    std::copy(src, src + static_cast<std::size_t>(side) * 3, dst);
  }
  return out;
}

}  // namespace

void PatchPlan::validate() const {
  if (P < 1 || S < 1 || G < 1) throw InvalidArgument("patch sides must be >= 1");
  if (P > S) throw InvalidArgument("local patch side P must not exceed S");
  if (m < 1) throw InvalidArgument("grid side m must be >= 1");
  if (n_random < 1) throw InvalidArgument("random patch count must be >= 1");
}

int PatchPlan::patch_count() const {
  switch (strategy) {
    case TestStrategy::kRandom:
      return n_random;
    case TestStrategy::kLocal:
      return m * m;
    case TestStrategy::kGlobalLocal:
      return m * m + 1;
  }
  return 0;
}

std::string strategy_name(TestStrategy s) {
  switch (s) {
    case TestStrategy::kRandom:
      return "mp-random";
    case TestStrategy::kLocal:
      return "mp-local";
    case TestStrategy::kGlobalLocal:
      return "mp-globallocal";
  }
  return "";
}

TestStrategy strategy_from_name(const std::string& name) {
  if (name == "mp-random") return TestStrategy::kRandom;
  if (name == "mp-local") return TestStrategy::kLocal;
  if (name == "mp-globallocal") return TestStrategy::kGlobalLocal;
  throw InvalidArgument("unknown test strategy: " + name +
                        " (expected mp-random, mp-local, mp-globallocal)");
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw InvalidArgument("resize target too small");
  if (out_w == img.width && out_h == img.height) return img;
  ImageBuffer out(out_w, out_h);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const float wy = static_cast<float>(fy - y0);
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const float wx = static_cast<float>(fx - x0);
      for (int c = 0; c < 3; ++c) {
        const float top =
            img.at(x0, y0, c) + wx * (img.at(x1, y0, c) - img.at(x0, y0, c));
        const float bot =
            img.at(x0, y1, c) + wx * (img.at(x1, y1, c) - img.at(x0, y1, c));
        out.at(ox, oy, c) = top + wy * (bot - top);
      }
    }
  }
  return out;
}

ImageBuffer rescale_shorter_edge(const ImageBuffer& img, int S) {
  if (S < 1) throw InvalidArgument("rescale target must be >= 1");
  int out_w;
  int out_h;
  if (img.width <= img.height) {
    out_w = S;
    out_h = std::max(
        S, round_half_up(static_cast<double>(img.height) * S / img.width));
  } else {
    out_h = S;
    out_w = std::max(
        S, round_half_up(static_cast<double>(img.width) * S / img.height));
  }
  return resize_bilinear(img, out_w, out_h);
}

Patch random_crop(const ImageBuffer& img, int P, Rng& rng) {
  if (P > img.width || P > img.height) {
    throw PatchTooLarge("crop side " + std::to_string(P) +
                        " exceeds image " + std::to_string(img.width) + "x" +
                        std::to_string(img.height));
  }
  const int x = static_cast<int>(rng.uniform_int(0, img.width - P));
  const int y = static_cast<int>(rng.uniform_int(0, img.height - P));
  return Patch{crop(img, x, y, P), x, y, PatchKind::kLocal};
}

std::vector<Patch> grid_crops(const ImageBuffer& img, int P, int m) {
  if (P > img.width || P > img.height) {
    throw PatchTooLarge("crop side " + std::to_string(P) +
                        " exceeds image " + std::to_string(img.width) + "x" +
                        std::to_string(img.height));
  }
  if (m < 1) throw InvalidArgument("grid side m must be >= 1");
  auto offsets = [&](int dim) {
    std::vector<int> out;
    if (m == 1) {
      out.push_back((dim - P) / 2);
    } else {
      for (int i = 0; i < m; ++i) {
        out.push_back(round_half_up(static_cast<double>(i) * (dim - P) /
                                    (m - 1)));
      }
    }
    return out;
  };
  const std::vector<int> xs = offsets(img.width);
  const std::vector<int> ys = offsets(img.height);
  std::vector<Patch> patches;
  patches.reserve(static_cast<std::size_t>(m) * m);
  for (const int y : ys) {
    for (const int x : xs) {
      patches.push_back(Patch{crop(img, x, y, P), x, y, PatchKind::kLocal});
    }
  }
  return patches;
}

Patch global_patch(const ImageBuffer& img, int G) {
  return Patch{resize_bilinear(img, G, G), 0, 0, PatchKind::kGlobal};
}

ImageBuffer horizontal_flip(const ImageBuffer& img) {
  ImageBuffer out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
      }
    }
  }
  return out;
}

std::vector<Patch> select_test_patches(const ImageBuffer& img,
                                       const PatchPlan& plan, Rng& rng) {
  plan.validate();
  const ImageBuffer rescaled = rescale_shorter_edge(img, plan.S);
  std::vector<Patch> patches;
  switch (plan.strategy) {
    case TestStrategy::kRandom:
      patches.reserve(static_cast<std::size_t>(plan.n_random));
      for (int i = 0; i < plan.n_random; ++i) {
        patches.push_back(random_crop(rescaled, plan.P, rng));
      }
      break;
    case TestStrategy::kLocal:
      patches = grid_crops(rescaled, plan.P, plan.m);
      break;
    case TestStrategy::kGlobalLocal:
      patches = grid_crops(rescaled, plan.P, plan.m);
      patches.push_back(global_patch(rescaled, plan.G));
      break;
  }
  return patches;
}

}  // namespace mpa
