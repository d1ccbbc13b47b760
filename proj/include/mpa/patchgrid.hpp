#pragma once

#include <string>
#include <vector>

#include "mpa/errors.hpp"
#include "mpa/rng.hpp"

namespace mpa {

// Interleaved RGB image, row-major, values in [0, 1].
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // size = width * height * 3

  ImageBuffer() = default;
  ImageBuffer(int w, int h)
      : width(w),
        height(h),
        pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3,
               0.0f) {
    if (w < 1 || h < 1) throw InvalidArgument("image sides must be >= 1");
  }

  float& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  float at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  // Height over width, the bucketing key for the aspect-ratio tables.
  double aspect_ratio() const {
    return static_cast<double>(height) / static_cast<double>(width);
  }
};

enum class PatchKind { kLocal, kGlobal };

// A square region fed to the scorer. Local patches are verbatim crops
// (content keeps its aspect ratio); the global patch is the whole image
// squashed to a square.
struct Patch {
  ImageBuffer pixels;
  int x = 0;  // offset in rescaled-image coordinates
  int y = 0;
  PatchKind kind = PatchKind::kLocal;
};

enum class TestStrategy { kRandom, kLocal, kGlobalLocal };

// Test-time patch selection plan. S is the shorter-edge rescale target,
// P the local patch side, G the global patch side, m the grid side for
// the fixed-location strategies, n_random the count for the random one.
struct PatchPlan {
  TestStrategy strategy = TestStrategy::kGlobalLocal;
  int m = 3;
  int n_random = 1;
  int P = 299;
  int S = 342;
  int G = 342;

  void validate() const;
  int patch_count() const;
};

std::string strategy_name(TestStrategy s);
TestStrategy strategy_from_name(const std::string& name);

// Bilinear resize (half-pixel-center sampling) to an arbitrary size.
ImageBuffer resize_bilinear(const ImageBuffer& img, int out_w, int out_h);

// Scales so the shorter edge lands exactly on S; the longer edge is
// rounded half-up, keeping the aspect ratio within one pixel.
ImageBuffer rescale_shorter_edge(const ImageBuffer& img, int S);

// Verbatim square crop at a uniformly random in-bounds offset
// (x drawn first, then y).
Patch random_crop(const ImageBuffer& img, int P, Rng& rng);

// m*m crops at equal intervals, row-major (y outer). For m >= 2 the
// offsets along each axis are round(i*(dim-P)/(m-1)), so the first and
// last crops touch the image borders; the single m = 1 crop is centered.
std::vector<Patch> grid_crops(const ImageBuffer& img, int P, int m);

// Whole image anisotropically resized to G x G.
Patch global_patch(const ImageBuffer& img, int G);

ImageBuffer horizontal_flip(const ImageBuffer& img);

// Full test-time selection: shorter-edge rescale to plan.S, then the
// plan's crops. The global patch is taken from the rescaled image.
std::vector<Patch> select_test_patches(const ImageBuffer& img,
                                       const PatchPlan& plan, Rng& rng);

}  // namespace mpa
