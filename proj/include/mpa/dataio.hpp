#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpa/patchgrid.hpp"
#include "mpa/ratings.hpp"

namespace mpa {

// One manifest line: an image path plus raw vote counts for classes
// 1..10. Paths are resolved relative to the manifest's directory.
struct ManifestEntry {
  std::string image_path;
  std::vector<std::int64_t> ratings;
};

enum class Split { kTrain, kValidation, kTest };

// Entries plus a deterministic 92/4/4 split assignment.
struct Dataset {
  std::vector<ManifestEntry> entries;
  std::vector<Split> split;  // parallel to entries

  std::vector<std::size_t> indices_of(Split s) const;
};

// Line-delimited JSON: {"path": ..., "ratings": [10 ints]} per line.
// Blank lines are skipped; malformed lines raise ParseError with the
// line number, schema violations raise SchemaError.
std::vector<ManifestEntry> load_manifest(const std::string& path);

// Seeded shuffle followed by a contiguous train/validation/test cut.
// Validation and test sizes are round(0.04*n) each (at least 1), train
// takes the rest; 255,494 entries split as 235,054 / 10,220 / 10,220.
Dataset split_dataset(std::vector<ManifestEntry> entries, std::uint64_t seed);

// PNG or JPEG (sniffed by magic bytes) to [0,1] RGB; grayscale inputs
// are replicated across channels.
ImageBuffer decode_image(const std::string& path);

// 8-bit RGB PNG; values are rounded to the nearest of 256 levels.
void write_png(const ImageBuffer& img, const std::string& path);

// A decoded entry ready for training or evaluation.
struct Sample {
  std::string id;
  ImageBuffer image;
  RatingDistribution truth;
};

std::vector<Sample> load_split(const Dataset& ds, Split s);

// ---------------------------------------------------------------------
// Synthetic dataset. Procedural images (oriented gradient + soft blobs
// + uniform noise, with per-image brightness/contrast/saturation/noise
// levels) are labeled by a fixed teacher: global image statistics map
// to a score in [4, 7], and the ground-truth distribution is a
// discretized Gaussian around it (std 1.5 classes, renormalized over
// classes 1..10). Keeping scores away from the 1/10 edges bounds the
// truncation bias of the discretization, so the distribution mean
// tracks the teacher score closely.
// ---------------------------------------------------------------------

struct SynthParams {
  int n = 500;
  int min_side = 64;
  int max_side = 128;
  double aspect_min = 0.4;  // height/width
  double aspect_max = 2.5;
  std::uint64_t seed = 0;
  int raters = 210;  // vote total behind each ground-truth histogram
};

// Global statistics the teacher scores an image by.
struct ImageStats {
  double luminance = 0.0;   // mean of 0.299r + 0.587g + 0.114b
  double contrast = 0.0;    // stddev of luminance
  double saturation = 0.0;  // mean of max(r,g,b) - min(r,g,b)
  double sharpness = 0.0;   // mean |forward difference| of luminance
};

ImageStats compute_stats(const ImageBuffer& img);
double teacher_score(const ImageStats& stats);
RatingDistribution teacher_distribution(double score);

// Discretizes a distribution into integer vote counts summing exactly
// to `total` (largest-remainder rounding).
std::vector<std::int64_t> distribution_to_counts(const RatingDistribution& d,
                                                 int total);

// Materializes images/ + manifest.jsonl + teacher-params.json under
// out_dir. Aspect-ratio buckets are cycled image by image so every
// bucket intersecting [aspect_min, aspect_max] is populated.
void synth_generate(const SynthParams& params, const std::string& out_dir);

}  // namespace mpa
