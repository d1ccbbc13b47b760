#include "mpa/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "mpa/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mpa {

std::vector<std::size_t> Dataset::indices_of(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) out.push_back(i);
  }
  return out;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    if (!j.is_object() || !j.contains("path") || !j.contains("ratings") ||
        !j["path"].is_string() || !j["ratings"].is_array()) {
      throw SchemaError("manifest line " + std::to_string(line_no) +
                        ": expected {\"path\": string, \"ratings\": array}");
    }
    if (j["ratings"].size() != 10) {
      throw SchemaError("manifest line " + std::to_string(line_no) +
                        ": ratings must have 10 entries, got " +
                        std::to_string(j["ratings"].size()));
    }
    ManifestEntry e;
    std::int64_t total = 0;
    for (const auto& v : j["ratings"]) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw SchemaError("manifest line " + std::to_string(line_no) +
                          ": ratings must be non-negative integers");
      }
      e.ratings.push_back(v.get<std::int64_t>());
      total += e.ratings.back();
    }
    if (total < 1) {
      throw SchemaError("manifest line " + std::to_string(line_no) +
                        ": ratings sum to zero");
    }
    const fs::path p(j["path"].get<std::string>());
    e.image_path = p.is_absolute() ? p.string() : (base / p).string();
    entries.push_back(std::move(e));
  }
  return entries;
}

Dataset split_dataset(std::vector<ManifestEntry> entries, std::uint64_t seed) {
  const std::size_t n = entries.size();
  if (n < 3) {
    throw EmptyDataset("need at least 3 entries to split, got " +
                       std::to_string(n));
  }
  // round(0.04n) each for validation and test (at least 1 apiece); the
  // remaining 92% trains.
  const auto frac = static_cast<std::size_t>(std::llround(0.04 * static_cast<double>(n)));
  const std::size_t n_val = std::max<std::size_t>(1, frac);
  const std::size_t n_test = std::max<std::size_t>(1, frac);
  const std::size_t n_train = n - n_val - n_test;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0x5117ULL));
  shuffle(order, rng);

  Dataset ds;
  ds.entries.resize(n);
  ds.split.resize(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    ds.entries[pos] = std::move(entries[order[pos]]);
    ds.split[pos] = pos < n_train                ? Split::kTrain
                    : pos < n_train + n_val      ? Split::kValidation
                                                 : Split::kTest;
  }
  return ds;
}

std::vector<Sample> load_split(const Dataset& ds, Split s) {
  std::vector<Sample> out;
  for (const std::size_t i : ds.indices_of(s)) {
    Sample sample;
    sample.id = ds.entries[i].image_path;
    sample.image = decode_image(ds.entries[i].image_path);
    sample.truth = normalize(ds.entries[i].ratings);
    out.push_back(std::move(sample));
  }
  return out;
}

// ---------------------------------------------------------------------
// Teacher
// ---------------------------------------------------------------------

namespace {

constexpr double kTeacherStd = 1.5;
constexpr double kScoreLo = 4.0;
constexpr double kScoreSpan = 3.0;

// Feature reference ranges and mixing weights of the teacher.
constexpr double kLumLo = 0.15, kLumSpan = 0.70;
constexpr double kConRef = 0.30;
constexpr double kSatRef = 0.35;
constexpr double kShaRef = 0.08;
constexpr double kWLum = 0.35, kWCon = 0.25, kWSat = 0.25, kWSha = 0.15;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

ImageStats compute_stats(const ImageBuffer& img) {
  const int w = img.width;
  const int h = img.height;
  std::vector<double> lum(static_cast<std::size_t>(w) * h);
  double sum = 0.0;
  double sumsq = 0.0;
  double sat = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double r = img.at(x, y, 0);
      const double g = img.at(x, y, 1);
      const double b = img.at(x, y, 2);
      const double v = 0.299 * r + 0.587 * g + 0.114 * b;
      lum[static_cast<std::size_t>(y) * w + x] = v;
      sum += v;
      sumsq += v * v;
      sat += std::max({r, g, b}) - std::min({r, g, b});
    }
  }
  const double n = static_cast<double>(w) * h;
  ImageStats s;
  s.luminance = sum / n;
  s.contrast = std::sqrt(std::max(0.0, sumsq / n - s.luminance * s.luminance));
  s.saturation = sat / n;

  double grad = 0.0;
  std::size_t terms = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      grad += std::abs(lum[static_cast<std::size_t>(y) * w + x + 1] -
                       lum[static_cast<std::size_t>(y) * w + x]);
      ++terms;
    }
  }
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x < w; ++x) {
      grad += std::abs(lum[static_cast<std::size_t>(y + 1) * w + x] -
                       lum[static_cast<std::size_t>(y) * w + x]);
      ++terms;
    }
  }
  s.sharpness = terms > 0 ? grad / static_cast<double>(terms) : 0.0;
  return s;
}

double teacher_score(const ImageStats& stats) {
  const double nl = clamp01((stats.luminance - kLumLo) / kLumSpan);
  const double nc = clamp01(stats.contrast / kConRef);
  const double ns = clamp01(stats.saturation / kSatRef);
  const double nh = clamp01(stats.sharpness / kShaRef);
  const double raw = kWLum * nl + kWCon * nc + kWSat * ns + kWSha * nh;
  return kScoreLo + kScoreSpan * raw;
}

RatingDistribution teacher_distribution(double score) {
  std::vector<double> probs(10);
  double sum = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double d = static_cast<double>(i + 1) - score;
    probs[static_cast<std::size_t>(i)] =
        std::exp(-d * d / (2.0 * kTeacherStd * kTeacherStd));
    sum += probs[static_cast<std::size_t>(i)];
  }
  for (double& p : probs) p /= sum;
  return RatingDistribution::from_probs(std::move(probs));
}

std::vector<std::int64_t> distribution_to_counts(const RatingDistribution& d,
                                                 int total) {
  if (total < 1) throw InvalidArgument("vote total must be >= 1");
  const int n = d.num_classes();
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n));
  std::vector<std::pair<double, int>> remainders;
  std::int64_t assigned = 0;
  for (int i = 0; i < n; ++i) {
    const double exact = d[i] * total;
    counts[static_cast<std::size_t>(i)] =
        static_cast<std::int64_t>(std::floor(exact));
    assigned += counts[static_cast<std::size_t>(i)];
    remainders.push_back(
        {exact - std::floor(exact), i});
  }
  // Hand leftovers to the largest remainders; ties go to lower classes.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::int64_t i = 0; i < total - assigned; ++i) {
    ++counts[static_cast<std::size_t>(remainders[static_cast<std::size_t>(i)].second)];
  }
  return counts;
}

// ---------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------

namespace {

constexpr double kBucketEdges[] = {0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6};

struct Blob {
  double cx, cy, radius, amp;
};

ImageBuffer render_image(int w, int h, Rng& rng) {
  // A latent quality level drives all four appearance parameters, with
  // per-parameter jitter on top. Correlated features spread the teacher
  // scores across the full range instead of piling up at the middle.
  const double quality = rng.uniform(0.0, 1.0);
  auto level = [&](double jitter) {
    const double v = quality + jitter * (rng.uniform() - 0.5);
    return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  };
  const double lum = 0.15 + 0.70 * level(0.35);
  const double contrast = 0.02 + 0.43 * level(0.35);
  const double satur = 0.70 * level(0.35);
  const double noise = 0.18 * level(0.35);
  const double angle = rng.uniform(0.0, 6.283185307179586);
  const double hue = rng.uniform(0.0, 6.283185307179586);
  const int n_blobs = static_cast<int>(rng.uniform_int(1, 3));
  std::vector<Blob> blobs;
  for (int i = 0; i < n_blobs; ++i) {
    blobs.push_back(Blob{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0),
                         rng.uniform(0.15, 0.40), rng.uniform(-0.25, 0.25)});
  }
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  const double ch0 = std::cos(hue);
  const double ch1 = std::cos(hue + 2.0943951023931953);
  const double ch2 = std::cos(hue + 4.1887902047863905);

  ImageBuffer img(w, h);
  for (int y = 0; y < h; ++y) {
    const double fy = (y + 0.5) / h - 0.5;
    for (int x = 0; x < w; ++x) {
      const double fx = (x + 0.5) / w - 0.5;
      double v = lum + 1.6 * contrast * (fx * ca + fy * sa);
      for (const Blob& b : blobs) {
        const double dx = (x + 0.5) / w - b.cx;
        const double dy = (y + 0.5) / h - b.cy;
        v += b.amp *
             std::exp(-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius));
      }
      v += noise * (rng.uniform() - 0.5);
      const double chroma = 0.35 * satur;
      const double rgb[3] = {v + chroma * ch0, v + chroma * ch1,
                             v + chroma * ch2};
      for (int c = 0; c < 3; ++c) {
        // Quantize to the 8-bit grid so the stored PNG decodes to
        // exactly the pixels the teacher scored.
        const int byte =
            static_cast<int>(std::floor(clamp01(rgb[c]) * 255.0 + 0.5));
        img.at(x, y, c) = static_cast<float>(byte) / 255.0f;
      }
    }
  }
  return img;
}

}  // namespace

void synth_generate(const SynthParams& params, const std::string& out_dir) {
  if (params.n < 1) throw InvalidArgument("need at least 1 image");
  if (params.min_side < 8 || params.max_side < params.min_side) {
    throw InvalidArgument("bad size range");
  }
  if (params.aspect_min <= 0.0 || params.aspect_max < params.aspect_min) {
    throw InvalidArgument("bad aspect range");
  }
  fs::create_directories(fs::path(out_dir) / "images");

  // Aspect buckets intersecting the requested range, cycled so all of
  // them get populated. Sampling keeps a margin from the bucket edges
  // so dimension rounding cannot move an image across buckets.
  struct Range {
    double lo, hi;
  };
  std::vector<Range> buckets;
  for (std::size_t b = 0; b < 7; ++b) {
    const double lo = std::max(kBucketEdges[b], params.aspect_min);
    const double hi =
        b + 1 < 7 ? std::min(kBucketEdges[b + 1], params.aspect_max)
                  : params.aspect_max;
    if (lo < hi) buckets.push_back(Range{lo, hi});
  }
  if (buckets.empty()) {
    buckets.push_back(Range{params.aspect_min, params.aspect_max});
  }

  std::ofstream manifest(fs::path(out_dir) / "manifest.jsonl",
                         std::ios::trunc);
  if (!manifest) throw IoError("cannot write manifest under " + out_dir);

  for (int i = 0; i < params.n; ++i) {
    Rng rng(mix_seed(params.seed, static_cast<std::uint64_t>(i)));
    const Range bucket = buckets[static_cast<std::size_t>(i) % buckets.size()];
    const double margin = 0.02 * (bucket.hi - bucket.lo);
    const double ratio = rng.uniform(bucket.lo + margin, bucket.hi - margin);
    const int s = static_cast<int>(
        rng.uniform_int(params.min_side, params.max_side));
    int w;
    int h;
    if (ratio >= 1.0) {
      w = s;
      h = static_cast<int>(std::floor(s * ratio + 0.5));
    } else {
      h = s;
      w = static_cast<int>(std::floor(s / ratio + 0.5));
    }
    const ImageBuffer img = render_image(w, h, rng);
    const double score = teacher_score(compute_stats(img));
    const RatingDistribution dist = teacher_distribution(score);
    const std::vector<std::int64_t> counts =
        distribution_to_counts(dist, params.raters);

    std::ostringstream name;
    name << "images/";
    name.width(5);
    name.fill('0');
    name << i;
    name << ".png";
    write_png(img, (fs::path(out_dir) / name.str()).string());

    json line;
    line["path"] = name.str();
    line["ratings"] = counts;
    manifest << line.dump() << "\n";
  }
  manifest.flush();
  if (!manifest) throw IoError("manifest write failed under " + out_dir);

  json teacher;
  teacher["score_range"] = {kScoreLo, kScoreLo + kScoreSpan};
  teacher["distribution_std"] = kTeacherStd;
  teacher["raters"] = params.raters;
  teacher["weights"] = {{"luminance", kWLum},
                        {"contrast", kWCon},
                        {"saturation", kWSat},
                        {"sharpness", kWSha}};
  teacher["references"] = {{"luminance_lo", kLumLo},
                           {"luminance_span", kLumSpan},
                           {"contrast", kConRef},
                           {"saturation", kSatRef},
                           {"sharpness", kShaRef}};
  std::ofstream tp(fs::path(out_dir) / "teacher-params.json", std::ios::trunc);
  tp << teacher.dump(2) << "\n";
  if (!tp) throw IoError("teacher-params write failed under " + out_dir);
}

}  // namespace mpa
