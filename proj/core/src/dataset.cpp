#include "goldnas/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "goldnas/error.hpp"
#include "goldnas/rng.hpp"

namespace goldnas {

std::string role_name(SplitRole r) {
  switch (r) {
    case SplitRole::Train: return "train";
    case SplitRole::D1: return "d1";
    case SplitRole::D2: return "d2";
    case SplitRole::Eval: return "eval";
  }
  return "unknown";
}

Tensor DatasetSplit::image_tensor(std::size_t i) const {
  const auto px = image(i);
  return Tensor(Shape{channels, height, width}, std::vector<double>(px.begin(), px.end()));
}

Batch DatasetSplit::gather(std::span<const std::size_t> indices) const {
  Batch b;
  b.images = Tensor(Shape{indices.size(), channels, height, width});
  b.labels.reserve(indices.size());
  const std::size_t e = example_size();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto px = image(indices[k]);
    std::copy(px.begin(), px.end(), b.images.raw() + k * e);
    b.labels.push_back(labels[indices[k]]);
  }
  return b;
}

void DatasetSplit::validate() const {
  if (pixels.size() != labels.size() * example_size()) {
    throw ValidationError("dataset: " + std::to_string(pixels.size()) + " pixel values for " +
                          std::to_string(labels.size()) + " examples of " + std::to_string(example_size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ValidationError("dataset: label " + std::to_string(labels[i]) + " of example " +
                            std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

namespace {

double normal(std::mt19937_64& rng) {
  // Box-Muller; keeps the stream portable across standard libraries.
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace

DatasetSplit generate_synthetic(std::size_t num_classes, std::size_t samples_per_class,
                                std::size_t resolution, std::uint64_t seed, double noise) {
  if (resolution < 8) throw ValidationError("generate_synthetic: resolution must be >= 8");
  if (num_classes < 2) throw ValidationError("generate_synthetic: need at least 2 classes");
  if (!(noise >= 0)) throw ValidationError("generate_synthetic: noise must be >= 0");
  DatasetSplit d;
  d.num_classes = num_classes;
  d.channels = 3;
  d.height = d.width = resolution;
  const std::size_t n = num_classes * samples_per_class;
  d.pixels.resize(n * d.example_size());
  d.labels.resize(n);
  std::mt19937_64 rng(seed);
  const double r = static_cast<double>(resolution);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % num_classes;
    d.labels[i] = static_cast<int>(label);
    const double theta = std::numbers::pi * static_cast<double>(label) / static_cast<double>(num_classes) +
                         uniform(rng, -0.1, 0.1);
    const double period = uniform(rng, 4.0, 6.0);
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double amp = uniform(rng, 0.6, 1.0);
    double colour[3];
    for (double& c : colour) c = uniform(rng, 0.5, 1.0);
    const double kx = std::cos(theta) * 2.0 * std::numbers::pi / period;
    const double ky = std::sin(theta) * 2.0 * std::numbers::pi / period;
    float* out = d.pixels.data() + i * d.example_size();
    for (std::size_t y = 0; y < resolution; ++y) {
      for (std::size_t x = 0; x < resolution; ++x) {
        const double wave = amp * std::cos(kx * (static_cast<double>(x) - r / 2) +
                                           ky * (static_cast<double>(y) - r / 2) + phase);
        for (std::size_t c = 0; c < 3; ++c) {
          out[(c * resolution + y) * resolution + x] = static_cast<float>(colour[c] * wave + noise * normal(rng));
        }
      }
    }
  }
  return d;
}

DatasetSplit parse_cifar10_binary(std::span<const unsigned char> bytes, const std::string& source) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % kCifarRecordBytes;
    throw ParseError(source + ": truncated record at byte offset " + std::to_string(offset) + " (" +
                     std::to_string(bytes.size() % kCifarRecordBytes) + " of " +
                     std::to_string(kCifarRecordBytes) + " bytes)");
  }
  DatasetSplit d;
  d.num_classes = 10;
  d.channels = 3;
  d.height = d.width = 32;
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  d.labels.resize(n);
  d.pixels.resize(n * 3072);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = i * kCifarRecordBytes;
    if (bytes[base] >= 10) {
      throw ParseError(source + ": label " + std::to_string(bytes[base]) + " at byte offset " +
                       std::to_string(base) + " is not below 10");
    }
    d.labels[i] = bytes[base];
    for (std::size_t k = 0; k < 3072; ++k) {
      const std::size_t c = k / 1024;
      d.pixels[i * 3072 + k] =
          static_cast<float>((bytes[base + 1 + k] / 255.0 - kCifarMean[c]) / kCifarStd[c]);
    }
  }
  return d;
}

DatasetSplit load_cifar10_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open CIFAR-10 file " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_cifar10_binary(bytes, path.string());
}

DatasetSplit load_cifar10_directory(const std::filesystem::path& dir, bool train) {
  std::vector<std::filesystem::path> files;
  if (train) {
    for (int k = 1; k <= 5; ++k) files.push_back(dir / ("data_batch_" + std::to_string(k) + ".bin"));
  } else {
    files.push_back(dir / "test_batch.bin");
  }
  DatasetSplit all;
  for (const auto& f : files) {
    DatasetSplit part = load_cifar10_binary(f);
    if (all.labels.empty()) {
      all = std::move(part);
      continue;
    }
    all.pixels.insert(all.pixels.end(), part.pixels.begin(), part.pixels.end());
    all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
  }
  all.role = train ? SplitRole::Train : SplitRole::Eval;
  return all;
}

std::pair<DatasetSplit, DatasetSplit> split_dataset(const DatasetSplit& data, std::size_t first_count,
                                                    SplitRole first, SplitRole second, std::uint64_t seed) {
  if (first_count > data.size()) {
    throw ValidationError("split_dataset: first split of " + std::to_string(first_count) + " from " +
                          std::to_string(data.size()) + " examples");
  }
  std::vector<std::size_t> perm(data.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[uniform_below(rng, i)]);
  auto take = [&](std::size_t lo, std::size_t hi, SplitRole role) {
    std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                                 perm.begin() + static_cast<std::ptrdiff_t>(hi));
    std::sort(idx.begin(), idx.end());
    DatasetSplit s;
    s.role = role;
    s.num_classes = data.num_classes;
    s.channels = data.channels;
    s.height = data.height;
    s.width = data.width;
    for (std::size_t i : idx) {
      const auto px = data.image(i);
      s.pixels.insert(s.pixels.end(), px.begin(), px.end());
      s.labels.push_back(data.labels[i]);
    }
    return s;
  };
  return {take(0, first_count, first), take(first_count, data.size(), second)};
}

void AugmentationConfig::validate(std::size_t height, std::size_t width) const {
  if (flip_probability < 0 || flip_probability > 1) {
    throw ValidationError("augment: flip_probability must lie in [0, 1]");
  }
  if (cutout > std::min(height, width)) {
    throw ValidationError("augment: cutout " + std::to_string(cutout) + " exceeds the image side");
  }
}

void apply_cutout(Tensor& image, std::size_t size, std::size_t cy, std::size_t cx) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(size / 2);
  const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(cy) - half);
  const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(cx) - half);
  const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(h),
                                                     static_cast<std::ptrdiff_t>(cy) - half + static_cast<std::ptrdiff_t>(size));
  const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w),
                                                     static_cast<std::ptrdiff_t>(cx) - half + static_cast<std::ptrdiff_t>(size));
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::ptrdiff_t y = y0; y < y1; ++y) {
      for (std::ptrdiff_t x = x0; x < x1; ++x) image[(ch * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)] = 0.0;
    }
  }
}

Tensor augment(const Tensor& image, const AugmentationConfig& cfg, std::mt19937_64& rng) {
  if (!cfg.enabled) return image;
  if (image.rank() != 3) throw ShapeError("augment: expected [C, H, W], got " + shape_str(image.shape()));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out = image;
  if (uniform01(rng) < cfg.flip_probability) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) out[(ch * h + y) * w + x] = image[(ch * h + y) * w + (w - 1 - x)];
      }
    }
  }
  if (cfg.crop_padding > 0) {
    const std::size_t span = 2 * cfg.crop_padding + 1;
    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(uniform_below(rng, span)) - static_cast<std::ptrdiff_t>(cfg.crop_padding);
    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(uniform_below(rng, span)) - static_cast<std::ptrdiff_t>(cfg.crop_padding);
    const Tensor src = out;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
          const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + dx;
          const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx < static_cast<std::ptrdiff_t>(w);
          out[(ch * h + y) * w + x] =
              inside ? src[(ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)] : 0.0;
        }
      }
    }
  }
  if (cfg.cutout > 0) {
    const std::size_t cy = uniform_below(rng, h);
    const std::size_t cx = uniform_below(rng, w);
    apply_cutout(out, cfg.cutout, cy, cx);
  }
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
  if (batch_size == 0) throw ValidationError("epoch_batches: batch size must be positive");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_below(rng, i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t lo = 0; lo < n; lo += batch_size) {
    const std::size_t hi = std::min(n, lo + batch_size);
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(lo), perm.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return out;
}

Batch make_batch(const DatasetSplit& data, std::span<const std::size_t> indices,
                 const AugmentationConfig& cfg, std::mt19937_64& rng) {
  Batch b = data.gather(indices);
  if (!cfg.enabled) return b;
  const std::size_t e = data.example_size();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    Tensor img(Shape{data.channels, data.height, data.width},
               std::vector<double>(b.images.raw() + k * e, b.images.raw() + (k + 1) * e));
    const Tensor aug = augment(img, cfg, rng);
    std::copy(aug.raw(), aug.raw() + e, b.images.raw() + k * e);
  }
  return b;
}

}  // namespace goldnas
