#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "goldnas/supernet.hpp"
#include "goldnas/tensor.hpp"

namespace goldnas {

enum class SplitRole { Train, D1, D2, Eval };
std::string role_name(SplitRole r);

/// Labelled images stored channel-major per example in single precision.
struct DatasetSplit {
  SplitRole role = SplitRole::Train;
  std::size_t num_classes = 0;
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<float> pixels;  // size() * channels * height * width
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t example_size() const { return channels * height * width; }
  std::span<const float> image(std::size_t i) const {
    return {pixels.data() + i * example_size(), example_size()};
  }
  /// Image i as a [C, H, W] tensor.
  Tensor image_tensor(std::size_t i) const;
  /// Examples at `indices` stacked into a batch.
  Batch gather(std::span<const std::size_t> indices) const;
  /// Throws ValidationError on inconsistent sizes or labels out of range.
  void validate() const;
};

inline constexpr double kSyntheticNoise = 0.3;

/// Oriented sinusoidal gratings with random period, phase, colour and
/// additive Gaussian noise of standard deviation `noise`; class k has
/// orientation k * pi / num_classes.
DatasetSplit generate_synthetic(std::size_t num_classes, std::size_t samples_per_class,
                                std::size_t resolution, std::uint64_t seed, double noise = kSyntheticNoise);

/// Per-channel normalization constants of the CIFAR-10 training set.
inline constexpr double kCifarMean[3] = {0.4914, 0.4822, 0.4465};
inline constexpr double kCifarStd[3] = {0.2470, 0.2435, 0.2616};
inline constexpr std::size_t kCifarRecordBytes = 3073;

/// One CIFAR-10 binary batch: records of 1 label byte followed by 1024 red,
/// 1024 green and 1024 blue bytes (row-major 32x32). Pixels are normalized to
/// (byte / 255 - mean[c]) / std[c].
DatasetSplit parse_cifar10_binary(std::span<const unsigned char> bytes, const std::string& source = "<memory>");
DatasetSplit load_cifar10_binary(const std::filesystem::path& path);
/// data_batch_1.bin .. data_batch_5.bin (train) or test_batch.bin (eval).
DatasetSplit load_cifar10_directory(const std::filesystem::path& dir, bool train);

/// Deterministic disjoint split: the first `first_count` examples of a seeded
/// permutation go to the first split.
std::pair<DatasetSplit, DatasetSplit> split_dataset(const DatasetSplit& data, std::size_t first_count,
                                                    SplitRole first, SplitRole second, std::uint64_t seed);

struct AugmentationConfig {
  bool enabled = false;
  double flip_probability = 0.5;
  std::size_t crop_padding = 0;
  std::size_t cutout = 0;  // side of the zeroed square, 0 disables

  void validate(std::size_t height, std::size_t width) const;
};

/// Applies flip, padded random crop and cutout to one [C, H, W] image. The
/// disabled config returns the image unchanged and draws nothing from `rng`.
Tensor augment(const Tensor& image, const AugmentationConfig& cfg, std::mt19937_64& rng);

/// Zeroes an s x s square centred at (cy, cx), clipped to the image.
void apply_cutout(Tensor& image, std::size_t size, std::size_t cy, std::size_t cx);

/// Shuffled minibatch schedule over a dataset, one permutation per epoch.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng);

/// Gathers a batch and augments every example.
Batch make_batch(const DatasetSplit& data, std::span<const std::size_t> indices,
                 const AugmentationConfig& cfg, std::mt19937_64& rng);

}  // namespace goldnas
