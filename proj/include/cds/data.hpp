#pragma once

// Dataset ingestion (CIFAR-10 binary batches and IDX files, both bit-exact
// round-trippable), deterministic stochastic augmentation with the two-view
// batch layout contrastive losses expect, and stratified semi-supervised
// label splits.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cds/common.hpp"

namespace cds::data {

struct ImageDataset {
  std::string name;   // dataset id, e.g. "cifar10"
  std::string split;  // "train" or "test"
  int class_count = 10;
  int channels = 3;
  int height = 32;
  int width = 32;
  std::vector<float> images;  // [M x C x H x W], values in [0,1]
  std::vector<int> labels;

  int count() const { return static_cast<int>(labels.size()); }
  long image_size() const { return long(channels) * height * width; }
  const float* image(int i) const { return images.data() + i * image_size(); }
};

// CIFAR-10 binary batch: 3073-byte records, 1 label byte then 3072 pixel
// bytes in channel-planar R,G,B order.
ImageDataset parse_cifar10(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_cifar10(const ImageDataset& ds);

// IDX (MNIST family): big-endian magic and dimension sizes, then raw bytes.
struct IdxArray {
  std::uint32_t magic = 0;
  std::vector<int> dims;
  std::vector<std::uint8_t> data;
};
IdxArray parse_idx(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_idx(const IdxArray& arr);

// Directory loaders. cifar10 reads data_batch_1..5.bin / test_batch.bin;
// idx reads {train,t10k}-images/labels files.
ImageDataset load_dataset(const std::string& kind, const std::string& dir,
                          const std::string& split);

std::vector<std::uint8_t> read_file(const std::string& path);
std::uint64_t fnv1a64(const std::uint8_t* bytes, size_t len);
std::uint64_t file_checksum(const std::string& path);

struct AugPolicy {
  int crop_pad = 4;
  double flip_p = 0.5;
  double jitter_strength = 0.4;
  double jitter_p = 0.8;
  double grayscale_p = 0.2;
  std::vector<float> mean = {0.4914f, 0.4822f, 0.4465f};
  std::vector<float> stddev = {0.2470f, 0.2435f, 0.2616f};

  void validate(int channels) const;

  // Normalization only; used for eval batches and as the "empty" policy.
  static AugPolicy none(std::vector<float> mean, std::vector<float> stddev) {
    AugPolicy p;
    p.crop_pad = 0;
    p.flip_p = p.jitter_p = p.grayscale_p = 0.0;
    p.mean = std::move(mean);
    p.stddev = std::move(stddev);
    return p;
  }
};

// One stochastic draw from the policy, then normalization. Ops run in a
// fixed order: crop, flip, color jitter, grayscale, normalize.
std::vector<float> augment_view(const float* img, int c, int h, int w,
                                const AugPolicy& policy, Rng& rng);

// Two independent draws; a deterministic function of (image, policy, seed).
std::pair<std::vector<float>, std::vector<float>> two_view_augment(
    const float* img, int c, int h, int w, const AugPolicy& policy, std::uint64_t seed);

struct Batch {
  Shape shape;                // [rows x C x H x W]
  std::vector<float> images;
  std::vector<int> labels;    // one per image (N even for two-view batches)
};

// Single-view batch: one augmentation draw per image.
Batch make_batch(const ImageDataset& ds, const std::vector<int>& indices,
                 const AugPolicy& policy, std::uint64_t seed);

// Stacked two-view batch: rows i and N+i are the two augmentations of
// image indices[i]; labels has length N.
Batch make_contrastive_batch(const ImageDataset& ds, const std::vector<int>& indices,
                             const AugPolicy& policy, std::uint64_t seed);

// Normalization only, no stochastic ops.
Batch make_eval_batch(const ImageDataset& ds, const std::vector<int>& indices,
                      const AugPolicy& policy);

struct SemiSplit {
  std::vector<int> labeled_indices;
  std::vector<int> unlabeled_indices;
  double fraction = 0.0;
  std::uint64_t seed = 0;
};

// Stratified per class with largest-remainder allocation; deterministic in
// the seed. Warns (stderr) when a class receives zero labels.
SemiSplit semi_split(const ImageDataset& ds, double fraction, std::uint64_t seed);

// Class-stratified deterministic subset, returned in ascending index order.
std::vector<int> stratified_subset(const ImageDataset& ds, int n, std::uint64_t seed);
ImageDataset take_subset(const ImageDataset& ds, const std::vector<int>& indices);

}  // namespace cds::data
