#include "cds/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace cds::data {

namespace {

constexpr int kCifarRecord = 3073;
constexpr int kCifarPixels = 3072;

float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

// Rec. 601 luma; for non-RGB images the channel mean stands in.
void luma_of(const std::vector<float>& img, int c, int hw, std::vector<float>& out) {
  out.resize(size_t(hw));
  if (c == 3) {
    for (int p = 0; p < hw; ++p)
      out[size_t(p)] = 0.299f * img[size_t(p)] + 0.587f * img[size_t(hw + p)] +
                       0.114f * img[size_t(2 * hw + p)];
  } else {
    for (int p = 0; p < hw; ++p) {
      float s = 0;
      for (int ch = 0; ch < c; ++ch) s += img[size_t(ch) * hw + p];
      out[size_t(p)] = s / float(c);
    }
  }
}

}  // namespace

ImageDataset parse_cifar10(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % kCifarRecord != 0)
    throw DataError("cifar10: file size " + std::to_string(bytes.size()) +
                    " is not a multiple of 3073 (stray " +
                    std::to_string(bytes.size() % kCifarRecord) + " bytes at offset " +
                    std::to_string(bytes.size() - bytes.size() % kCifarRecord) + ")");
  const int m = int(bytes.size() / kCifarRecord);
  ImageDataset ds;
  ds.name = "cifar10";
  ds.images.resize(size_t(m) * kCifarPixels);
  ds.labels.resize(size_t(m));
  for (int i = 0; i < m; ++i) {
    const std::uint8_t* rec = bytes.data() + size_t(i) * kCifarRecord;
    if (rec[0] >= 10)
      throw DataError("cifar10: label byte " + std::to_string(int(rec[0])) + " at offset " +
                      std::to_string(size_t(i) * kCifarRecord) + " out of range");
    ds.labels[size_t(i)] = rec[0];
    float* img = ds.images.data() + size_t(i) * kCifarPixels;
    for (int p = 0; p < kCifarPixels; ++p) img[p] = float(rec[1 + p]) / 255.0f;
  }
  return ds;
}

std::vector<std::uint8_t> serialize_cifar10(const ImageDataset& ds) {
  if (ds.channels != 3 || ds.height != 32 || ds.width != 32)
    throw DataError("cifar10 serializer expects 3x32x32 images");
  std::vector<std::uint8_t> out;
  out.reserve(size_t(ds.count()) * kCifarRecord);
  for (int i = 0; i < ds.count(); ++i) {
    out.push_back(std::uint8_t(ds.labels[size_t(i)]));
    const float* img = ds.image(i);
    for (int p = 0; p < kCifarPixels; ++p)
      out.push_back(std::uint8_t(std::lround(img[p] * 255.0f)));
  }
  return out;
}

IdxArray parse_idx(const std::vector<std::uint8_t>& bytes) {
  auto be32 = [&](size_t off) -> std::uint32_t {
    if (off + 4 > bytes.size())
      throw DataError("idx: truncated header at offset " + std::to_string(off));
    return std::uint32_t(bytes[off]) << 24 | std::uint32_t(bytes[off + 1]) << 16 |
           std::uint32_t(bytes[off + 2]) << 8 | std::uint32_t(bytes[off + 3]);
  };
  IdxArray arr;
  arr.magic = be32(0);
  int ndim;
  if (arr.magic == 0x00000801u) {
    ndim = 1;
  } else if (arr.magic == 0x00000803u) {
    ndim = 3;
  } else {
    throw DataError("idx: bad magic 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", arr.magic);
      return std::string(buf);
    }());
  }
  size_t expect = 1;
  for (int d = 0; d < ndim; ++d) {
    arr.dims.push_back(int(be32(4 + 4 * size_t(d))));
    expect *= size_t(arr.dims.back());
  }
  const size_t header = 4 + 4 * size_t(ndim);
  if (bytes.size() != header + expect)
    throw DataError("idx: header promises " + std::to_string(expect) + " data bytes, file has " +
                    std::to_string(bytes.size() - header));
  arr.data.assign(bytes.begin() + long(header), bytes.end());
  return arr;
}

std::vector<std::uint8_t> serialize_idx(const IdxArray& arr) {
  std::vector<std::uint8_t> out;
  auto be32 = [&](std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
  };
  be32(arr.magic);
  for (int d : arr.dims) be32(std::uint32_t(d));
  out.insert(out.end(), arr.data.begin(), arr.data.end());
  return out;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint64_t fnv1a64(const std::uint8_t* bytes, size_t len) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t file_checksum(const std::string& path) {
  auto bytes = read_file(path);
  return fnv1a64(bytes.data(), bytes.size());
}

namespace {

ImageDataset load_cifar10_dir(const std::string& dir, const std::string& split) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  if (split == "train") {
    for (int i = 1; i <= 5; ++i) {
      const auto p = fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin");
      if (fs::exists(p)) files.push_back(p.string());
    }
    if (files.empty())
      throw DataError("no CIFAR-10 training batches (data_batch_*.bin) under " + dir);
  } else {
    const auto p = fs::path(dir) / "test_batch.bin";
    if (!fs::exists(p)) throw DataError("missing CIFAR-10 test batch " + p.string());
    files.push_back(p.string());
  }
  ImageDataset ds;
  bool first = true;
  for (const auto& f : files) {
    auto part = parse_cifar10(read_file(f));
    if (first) {
      ds = std::move(part);
      first = false;
    } else {
      ds.images.insert(ds.images.end(), part.images.begin(), part.images.end());
      ds.labels.insert(ds.labels.end(), part.labels.begin(), part.labels.end());
    }
  }
  ds.split = split;
  return ds;
}

ImageDataset load_idx_dir(const std::string& dir, const std::string& split) {
  namespace fs = std::filesystem;
  const std::string stem = split == "train" ? "train" : "t10k";
  auto pick = [&](const std::string& suffix) {
    for (const auto& name : {stem + "-" + suffix + "-ubyte", stem + "-" + suffix + ".idx"}) {
      const auto p = fs::path(dir) / name;
      if (fs::exists(p)) return p.string();
    }
    throw DataError("missing IDX file " + (fs::path(dir) / (stem + "-" + suffix + "-ubyte")).string());
  };
  auto images = parse_idx(read_file(pick("images-idx3")));
  auto labels = parse_idx(read_file(pick("labels-idx1")));
  if (images.magic != 0x00000803u || labels.magic != 0x00000801u)
    throw DataError("idx: unexpected magic for image/label pair");
  if (images.dims[0] != labels.dims[0])
    throw DataError("idx: image count " + std::to_string(images.dims[0]) +
                    " does not match label count " + std::to_string(labels.dims[0]));
  ImageDataset ds;
  ds.name = "idx";
  ds.split = split;
  ds.channels = 1;
  ds.height = images.dims[1];
  ds.width = images.dims[2];
  ds.class_count = 10;
  const int m = images.dims[0];
  ds.images.resize(size_t(m) * ds.image_size());
  for (size_t i = 0; i < images.data.size(); ++i)
    ds.images[i] = float(images.data[i]) / 255.0f;
  ds.labels.assign(labels.data.begin(), labels.data.end());
  for (int l : ds.labels)
    if (l < 0 || l >= ds.class_count)
      throw DataError("idx: label " + std::to_string(l) + " out of range");
  return ds;
}

}  // namespace

ImageDataset load_dataset(const std::string& kind, const std::string& dir,
                          const std::string& split) {
  if (split != "train" && split != "test")
    throw ConfigError("unknown dataset split '" + split + "'");
  if (kind == "cifar10") return load_cifar10_dir(dir, split);
  if (kind == "idx") return load_idx_dir(dir, split);
  throw ConfigError("unknown dataset kind '" + kind + "'");
}

void AugPolicy::validate(int channels) const {
  for (double p : {flip_p, jitter_p, grayscale_p})
    if (p < 0.0 || p > 1.0) throw ConfigError("augmentation probabilities must be in [0,1]");
  if (crop_pad < 0) throw ConfigError("crop pad must be non-negative");
  if (jitter_strength < 0.0 || jitter_strength >= 1.0)
    throw ConfigError("jitter strength must be in [0,1)");
  if (int(mean.size()) != channels || int(stddev.size()) != channels)
    throw ConfigError("normalization mean/std must have one entry per channel");
  for (float s : stddev)
    if (s <= 0.0f) throw ConfigError("normalization std must be positive");
}

std::vector<float> augment_view(const float* img, int c, int h, int w,
                                const AugPolicy& policy, Rng& rng) {
  const int hw = h * w;
  std::vector<float> out(img, img + size_t(c) * hw);

  if (policy.crop_pad > 0) {
    const int p = policy.crop_pad;
    const int dy = int(rng.uniform_int(0, 2 * p));
    const int dx = int(rng.uniform_int(0, 2 * p));
    std::vector<float> cropped(size_t(c) * hw, 0.0f);
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y) {
        const int sy = y + dy - p;
        if (sy < 0 || sy >= h) continue;
        for (int x = 0; x < w; ++x) {
          const int sx = x + dx - p;
          if (sx < 0 || sx >= w) continue;
          cropped[(size_t(ch) * h + y) * w + x] = out[(size_t(ch) * h + sy) * w + sx];
        }
      }
    out = std::move(cropped);
  }

  if (rng.bernoulli(policy.flip_p)) {
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y) {
        float* row = out.data() + (size_t(ch) * h + y) * w;
        std::reverse(row, row + w);
      }
  }

  if (policy.jitter_strength > 0.0 && rng.bernoulli(policy.jitter_p)) {
    const double s = policy.jitter_strength;
    const float fb = float(rng.uniform(1.0 - s, 1.0 + s));
    const float fc = float(rng.uniform(1.0 - s, 1.0 + s));
    const float fs = float(rng.uniform(1.0 - s, 1.0 + s));
    for (auto& v : out) v = clamp01(v * fb);
    std::vector<float> luma;
    luma_of(out, c, hw, luma);
    float mean_luma = 0;
    for (float v : luma) mean_luma += v;
    mean_luma /= float(hw);
    for (auto& v : out) v = clamp01(mean_luma + (v - mean_luma) * fc);
    luma_of(out, c, hw, luma);
    for (int ch = 0; ch < c; ++ch)
      for (int p = 0; p < hw; ++p) {
        auto& v = out[size_t(ch) * hw + p];
        v = clamp01(luma[size_t(p)] + (v - luma[size_t(p)]) * fs);
      }
  }

  if (rng.bernoulli(policy.grayscale_p)) {
    std::vector<float> luma;
    luma_of(out, c, hw, luma);
    for (int ch = 0; ch < c; ++ch)
      for (int p = 0; p < hw; ++p) out[size_t(ch) * hw + p] = luma[size_t(p)];
  }

  for (int ch = 0; ch < c; ++ch)
    for (int p = 0; p < hw; ++p) {
      auto& v = out[size_t(ch) * hw + p];
      v = (v - policy.mean[size_t(ch)]) / policy.stddev[size_t(ch)];
    }
  return out;
}

std::pair<std::vector<float>, std::vector<float>> two_view_augment(
    const float* img, int c, int h, int w, const AugPolicy& policy, std::uint64_t seed) {
  Rng rng(seed_stream(seed, 0x2e1e3));
  auto v1 = augment_view(img, c, h, w, policy, rng);
  auto v2 = augment_view(img, c, h, w, policy, rng);
  return {std::move(v1), std::move(v2)};
}

namespace {

std::uint64_t image_seed(std::uint64_t batch_seed, int position) {
  return seed_stream(batch_seed, 0xa06, std::uint64_t(position));
}

}  // namespace

Batch make_batch(const ImageDataset& ds, const std::vector<int>& indices,
                 const AugPolicy& policy, std::uint64_t seed) {
  policy.validate(ds.channels);
  const int n = int(indices.size());
  Batch b;
  b.shape = {n, ds.channels, ds.height, ds.width};
  b.images.resize(size_t(n) * ds.image_size());
  b.labels.resize(size_t(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(image_seed(seed, i));
    auto view = augment_view(ds.image(indices[size_t(i)]), ds.channels, ds.height,
                             ds.width, policy, rng);
    std::copy(view.begin(), view.end(), b.images.begin() + long(i) * ds.image_size());
    b.labels[size_t(i)] = ds.labels[size_t(indices[size_t(i)])];
  }
  return b;
}

Batch make_contrastive_batch(const ImageDataset& ds, const std::vector<int>& indices,
                             const AugPolicy& policy, std::uint64_t seed) {
  policy.validate(ds.channels);
  const int n = int(indices.size());
  Batch b;
  b.shape = {2 * n, ds.channels, ds.height, ds.width};
  b.images.resize(size_t(2 * n) * ds.image_size());
  b.labels.resize(size_t(n));
  for (int i = 0; i < n; ++i) {
    auto [v1, v2] = two_view_augment(ds.image(indices[size_t(i)]), ds.channels, ds.height,
                                     ds.width, policy, image_seed(seed, i));
    std::copy(v1.begin(), v1.end(), b.images.begin() + long(i) * ds.image_size());
    std::copy(v2.begin(), v2.end(), b.images.begin() + long(n + i) * ds.image_size());
    b.labels[size_t(i)] = ds.labels[size_t(indices[size_t(i)])];
  }
  return b;
}

Batch make_eval_batch(const ImageDataset& ds, const std::vector<int>& indices,
                      const AugPolicy& policy) {
  auto plain = AugPolicy::none(policy.mean, policy.stddev);
  return make_batch(ds, indices, plain, 0);
}

SemiSplit semi_split(const ImageDataset& ds, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw ConfigError("semi_split: fraction must be in (0,1], got " + std::to_string(fraction));
  std::vector<std::vector<int>> per_class(size_t(ds.class_count));
  for (int i = 0; i < ds.count(); ++i) per_class[size_t(ds.labels[size_t(i)])].push_back(i);

  // Largest-remainder allocation keeps every class within 1 of exact
  // stratification while matching the global target count.
  const long target = std::lround(fraction * ds.count());
  std::vector<long> take(size_t(ds.class_count));
  std::vector<std::pair<double, int>> remainders;
  long assigned = 0;
  for (int c = 0; c < ds.class_count; ++c) {
    const double exact = fraction * double(per_class[size_t(c)].size());
    take[size_t(c)] = long(std::floor(exact));
    assigned += take[size_t(c)];
    remainders.push_back({exact - std::floor(exact), c});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t r = 0; assigned < target && r < remainders.size(); ++r, ++assigned) {
    const int c = remainders[r].second;
    if (take[size_t(c)] < long(per_class[size_t(c)].size())) ++take[size_t(c)];
  }

  SemiSplit split;
  split.fraction = fraction;
  split.seed = seed;
  Rng rng(seed_stream(seed, 0x5e71));
  for (int c = 0; c < ds.class_count; ++c) {
    auto& idx = per_class[size_t(c)];
    rng.shuffle(idx);
    if (!idx.empty() && take[size_t(c)] == 0)
      std::cerr << "warning: semi_split leaves class " << c << " with zero labels\n";
    for (size_t i = 0; i < idx.size(); ++i) {
      if (long(i) < take[size_t(c)])
        split.labeled_indices.push_back(idx[i]);
      else
        split.unlabeled_indices.push_back(idx[i]);
    }
  }
  std::sort(split.labeled_indices.begin(), split.labeled_indices.end());
  std::sort(split.unlabeled_indices.begin(), split.unlabeled_indices.end());
  return split;
}

std::vector<int> stratified_subset(const ImageDataset& ds, int n, std::uint64_t seed) {
  if (n <= 0 || n > ds.count())
    throw ConfigError("subset size " + std::to_string(n) + " invalid for dataset of " +
                      std::to_string(ds.count()));
  std::vector<std::vector<int>> per_class(size_t(ds.class_count));
  for (int i = 0; i < ds.count(); ++i) per_class[size_t(ds.labels[size_t(i)])].push_back(i);
  Rng rng(seed_stream(seed, 0x5b5e7));
  std::vector<int> out;
  // round-robin across classes until n indices are drawn
  std::vector<size_t> cursor(size_t(ds.class_count), 0);
  for (auto& idx : per_class) rng.shuffle(idx);
  int c = 0;
  while (int(out.size()) < n) {
    if (cursor[size_t(c)] < per_class[size_t(c)].size())
      out.push_back(per_class[size_t(c)][cursor[size_t(c)]++]);
    c = (c + 1) % ds.class_count;
  }
  std::sort(out.begin(), out.end());
  return out;
}

ImageDataset take_subset(const ImageDataset& ds, const std::vector<int>& indices) {
  ImageDataset out;
  out.name = ds.name;
  out.split = ds.split;
  out.class_count = ds.class_count;
  out.channels = ds.channels;
  out.height = ds.height;
  out.width = ds.width;
  out.labels.reserve(indices.size());
  out.images.reserve(indices.size() * size_t(ds.image_size()));
  for (int i : indices) {
    if (i < 0 || i >= ds.count())
      throw DataError("subset index " + std::to_string(i) + " out of range");
    out.labels.push_back(ds.labels[size_t(i)]);
    out.images.insert(out.images.end(), ds.image(i), ds.image(i) + ds.image_size());
  }
  return out;
}

}  // namespace cds::data
