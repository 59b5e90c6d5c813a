#include "cds/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace cds::synth {

namespace {

struct Rgb {
  float r, g, b;
};

// Evenly spread hues via the golden ratio; full saturation base colors.
Rgb class_color(int cls, float shift) {
  const float hue = std::fmod(0.618034f * float(cls) + shift, 1.0f) * 6.0f;
  const int i = int(hue) % 6;
  const float f = hue - std::floor(hue);
  switch (i) {
    case 0: return {1.0f, f, 0.0f};
    case 1: return {1.0f - f, 1.0f, 0.0f};
    case 2: return {0.0f, 1.0f, f};
    case 3: return {0.0f, 1.0f - f, 1.0f};
    case 4: return {f, 0.0f, 1.0f};
    default: return {1.0f, 0.0f, 1.0f - f};
  }
}

}  // namespace

data::ImageDataset make_synthetic_cifar(int count, std::uint64_t seed,
                                        const std::string& split) {
  constexpr int H = 32, W = 32, C = 3;
  data::ImageDataset ds;
  ds.name = "synth-cifar10";
  ds.split = split;
  ds.images.resize(size_t(count) * C * H * W);
  ds.labels.resize(size_t(count));
  Rng rng(seed_stream(seed, split == "train" ? 0x51 : 0x52));
  for (int i = 0; i < count; ++i) {
    const int cls = int(rng.uniform_int(0, 9));
    ds.labels[size_t(i)] = cls;

    // class identity: stripe orientation (multiples of 9 degrees stay
    // distinguishable under horizontal flips), frequency, palette
    const double theta = M_PI * double(cls) / 20.0;
    const double freq = 2.0 + double(cls % 3);
    const Rgb ca = class_color(cls, 0.00f);
    const Rgb cb = class_color(cls, 0.23f);

    // instance variation
    const double phase = rng.uniform(0, 2 * M_PI);
    const double amp = rng.uniform(0.55, 1.0);
    const float color_gain = float(rng.uniform(0.7, 1.15));
    const double cx = rng.uniform(8, 24), cy = rng.uniform(8, 24);
    const double blob_r = rng.uniform(4, 9);
    const float blob_gain = float(rng.uniform(0.0, 0.35));
    const float noise = 0.09f;
    const float bg = float(rng.uniform(0.05, 0.3));

    float* img = ds.images.data() + size_t(i) * C * H * W;
    const double kx = std::cos(theta) * 2.0 * M_PI * freq / W;
    const double ky = std::sin(theta) * 2.0 * M_PI * freq / H;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double t = 0.5 * (1.0 + amp * std::cos(kx * x + ky * y + phase));
        const double dx = x - cx, dy = y - cy;
        const float blob = blob_gain * float(std::exp(-(dx * dx + dy * dy) / (2 * blob_r * blob_r)));
        const float base[3] = {ca.r * float(t) + cb.r * float(1 - t),
                               ca.g * float(t) + cb.g * float(1 - t),
                               ca.b * float(t) + cb.b * float(1 - t)};
        for (int ch = 0; ch < 3; ++ch) {
          float v = bg + (base[ch] * color_gain) * 0.7f + blob + noise * float(rng.normal());
          img[(size_t(ch) * H + y) * W + x] = std::min(1.0f, std::max(0.0f, v));
        }
      }
    }
  }
  return ds;
}

void write_synthetic_cifar_dir(const std::string& dir, int train_count, int test_count,
                               std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto train = make_synthetic_cifar(train_count, seed, "train");
  auto test = make_synthetic_cifar(test_count, seed, "test");
  const int per = (train_count + 4) / 5;
  for (int b = 0; b < 5; ++b) {
    const int lo = b * per;
    const int hi = std::min(train_count, (b + 1) * per);
    std::vector<int> idx;
    for (int i = lo; i < hi; ++i) idx.push_back(i);
    auto part = data::take_subset(train, idx);
    auto bytes = data::serialize_cifar10(part);
    std::ofstream f(fs::path(dir) / ("data_batch_" + std::to_string(b + 1) + ".bin"),
                    std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  }
  auto bytes = data::serialize_cifar10(test);
  std::ofstream f(fs::path(dir) / "test_batch.bin", std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

}  // namespace cds::synth
