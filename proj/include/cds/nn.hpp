#pragma once

// Staged classifier backbones with tap points, plus the trainable
// attachments used during training: auxiliary classifiers (deep supervision)
// and projection heads (contrastive supervision). Attachments never touch
// the backbone's forward computation and can be discarded for inference.

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cds/common.hpp"
#include "cds/tensor.hpp"

namespace cds::nn {

template <typename T>
using Named = std::vector<std::pair<std::string, StoragePtr<T>>>;

namespace init {

template <typename T>
StoragePtr<T> he_conv(int out_c, int in_c, int k, Rng& rng) {
  const double std = std::sqrt(2.0 / (double(in_c) * k * k));
  std::vector<T> w(size_t(out_c) * in_c * k * k);
  for (auto& v : w) v = T(rng.normal() * std);
  return make_storage<T>({out_c, in_c, k, k}, std::move(w), true);
}

template <typename T>
StoragePtr<T> uniform_linear(int out_dim, int in_dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(in_dim));
  std::vector<T> w(size_t(out_dim) * in_dim);
  for (auto& v : w) v = T(rng.uniform(-bound, bound));
  return make_storage<T>({out_dim, in_dim}, std::move(w), true);
}

template <typename T>
StoragePtr<T> constant(Shape shape, T value, bool requires_grad) {
  std::vector<T> v(size_t(numel(shape)), value);
  return make_storage<T>(std::move(shape), std::move(v), requires_grad);
}

}  // namespace init

template <typename T>
struct Conv2d {
  StoragePtr<T> weight;
  int stride = 1;
  int pad = 1;

  static Conv2d make(int in_c, int out_c, int k, int stride, int pad, Rng& rng) {
    return {init::he_conv<T>(out_c, in_c, k, rng), stride, pad};
  }

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x) const {
    return cds::conv2d(x, tape.leaf(weight), stride, pad);
  }

  void collect(const std::string& prefix, Named<T>& params, Named<T>&) const {
    params.emplace_back(prefix + ".weight", weight);
  }
};

template <typename T>
struct BatchNorm2d {
  StoragePtr<T> gamma, beta, running_mean, running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  static BatchNorm2d make(int channels) {
    return {init::constant<T>({channels}, T(1), true),
            init::constant<T>({channels}, T(0), true),
            init::constant<T>({channels}, T(0), false),
            init::constant<T>({channels}, T(1), false)};
  }

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x, bool train) const {
    return cds::batchnorm2d(x, tape.leaf(gamma), tape.leaf(beta), running_mean,
                            running_var, momentum, eps, train);
  }

  void collect(const std::string& prefix, Named<T>& params, Named<T>& buffers) const {
    params.emplace_back(prefix + ".gamma", gamma);
    params.emplace_back(prefix + ".beta", beta);
    buffers.emplace_back(prefix + ".running_mean", running_mean);
    buffers.emplace_back(prefix + ".running_var", running_var);
  }
};

template <typename T>
struct Linear {
  StoragePtr<T> weight, bias;

  static Linear make(int in_dim, int out_dim, Rng& rng) {
    return {init::uniform_linear<T>(out_dim, in_dim, rng),
            init::constant<T>({out_dim}, T(0), true)};
  }

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x) const {
    return cds::linear(x, tape.leaf(weight), tape.leaf(bias));
  }

  void collect(const std::string& prefix, Named<T>& params, Named<T>&) const {
    params.emplace_back(prefix + ".weight", weight);
    params.emplace_back(prefix + ".bias", bias);
  }
};

template <typename T>
struct ConvBnRelu {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;

  static ConvBnRelu make(int in_c, int out_c, int k, int stride, int pad, Rng& rng) {
    return {Conv2d<T>::make(in_c, out_c, k, stride, pad, rng), BatchNorm2d<T>::make(out_c)};
  }

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x, bool train) const {
    return cds::relu(bn.forward(tape, conv.forward(tape, x), train));
  }

  void collect(const std::string& prefix, Named<T>& params, Named<T>& buffers) const {
    conv.collect(prefix + ".conv", params, buffers);
    bn.collect(prefix + ".bn", params, buffers);
  }
};

template <typename T>
struct BasicBlock {
  Conv2d<T> conv1;
  BatchNorm2d<T> bn1;
  Conv2d<T> conv2;
  BatchNorm2d<T> bn2;
  bool has_down = false;
  Conv2d<T> down_conv;
  BatchNorm2d<T> down_bn;

  static BasicBlock make(int in_c, int out_c, int stride, Rng& rng) {
    BasicBlock b;
    b.conv1 = Conv2d<T>::make(in_c, out_c, 3, stride, 1, rng);
    b.bn1 = BatchNorm2d<T>::make(out_c);
    b.conv2 = Conv2d<T>::make(out_c, out_c, 3, 1, 1, rng);
    b.bn2 = BatchNorm2d<T>::make(out_c);
    b.has_down = stride != 1 || in_c != out_c;
    if (b.has_down) {
      b.down_conv = Conv2d<T>::make(in_c, out_c, 1, stride, 0, rng);
      b.down_bn = BatchNorm2d<T>::make(out_c);
    }
    return b;
  }

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x, bool train) const {
    auto h = cds::relu(bn1.forward(tape, conv1.forward(tape, x), train));
    h = bn2.forward(tape, conv2.forward(tape, h), train);
    auto skip = has_down ? down_bn.forward(tape, down_conv.forward(tape, x), train) : x;
    return cds::relu(cds::add(h, skip));
  }

  void collect(const std::string& prefix, Named<T>& params, Named<T>& buffers) const {
    conv1.collect(prefix + ".conv1", params, buffers);
    bn1.collect(prefix + ".bn1", params, buffers);
    conv2.collect(prefix + ".conv2", params, buffers);
    bn2.collect(prefix + ".bn2", params, buffers);
    if (has_down) {
      down_conv.collect(prefix + ".down.conv", params, buffers);
      down_bn.collect(prefix + ".down.bn", params, buffers);
    }
  }
};

enum class Family { PlainCnn, SmallResnet };

inline const char* family_name(Family f) {
  return f == Family::PlainCnn ? "plain-cnn" : "small-resnet";
}

inline Family family_from_name(const std::string& s) {
  if (s == "plain-cnn") return Family::PlainCnn;
  if (s == "small-resnet") return Family::SmallResnet;
  throw ConfigError("unknown architecture family '" + s + "'");
}

struct ArchSpec {
  Family family = Family::SmallResnet;
  int k = 4;
  std::vector<int> widths = {16, 32, 64, 128};
  int num_classes = 10;
  int in_channels = 3;

  void validate() const {
    if (k < 1) throw ConfigError("arch: K must be >= 1");
    if (static_cast<int>(widths.size()) != k)
      throw ConfigError("arch: widths count " + std::to_string(widths.size()) +
                        " does not match K=" + std::to_string(k));
    if (num_classes < 1) throw ConfigError("arch: num_classes must be >= 1");
    for (int w : widths)
      if (w < 1) throw ConfigError("arch: widths must be positive");
  }
};

// One backbone stage f_i. Stage 1 keeps full resolution, every later stage
// halves the spatial size with its first stride-2 convolution.
template <typename T>
struct Stage {
  // plain-cnn: single conv block; small-resnet: stem (stage 1) or residual block
  std::vector<std::variant<ConvBnRelu<T>, BasicBlock<T>>> blocks;

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x, bool train) const {
    Tensor<T> h = x;
    for (const auto& blk : blocks)
      h = std::visit([&](const auto& b) { return b.forward(tape, h, train); }, blk);
    return h;
  }

  void collect(const std::string& prefix, Named<T>& params, Named<T>& buffers) const {
    for (size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = prefix + ".block" + std::to_string(i);
      std::visit([&](const auto& b) { b.collect(p, params, buffers); }, blocks[i]);
    }
  }
};

template <typename T>
struct StagedNetwork {
  ArchSpec spec;
  std::vector<Stage<T>> stages;
  Linear<T> fc;  // classifier g: global average pool + fully connected

  int stage_out_channels(int stage_1based) const { return spec.widths[size_t(stage_1based - 1)]; }

  // Nominal spatial size after each stage for a given input size.
  std::vector<int> stage_out_spatial(int input_hw) const {
    std::vector<int> out(size_t(spec.k));
    int s = input_hw;
    for (int i = 0; i < spec.k; ++i) {
      if (i > 0) s = (s - 1) / 2 + 1;
      out[size_t(i)] = s;
    }
    return out;
  }

  std::vector<Tensor<T>> forward_stages(Tape<T>& tape, const Tensor<T>& x, bool train) const {
    std::vector<Tensor<T>> feats;
    feats.reserve(stages.size());
    Tensor<T> h = x;
    for (const auto& st : stages) {
      h = st.forward(tape, h, train);
      feats.push_back(h);
    }
    return feats;
  }

  Tensor<T> classify(Tape<T>& tape, const Tensor<T>& last_feat) const {
    return fc.forward(tape, cds::global_avg_pool(last_feat));
  }

  void collect(Named<T>& params, Named<T>& buffers) const {
    for (size_t i = 0; i < stages.size(); ++i)
      stages[i].collect("backbone.stage" + std::to_string(i + 1), params, buffers);
    fc.collect("backbone.fc", params, buffers);
  }
};

template <typename T>
StagedNetwork<T> build_staged_network(const ArchSpec& spec, Rng& rng) {
  spec.validate();
  StagedNetwork<T> net;
  net.spec = spec;
  int in_c = spec.in_channels;
  for (int i = 0; i < spec.k; ++i) {
    const int out_c = spec.widths[size_t(i)];
    const int stride = i == 0 ? 1 : 2;
    Stage<T> stage;
    if (spec.family == Family::PlainCnn) {
      stage.blocks.emplace_back(ConvBnRelu<T>::make(in_c, out_c, 3, stride, 1, rng));
    } else {
      if (i == 0) {
        stage.blocks.emplace_back(ConvBnRelu<T>::make(in_c, out_c, 3, 1, 1, rng));
        stage.blocks.emplace_back(BasicBlock<T>::make(out_c, out_c, 1, rng));
      } else {
        stage.blocks.emplace_back(BasicBlock<T>::make(in_c, out_c, stride, rng));
      }
    }
    net.stages.push_back(std::move(stage));
    in_c = out_c;
  }
  net.fc = Linear<T>::make(in_c, spec.num_classes, rng);
  return net;
}

// ---------------------------------------------------------------------------
// Heads

enum class HeadKind { Projection, Classifier };

enum class HeadScheme { Uniform, Downsampling, Shallow, Deep };

inline HeadScheme scheme_from_name(const std::string& s) {
  if (s == "uniform") return HeadScheme::Uniform;
  if (s == "downsampling") return HeadScheme::Downsampling;
  if (s == "shallow") return HeadScheme::Shallow;
  if (s == "deep") return HeadScheme::Deep;
  throw ConfigError("unknown head scheme '" + s + "'");
}

inline const char* scheme_name(HeadScheme s) {
  switch (s) {
    case HeadScheme::Uniform: return "uniform";
    case HeadScheme::Downsampling: return "downsampling";
    case HeadScheme::Shallow: return "shallow";
    case HeadScheme::Deep: return "deep";
  }
  return "?";
}

// Stage indices (1-based, in 1..K-1) that receive heads under a scheme.
// Every stage boundary in this architecture downsamples, so the
// downsampling scheme picks from all of 1..K-1, deepest first.
inline std::vector<int> head_stages(HeadScheme scheme, int k, int count) {
  const int avail = k - 1;
  if (count < 1 || count > avail)
    throw ConfigError("head count " + std::to_string(count) + " exceeds available tap positions (" +
                      std::to_string(avail) + ") for K=" + std::to_string(k));
  std::vector<int> out;
  switch (scheme) {
    case HeadScheme::Uniform: {
      if (count == 1) {
        out.push_back(1 + (avail - 1) / 2 + (avail - 1) % 2);  // middle, rounded up
      } else {
        for (int j = 0; j < count; ++j) {
          const double pos = 1.0 + double(j) * double(avail - 1) / double(count - 1);
          out.push_back(int(std::lround(pos)));
        }
      }
      break;
    }
    case HeadScheme::Downsampling:
    case HeadScheme::Deep:
      for (int s = k - count; s <= k - 1; ++s) out.push_back(s);
      break;
    case HeadScheme::Shallow:
      for (int s = 1; s <= count; ++s) out.push_back(s);
      break;
  }
  return out;
}

// Projection head: conv block, global average pool, two-layer MLP, then
// row normalization onto the unit sphere.
template <typename T>
struct ProjectionHead {
  int attach_stage = 1;  // consumes the output of backbone stage attach_stage
  int embed_dim = 128;
  ConvBnRelu<T> conv;
  Linear<T> fc1, fc2;

  static ProjectionHead make(int attach_stage, int in_c, int hidden, int embed_dim,
                             int conv_stride, Rng& rng) {
    ProjectionHead h;
    h.attach_stage = attach_stage;
    h.embed_dim = embed_dim;
    h.conv = ConvBnRelu<T>::make(in_c, 2 * in_c, 3, conv_stride, 1, rng);
    h.fc1 = Linear<T>::make(2 * in_c, hidden, rng);
    h.fc2 = Linear<T>::make(hidden, embed_dim, rng);
    return h;
  }

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& feat, bool train) const {
    auto h = conv.forward(tape, feat, train);
    auto pooled = cds::global_avg_pool(h);
    auto z = fc2.forward(tape, cds::relu(fc1.forward(tape, pooled)));
    return cds::l2_normalize_rows(z);
  }

  void collect(const std::string& prefix, Named<T>& params, Named<T>& buffers) const {
    conv.collect(prefix + ".conv", params, buffers);
    fc1.collect(prefix + ".fc1", params, buffers);
    fc2.collect(prefix + ".fc2", params, buffers);
  }
};

// Auxiliary classifier g_i: global average pool + single fully connected map.
template <typename T>
struct AuxClassifier {
  int attach_stage = 1;
  Linear<T> fc;

  static AuxClassifier make(int attach_stage, int in_c, int num_classes, Rng& rng) {
    return {attach_stage, Linear<T>::make(in_c, num_classes, rng)};
  }

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& feat) const {
    return fc.forward(tape, cds::global_avg_pool(feat));
  }

  void collect(const std::string& prefix, Named<T>& params, Named<T>& buffers) const {
    fc.collect(prefix + ".fc", params, buffers);
  }
};

template <typename T>
struct TapOutputs {
  Tensor<T> final_logits;                 // [N x C]
  std::vector<Tensor<T>> stage_features;  // K entries
  std::vector<Tensor<T>> aux_logits;      // one per attached classifier
  std::vector<Tensor<T>> aux_embeddings;  // one per attached projection head
};

struct HeadConfig {
  HeadKind kind = HeadKind::Projection;
  HeadScheme scheme = HeadScheme::Uniform;
  int count = 0;          // 0 means the default K-1
  int embed_dim = 128;
  int hidden_dim = 256;
  int conv_stride = 1;
};

template <typename T>
struct Model {
  StagedNetwork<T> backbone;
  std::vector<ProjectionHead<T>> proj_heads;
  std::vector<AuxClassifier<T>> aux_heads;

  const ArchSpec& arch() const { return backbone.spec; }

  void collect(Named<T>& params, Named<T>& buffers) const {
    backbone.collect(params, buffers);
    for (size_t i = 0; i < proj_heads.size(); ++i)
      proj_heads[i].collect("head.proj" + std::to_string(i + 1), params, buffers);
    for (size_t i = 0; i < aux_heads.size(); ++i)
      aux_heads[i].collect("head.aux" + std::to_string(i + 1), params, buffers);
  }

  Named<T> named_params() const {
    Named<T> p, b;
    collect(p, b);
    return p;
  }

  Named<T> named_buffers() const {
    Named<T> p, b;
    collect(p, b);
    return b;
  }

  Named<T> backbone_named_params() const {
    Named<T> p, b;
    backbone.collect(p, b);
    return p;
  }

  std::vector<StoragePtr<T>> trainable_params() const {
    std::vector<StoragePtr<T>> out;
    for (auto& [name, st] : named_params()) out.push_back(st);
    return out;
  }

  long param_count() const {
    long n = 0;
    for (auto& [name, st] : named_params()) n += st->numel();
    return n;
  }

  void set_requires_grad(bool rg) {
    for (auto& [name, st] : named_params()) {
      st->requires_grad = rg;
      st->ensure_grad();
    }
  }
};

template <typename T>
Model<T> build_backbone(const ArchSpec& spec, std::uint64_t seed) {
  Rng rng(seed_stream(seed, 0xb011));
  Model<T> m;
  m.backbone = build_staged_network<T>(spec, rng);
  return m;
}

// Place heads at the stages chosen by the scheme. Existing heads of the same
// kind are replaced; the backbone is untouched.
template <typename T>
void attach_heads(Model<T>& model, const HeadConfig& cfg, std::uint64_t seed) {
  const int k = model.arch().k;
  if (k < 2)
    throw ConfigError("cannot attach heads: K=" + std::to_string(k) +
                      " has no intermediate stages");
  const int count = cfg.count > 0 ? cfg.count : k - 1;
  auto stages = head_stages(cfg.scheme, k, count);
  Rng rng(seed_stream(seed, 0x4ead, cfg.kind == HeadKind::Projection ? 1 : 2));
  if (cfg.kind == HeadKind::Projection) {
    model.proj_heads.clear();
    for (int s : stages)
      model.proj_heads.push_back(ProjectionHead<T>::make(
          s, model.backbone.stage_out_channels(s), cfg.hidden_dim, cfg.embed_dim,
          cfg.conv_stride, rng));
  } else {
    model.aux_heads.clear();
    for (int s : stages)
      model.aux_heads.push_back(AuxClassifier<T>::make(
          s, model.backbone.stage_out_channels(s), model.arch().num_classes, rng));
  }
}

// Inference network: same backbone storages, zero head parameters.
template <typename T>
Model<T> head_discard(const Model<T>& model) {
  Model<T> out;
  out.backbone = model.backbone;
  return out;
}

template <typename T>
TapOutputs<T> forward_tapped(const Model<T>& model, Tape<T>& tape, const Tensor<T>& batch,
                             bool train) {
  if (batch.ndim() != 4 || batch.dim(1) != model.arch().in_channels)
    throw DimensionError("forward: batch " + shape_str(batch.shape()) +
                         " does not match arch input (" +
                         std::to_string(model.arch().in_channels) + " channels)");
  TapOutputs<T> taps;
  taps.stage_features = model.backbone.forward_stages(tape, batch, train);
  taps.final_logits = model.backbone.classify(tape, taps.stage_features.back());
  for (const auto& head : model.aux_heads)
    taps.aux_logits.push_back(head.forward(tape, taps.stage_features[size_t(head.attach_stage - 1)]));
  for (const auto& head : model.proj_heads)
    taps.aux_embeddings.push_back(
        head.forward(tape, taps.stage_features[size_t(head.attach_stage - 1)], train));
  return taps;
}

}  // namespace cds::nn
