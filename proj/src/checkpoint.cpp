#include "cds/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

namespace cds::ckpt {

namespace {

constexpr char kMagic[8] = {'C', 'D', 'S', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

void put_f32(std::string& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size())
      throw ConfigError("checkpoint truncated at offset " + std::to_string(pos));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = std::uint32_t(std::uint8_t(buf[pos])) |
                      std::uint32_t(std::uint8_t(buf[pos + 1])) << 8 |
                      std::uint32_t(std::uint8_t(buf[pos + 2])) << 16 |
                      std::uint32_t(std::uint8_t(buf[pos + 3])) << 24;
    pos += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return std::uint8_t(buf[pos++]);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

nlohmann::json model_meta(const nn::Model<float>& model) {
  const auto& arch = model.arch();
  nlohmann::json meta;
  meta["format_version"] = kVersion;
  meta["arch"] = {{"family", nn::family_name(arch.family)},
                  {"k", arch.k},
                  {"widths", arch.widths},
                  {"num_classes", arch.num_classes},
                  {"in_channels", arch.in_channels}};
  nlohmann::json proj = nlohmann::json::array();
  for (const auto& h : model.proj_heads)
    proj.push_back({{"stage", h.attach_stage},
                    {"embed_dim", h.embed_dim},
                    {"hidden", h.fc1.weight->shape[0]},
                    {"conv_stride", h.conv.conv.stride}});
  nlohmann::json aux = nlohmann::json::array();
  for (const auto& h : model.aux_heads) aux.push_back({{"stage", h.attach_stage}});
  meta["projection_heads"] = proj;
  meta["aux_classifiers"] = aux;
  return meta;
}

nn::Model<float> model_from_meta(const nlohmann::json& meta) {
  nn::ArchSpec spec;
  const auto& a = meta.at("arch");
  spec.family = nn::family_from_name(a.at("family").get<std::string>());
  spec.k = a.at("k").get<int>();
  spec.widths = a.at("widths").get<std::vector<int>>();
  spec.num_classes = a.at("num_classes").get<int>();
  spec.in_channels = a.at("in_channels").get<int>();
  auto model = nn::build_backbone<float>(spec, 0);
  Rng rng(0);
  for (const auto& h : meta.at("projection_heads")) {
    const int stage = h.at("stage").get<int>();
    model.proj_heads.push_back(nn::ProjectionHead<float>::make(
        stage, model.backbone.stage_out_channels(stage), h.at("hidden").get<int>(),
        h.at("embed_dim").get<int>(), h.at("conv_stride").get<int>(), rng));
  }
  for (const auto& h : meta.at("aux_classifiers")) {
    const int stage = h.at("stage").get<int>();
    model.aux_heads.push_back(nn::AuxClassifier<float>::make(
        stage, model.backbone.stage_out_channels(stage), spec.num_classes, rng));
  }
  return model;
}

}  // namespace

void save_checkpoint(const nn::Model<float>& model, const std::string& path) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  const std::string meta = model_meta(model).dump();
  put_u32(out, std::uint32_t(meta.size()));
  out += meta;

  nn::Named<float> params, buffers;
  model.collect(params, buffers);
  nn::Named<float> all = params;
  all.insert(all.end(), buffers.begin(), buffers.end());

  put_u32(out, std::uint32_t(all.size()));
  for (const auto& [name, st] : all) {
    put_u32(out, std::uint32_t(name.size()));
    out += name;
    out.push_back(char(0));  // dtype: float32
    out.push_back(char(st->shape.size()));
    for (int d : st->shape) put_u32(out, std::uint32_t(d));
    for (float v : st->data) put_f32(out, v);
  }

  const auto tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint to " + tmp);
    f.write(out.data(), std::streamsize(out.size()));
  }
  std::filesystem::rename(tmp, path);
}

nn::Model<float> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r{buf};
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    throw ConfigError("not a checkpoint file: " + path);
  const auto version = r.u32();
  if (version != kVersion)
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.bytes(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("corrupt checkpoint meta: ") + e.what());
  }
  nn::Model<float> model;
  try {
    model = model_from_meta(meta);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("corrupt checkpoint meta: ") + e.what());
  }

  std::map<std::string, std::vector<float>> entries;
  std::map<std::string, Shape> shapes;
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u32());
    const auto dtype = r.u8();
    if (dtype != 0)
      throw ConfigError("checkpoint entry '" + name + "' has unsupported dtype " +
                        std::to_string(int(dtype)));
    const int ndim = r.u8();
    Shape shape(static_cast<size_t>(ndim), 0);
    for (int d = 0; d < ndim; ++d) shape[size_t(d)] = int(r.u32());
    std::vector<float> vals(static_cast<size_t>(numel(shape)), 0.f);
    for (auto& v : vals) v = r.f32();
    entries[name] = std::move(vals);
    shapes[name] = std::move(shape);
  }

  nn::Named<float> params, buffers;
  model.collect(params, buffers);
  nn::Named<float> all = params;
  all.insert(all.end(), buffers.begin(), buffers.end());
  if (all.size() != entries.size())
    throw ConfigError("checkpoint arch mismatch: expected " + std::to_string(all.size()) +
                      " arrays, file has " + std::to_string(entries.size()));
  for (auto& [name, st] : all) {
    auto it = entries.find(name);
    if (it == entries.end())
      throw ConfigError("checkpoint arch mismatch: missing array '" + name + "'");
    if (shapes[name] != st->shape)
      throw ConfigError("checkpoint arch mismatch: '" + name + "' has shape " +
                        shape_str(shapes[name]) + ", expected " + shape_str(st->shape));
    st->data = it->second;
  }
  return model;
}

}  // namespace cds::ckpt
