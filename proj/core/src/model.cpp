// SPDX-License-Identifier: Apache-2.0
#include "protomm/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>

namespace protomm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

struct BlockWriter {
  std::ofstream& out;
  json& index;
  std::uint64_t offset = 0;

  void put(const std::string& name, const std::vector<int>& shape, const float* data, std::size_t n) {
    static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
    index.push_back({{"name", name}, {"shape", shape}, {"offset", offset}, {"dtype", "f32le"}});
    offset += n * sizeof(float);
  }
};

std::vector<float> read_block(std::ifstream& in, const json& entry) {
  std::size_t n = 1;
  for (int d : entry.at("shape").get<std::vector<int>>()) n *= static_cast<std::size_t>(d);
  std::vector<float> buf(n);
  in.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw Error("checkpoint block '" + entry.at("name").get<std::string>() + "' is truncated");
  return buf;
}

}  // namespace

template <typename S>
ProjectionHead<S> ProjectionHead<S>::init(int dim, std::uint64_t seed) {
  Rng rng = derive_rng(seed, {0x4ead});
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  ProjectionHead h;
  h.weight.resize(dim, dim);
  h.bias.resize(dim);
  for (Eigen::Index i = 0; i < h.weight.size(); ++i) h.weight.data()[i] = static_cast<S>(u(rng));
  for (Eigen::Index i = 0; i < h.bias.size(); ++i) h.bias[i] = static_cast<S>(u(rng));
  return h;
}

template <typename S>
Mat<S> head_forward(const ProjectionHead<S>& head, const Mat<S>& x, HeadCache<S>* cache) {
  Mat<S> y = x * head.weight.transpose();
  y.rowwise() += head.bias.transpose();
  Vec<S> norms;
  Mat<S> z = normalize_rows<S>(y, &norms);
  if (cache) {
    cache->input = x;
    cache->output = z;
    cache->norms = std::move(norms);
  }
  return z;
}

template <typename S>
Mat<S> head_backward(const ProjectionHead<S>& head, const HeadCache<S>& cache, const Mat<S>& grad,
                     Mat<S>& grad_weight, Vec<S>& grad_bias) {
  const Mat<S> dy = normalize_rows_backward<S>(cache.output, cache.norms, grad);
  grad_weight.noalias() += dy.transpose() * cache.input;
  grad_bias += dy.colwise().sum().transpose();
  return dy * head.weight;
}

template struct ProjectionHead<float>;
template struct ProjectionHead<double>;
template Mat<float> head_forward<float>(const ProjectionHead<float>&, const Mat<float>&, HeadCache<float>*);
template Mat<double> head_forward<double>(const ProjectionHead<double>&, const Mat<double>&, HeadCache<double>*);
template Mat<float> head_backward<float>(const ProjectionHead<float>&, const HeadCache<float>&,
                                         const Mat<float>&, Mat<float>&, Vec<float>&);
template Mat<double> head_backward<double>(const ProjectionHead<double>&, const HeadCache<double>&,
                                           const Mat<double>&, Mat<double>&, Vec<double>&);

const EncoderParams<float>& Model::encoder(Modality m) const {
  auto it = encoders.find(m);
  if (it == encoders.end()) throw Error("model has no " + std::string(to_string(m)) + " encoder");
  return it->second;
}

int Model::embed_dim() const {
  if (encoders.empty()) throw Error("model has no encoders");
  return encoders.begin()->second.config.embed_dim;
}

void save_checkpoint(const Model& model, const CheckpointMeta& meta, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw Error("cannot write checkpoint into '" + dir.string() + "'");
  json blocks = json::array();
  BlockWriter w{bin, blocks};

  json encoders = json::object();
  for (auto m : model.modalities) {
    const auto& enc = model.encoder(m);
    const std::string prefix = "encoder." + std::string(to_string(m)) + ".";
    for (const auto& t : enc.weights) w.put(prefix + t.name, t.shape, t.data.data(), t.data.size());
    for (const auto& t : enc.buffers) w.put(prefix + t.name, t.shape, t.data.data(), t.data.size());
    encoders[std::string(to_string(m))] = {{"config", enc.config}, {"seed", enc.seed}};
  }
  if (model.prototypes) {
    const auto& p = model.prototypes->matrix;
    w.put("prototypes", {static_cast<int>(p.rows()), static_cast<int>(p.cols())}, p.data(),
          static_cast<std::size_t>(p.size()));
  }
  for (const auto& [m, h] : model.heads) {
    const std::string prefix = "head." + std::string(to_string(m)) + ".";
    w.put(prefix + "weight", {static_cast<int>(h.weight.rows()), static_cast<int>(h.weight.cols())},
          h.weight.data(), static_cast<std::size_t>(h.weight.size()));
    w.put(prefix + "bias", {static_cast<int>(h.bias.size())}, h.bias.data(),
          static_cast<std::size_t>(h.bias.size()));
  }
  if (!model.heads.empty()) w.put("clip.log_temperature", {1}, &model.clip_log_temperature, 1);

  std::vector<std::string> mods;
  for (auto m : model.modalities) mods.emplace_back(to_string(m));
  json manifest;
  manifest["format"] = "protomm-checkpoint/1";
  manifest["modalities"] = mods;
  manifest["encoders"] = encoders;
  manifest["config"] = meta.config;
  manifest["metrics"] = meta.metrics;
  manifest["architecture"] = {
      {"layout", "bottleneck [stem conv, 3 convs per block, linear head]"},
      {"stride_placement", "stem and first block of every stage (on the spatial conv)"},
      {"normalization", "batch norm after every conv; running statistics at evaluation"},
      {"pooling", "global max over time, then linear projection and L2 normalization"},
      {"shortcut_convs_counted", false}};
  if (model.prototypes) {
    manifest["prototypes"] = {{"P_count", model.prototypes->count()},
                              {"tau", meta.assignment.temperature},
                              {"epsilon", meta.assignment.sinkhorn_epsilon},
                              {"iters", meta.assignment.sinkhorn_iters},
                              {"sinkhorn_scope", "per (modality, view) batch"}};
  }
  manifest["blocks"] = blocks;
  std::ofstream js(dir / "manifest.json");
  js << manifest.dump(2) << '\n';
}

Model load_checkpoint(const fs::path& dir, CheckpointMeta* meta) {
  std::ifstream js(dir / "manifest.json");
  if (!js) throw Error("no checkpoint manifest in '" + dir.string() + "'");
  const json manifest = json::parse(js);
  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw Error("no params.bin in '" + dir.string() + "'");

  std::map<std::string, json> by_name;
  for (const auto& b : manifest.at("blocks")) by_name[b.at("name").get<std::string>()] = b;
  auto block = [&](const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error("checkpoint lacks block '" + name + "'");
    return read_block(bin, it->second);
  };

  Model model;
  for (const auto& name : manifest.at("modalities")) {
    const Modality m = modality_from_string(name.get<std::string>());
    model.modalities.push_back(m);
    const auto& e = manifest.at("encoders").at(name.get<std::string>());
    auto params = init_encoder_unchecked<float>(e.at("config").get<EncoderConfig>(),
                                                e.at("seed").get<std::uint64_t>());
    const std::string prefix = "encoder." + name.get<std::string>() + ".";
    for (auto* group : {&params.weights, &params.buffers}) {
      for (auto& t : *group) {
        const auto buf = block(prefix + t.name);
        if (static_cast<Eigen::Index>(buf.size()) != t.data.size()) {
          throw Error("checkpoint block '" + prefix + t.name + "' has the wrong size");
        }
        t.data = Eigen::Map<const Vec<float>>(buf.data(), t.data.size());
      }
    }
    model.encoders.emplace(m, std::move(params));
  }
  if (by_name.count("prototypes")) {
    const auto shape = by_name["prototypes"].at("shape").get<std::vector<int>>();
    const auto buf = block("prototypes");
    PrototypeBank<float> bank;
    bank.matrix = Eigen::Map<const Mat<float>>(buf.data(), shape.at(0), shape.at(1));
    model.prototypes = std::move(bank);
  }
  for (auto m : model.modalities) {
    const std::string prefix = "head." + std::string(to_string(m)) + ".";
    if (!by_name.count(prefix + "weight")) continue;
    const auto shape = by_name[prefix + "weight"].at("shape").get<std::vector<int>>();
    const auto w = block(prefix + "weight");
    const auto b = block(prefix + "bias");
    ProjectionHead<float> h;
    h.weight = Eigen::Map<const Mat<float>>(w.data(), shape.at(0), shape.at(1));
    h.bias = Eigen::Map<const Vec<float>>(b.data(), static_cast<Eigen::Index>(b.size()));
    model.heads.emplace(m, std::move(h));
  }
  if (by_name.count("clip.log_temperature")) model.clip_log_temperature = block("clip.log_temperature").at(0);

  if (meta) {
    meta->config = manifest.value("config", json::object());
    meta->metrics = manifest.value("metrics", json::object());
    if (manifest.contains("prototypes")) {
      const auto& p = manifest.at("prototypes");
      meta->assignment.temperature = p.at("tau").get<double>();
      meta->assignment.sinkhorn_epsilon = p.at("epsilon").get<double>();
      meta->assignment.sinkhorn_iters = p.at("iters").get<int>();
    }
  }
  return model;
}

std::uint64_t fingerprint(const json& doc) {
  const std::string s = doc.dump();
  std::uint64_t h = kFnvOffset;
  fnv_bytes(h, s.data(), s.size());
  return h;
}

std::uint64_t fingerprint(const Model& model) {
  std::uint64_t h = kFnvOffset;
  for (auto m : model.modalities) {
    const auto& e = model.encoder(m);
    for (const auto* group : {&e.weights, &e.buffers}) {
      for (const auto& t : *group) fnv_bytes(h, t.data.data(), static_cast<std::size_t>(t.data.size()) * sizeof(float));
    }
  }
  if (model.prototypes) {
    const auto& p = model.prototypes->matrix;
    fnv_bytes(h, p.data(), static_cast<std::size_t>(p.size()) * sizeof(float));
  }
  for (const auto& [m, head] : model.heads) {
    fnv_bytes(h, head.weight.data(), static_cast<std::size_t>(head.weight.size()) * sizeof(float));
    fnv_bytes(h, head.bias.data(), static_cast<std::size_t>(head.bias.size()) * sizeof(float));
  }
  fnv_bytes(h, &model.clip_log_temperature, sizeof(float));
  return h;
}

}  // namespace protomm
