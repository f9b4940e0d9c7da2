#include "xinet/model.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include "json.hpp"
#include "xinet/errors.hpp"

namespace xinet {

using ad::Shape;
using ad::Tensor;

namespace {

constexpr char kMagic[6] = {'X', 'I', 'N', 'E', 'T', '1'};

void validate_config(const XiNetConfig& cfg) {
  if (cfg.variant != "full" && cfg.variant != "time_only" && cfg.variant != "single_encoder")
    throw UsageError("config: variant must be full, time_only, or single_encoder, got '" +
                     cfg.variant + "'");
  if (cfg.patch < 1 || cfg.input_length < cfg.patch || cfg.input_length % cfg.patch != 0)
    throw UsageError(strformat("config: input_length %lld not divisible by patch %lld",
                               static_cast<long long>(cfg.input_length),
                               static_cast<long long>(cfg.patch)));
  if (cfg.embed_dim < 1) throw UsageError("config: embed_dim must be >= 1");
  if (cfg.stage_depths.empty()) throw UsageError("config: need at least one stage");
  for (int d : cfg.stage_depths)
    if (d < 1) throw UsageError("config: stage depths must be >= 1");
  if (cfg.bottleneck_depth < 1) throw UsageError("config: bottleneck_depth must be >= 1");
  if (cfg.window < 1) throw UsageError("config: window must be >= 1");

  const int64_t tokens = cfg.input_length / cfg.patch;
  const int64_t unit = cfg.window << cfg.stages();
  if (tokens % unit != 0)
    throw UsageError(strformat(
        "config: %lld tokens must be divisible by window*2^stages = %lld",
        static_cast<long long>(tokens), static_cast<long long>(unit)));
  if (!cfg.heads.empty() && cfg.heads.size() != static_cast<size_t>(cfg.stages() + 1))
    throw UsageError(strformat("config: heads list needs %d entries (stages + bottleneck)",
                               cfg.stages() + 1));
  for (int h : cfg.heads)
    if (h < 1) throw UsageError("config: head counts must be >= 1");
}

double f32_lattice(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

XiNetConfig config_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  XiNetConfig cfg;
  static const std::set<std::string> known = {
      "input_length", "patch",   "embed_dim", "stage_depths",   "bottleneck_depth",
      "window",       "heads",   "variant",   "seed",           "spectrum_scale"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw DataError("config: unknown key '" + it.key() + "'");
  try {
    cfg.input_length = j.value("input_length", cfg.input_length);
    cfg.patch = j.value("patch", cfg.patch);
    cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
    cfg.stage_depths = j.value("stage_depths", cfg.stage_depths);
    cfg.bottleneck_depth = j.value("bottleneck_depth", cfg.bottleneck_depth);
    cfg.window = j.value("window", cfg.window);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.variant = j.value("variant", cfg.variant);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.spectrum_scale = j.value("spectrum_scale", cfg.spectrum_scale);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

std::string config_to_json(const XiNetConfig& cfg) {
  nlohmann::json j;
  j["input_length"] = cfg.input_length;
  j["patch"] = cfg.patch;
  j["embed_dim"] = cfg.embed_dim;
  j["stage_depths"] = cfg.stage_depths;
  j["bottleneck_depth"] = cfg.bottleneck_depth;
  j["window"] = cfg.window;
  j["heads"] = cfg.heads;
  j["variant"] = cfg.variant;
  j["seed"] = cfg.seed;
  j["spectrum_scale"] = cfg.spectrum_scale;
  return j.dump();
}

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

Tensor XiNet::make_param(const std::string& name, Shape shape, const char* init) {
  const int64_t n = ad::shape_numel(shape);
  std::vector<double> v(n);
  if (std::strcmp(init, "tn") == 0) {
    for (auto& x : v) x = f32_lattice(init_rng_.truncated_normal(0.0, 0.02));
  } else if (std::strcmp(init, "one") == 0) {
    std::fill(v.begin(), v.end(), 1.0);
  } else {
    std::fill(v.begin(), v.end(), 0.0);
  }
  Tensor t = Tensor::from(std::move(shape), std::move(v), true);
  for (const auto& [existing, _] : params_)
    if (existing == name) throw UsageError("model: duplicate parameter name " + name);
  params_.emplace_back(name, t);
  return t;
}

swin::LinearParams XiNet::make_linear(const std::string& name, int64_t in, int64_t out,
                                      bool bias) {
  swin::LinearParams p;
  p.weight = make_param(name + ".w", {in, out}, "tn");
  if (bias) p.bias = make_param(name + ".b", {out}, "zero");
  return p;
}

swin::LayerNormParams XiNet::make_norm(const std::string& name, int64_t dim) {
  return {make_param(name + ".g", {dim}, "one"), make_param(name + ".b", {dim}, "zero")};
}

int XiNet::heads_for(int stage_index, int64_t dim) const {
  int h;
  if (cfg_.heads.empty())
    h = static_cast<int>(std::max<int64_t>(1, dim / 32));
  else
    h = cfg_.heads[stage_index];
  if (dim % h != 0)
    throw UsageError(strformat("config: %d heads do not divide dim %lld at stage %d", h,
                               static_cast<long long>(dim), stage_index));
  return h;
}

XiNet::Stage XiNet::make_stage(const std::string& name, int depth, int64_t dim, int heads) {
  Stage st;
  for (int j = 0; j < depth; ++j) {
    const std::string b = name + ".b" + std::to_string(j);
    swin::SwinBlockParams blk;
    blk.norm1 = make_norm(b + ".norm1", dim);
    blk.attn.qkv = make_linear(b + ".qkv", dim, 3 * dim, true);
    blk.attn.out_proj = make_linear(b + ".proj", dim, dim, true);
    blk.attn.rel_bias = make_param(b + ".relbias", {2 * cfg_.window - 1, heads}, "zero");
    blk.attn.window = cfg_.window;
    blk.attn.heads = heads;
    blk.norm2 = make_norm(b + ".norm2", dim);
    blk.mlp.fc1 = make_linear(b + ".mlp1", dim, 4 * dim, true);
    blk.mlp.fc2 = make_linear(b + ".mlp2", 4 * dim, dim, true);
    blk.shift = (j % 2 == 1) ? cfg_.window / 2 : 0;
    st.blocks.push_back(std::move(blk));
  }
  return st;
}

XiNet::Encoder XiNet::make_encoder(const std::string& name, int64_t in_channels) {
  Encoder enc;
  enc.embed = make_linear(name + ".embed", cfg_.patch * in_channels, cfg_.embed_dim, true);
  const int S = cfg_.stages();
  for (int s = 0; s < S; ++s) {
    const int64_t dim = cfg_.embed_dim << s;
    enc.stages.push_back(make_stage(name + ".s" + std::to_string(s), cfg_.stage_depths[s], dim,
                                    heads_for(s, dim)));
    Merge m;
    m.norm = make_norm(name + ".merge" + std::to_string(s) + ".norm", 2 * dim);
    m.proj.weight = make_param(name + ".merge" + std::to_string(s) + ".w", {2 * dim, 2 * dim},
                               "tn");
    enc.merges.push_back(std::move(m));
  }
  const int64_t bn_dim = cfg_.embed_dim << S;
  enc.bottleneck = make_stage(name + ".bn", cfg_.bottleneck_depth, bn_dim, heads_for(S, bn_dim));
  return enc;
}

XiNet::XiNet(const XiNetConfig& cfg) : cfg_(cfg), init_rng_(cfg.seed) {
  validate_config(cfg_);
  const int S = cfg_.stages();
  const int64_t C = cfg_.embed_dim;
  const bool full = cfg_.variant == "full";
  // Decoder stage dims are 2x the matching encoder stage in `full`, equal
  // otherwise.
  const int64_t dec_scale = full ? 2 : 1;

  if (cfg_.variant == "single_encoder")
    time_enc_ = make_encoder("enc", 3);
  else
    time_enc_ = make_encoder("time", 1);
  if (full) {
    freq_enc_ = make_encoder("freq", 2);
    const int64_t bn = C << S;
    fusion_ = make_linear("fusion", 2 * bn, 2 * bn, true);
  }

  dec_.resize(S);
  for (int s = S - 1; s >= 0; --s) {
    const std::string name = "dec.s" + std::to_string(s);
    const int64_t enc_dim = C << s;
    const int64_t dim = dec_scale * enc_dim;
    DecoderStage d;
    d.expand.weight = make_param(name + ".expand.w", {2 * dim, 2 * dim}, "tn");
    const int64_t skip_channels = full ? 2 * enc_dim : enc_dim;
    d.fuse = make_linear(name + ".fuse", dim + skip_channels, dim, true);
    d.blocks = make_stage(name, cfg_.stage_depths[s], dim, heads_for(s, dim));
    dec_[s] = std::move(d);
  }
  final_ = make_linear("final", dec_scale * C, cfg_.patch, true);

#ifndef NDEBUG
  for (const auto& [name, p] : params_)
    for (double v : p.values()) assert(std::isfinite(v));
#endif
}

int64_t XiNet::parameter_count() const {
  int64_t n = 0;
  for (const auto& [_, p] : params_) n += p.numel();
  return n;
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

Tensor XiNet::frequency_input(const Tensor& input) const {
  const int64_t B = input.dim(0), L = cfg_.input_length;
  const double scale = cfg_.spectrum_scale > 0.0 ? cfg_.spectrum_scale
                                                 : 1.0 / static_cast<double>(L);
  std::vector<double> out(B * L * 2);
  const auto& vals = input.values();
  for (int64_t b = 0; b < B; ++b) {
    Waveform w;
    w.sample_rate_hz = 1.0;
    w.samples.assign(vals.begin() + b * L, vals.begin() + (b + 1) * L);
    Spectrum s = dft(w);
    for (int64_t i = 0; i < L; ++i) {
      out[(b * L + i) * 2] = s.real_part[i] * scale;
      out[(b * L + i) * 2 + 1] = s.imag_part[i] * scale;
    }
  }
  return Tensor::from({B, L, 2}, std::move(out));
}

Tensor XiNet::run_encoder(const Encoder& enc, const Tensor& tokens,
                          std::vector<Tensor>* skips) {
  Tensor x = tokens;
  for (size_t s = 0; s < enc.stages.size(); ++s) {
    for (const auto& blk : enc.stages[s].blocks) x = swin::swin_block(x, blk);
    skips->push_back(x);
    x = swin::patch_merge(x, enc.merges[s].norm, enc.merges[s].proj);
  }
  for (const auto& blk : enc.bottleneck.blocks) x = swin::swin_block(x, blk);
  return x;
}

Tensor XiNet::run_decoder(Tensor x, const std::vector<std::vector<Tensor>>& skip_sets) {
  for (int s = cfg_.stages() - 1; s >= 0; --s) {
    x = swin::patch_expand(x, dec_[s].expand);
    std::vector<Tensor> parts{x};
    for (const auto& set : skip_sets) parts.push_back(set[s]);
    x = swin::linear(ad::concat(parts, 2), dec_[s].fuse);
    for (const auto& blk : dec_[s].blocks.blocks) x = swin::swin_block(x, blk);
  }
  return x;
}

Tensor XiNet::forward(const Tensor& input) {
  if (input.rank() != 3 || input.dim(1) != cfg_.input_length || input.dim(2) != 1)
    throw UsageError(strformat("forward: expected [B, %lld, 1] input, got %s",
                               static_cast<long long>(cfg_.input_length),
                               ad::shape_str(input.shape()).c_str()));

  std::vector<std::vector<Tensor>> skip_sets;
  Tensor bottleneck;

  if (cfg_.variant == "full") {
    Tensor time_tokens = swin::patch_partition(input, cfg_.patch, time_enc_.embed);
    Tensor freq_tokens =
        swin::patch_partition(frequency_input(input), cfg_.patch, freq_enc_.embed);
    std::vector<Tensor> skips_t, skips_f;
    Tensor bt = run_encoder(time_enc_, time_tokens, &skips_t);
    Tensor bf = run_encoder(freq_enc_, freq_tokens, &skips_f);
    bottleneck = swin::linear(ad::concat({bt, bf}, 2), fusion_);
    skip_sets = {std::move(skips_t), std::move(skips_f)};
  } else if (cfg_.variant == "time_only") {
    Tensor tokens = swin::patch_partition(input, cfg_.patch, time_enc_.embed);
    std::vector<Tensor> skips;
    bottleneck = run_encoder(time_enc_, tokens, &skips);
    skip_sets = {std::move(skips)};
  } else {
    Tensor stacked = ad::concat({input, frequency_input(input)}, 2);  // [B, L, 3]
    Tensor tokens = swin::patch_partition(stacked, cfg_.patch, time_enc_.embed);
    std::vector<Tensor> skips;
    bottleneck = run_encoder(time_enc_, tokens, &skips);
    skip_sets = {std::move(skips)};
  }

  Tensor x = run_decoder(bottleneck, skip_sets);
  return swin::final_patch_expand(x, cfg_.patch, final_);
}

Waveform reconstruct(XiNet& model, const Sample& sample) {
  const int64_t L = model.config().input_length;
  if (sample.input.length() != L)
    throw DataError(strformat("reconstruct: sample length %lld != model input length %lld",
                              static_cast<long long>(sample.input.length()),
                              static_cast<long long>(L)));
  ad::NoGradGuard guard;
  Tensor in = Tensor::from({1, L, 1}, sample.input.samples);
  Tensor out = model.forward(in);
  Waveform result = sample.input;
  for (int64_t i = sample.gap.start_index; i < sample.gap.end_index(); ++i)
    result.samples[i] = out.values()[i];
  return result;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const XiNet& model, const std::string& path,
                     const CheckpointExtra& extra) {
  nlohmann::json dir = nlohmann::json::array();
  std::vector<float> payload;
  auto append = [&](const std::string& name, const Tensor& t) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = payload.size() * sizeof(float);
    dir.push_back(std::move(e));
    for (double v : t.values()) payload.push_back(static_cast<float>(v));
  };
  for (const auto& [name, p] : model.parameters()) append(name, p);
  for (const auto& [name, t] : extra.opt_state) append("opt." + name, t);

  nlohmann::json header;
  header["config"] = nlohmann::json::parse(config_to_json(model.config()));
  header["epoch"] = extra.epoch;
  header["tensors"] = std::move(dir);
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out.write(kMagic, sizeof(kMagic));
  const uint32_t hlen = static_cast<uint32_t>(htext.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw DataError(path + ": write failed");
}

namespace {

struct RawCheckpoint {
  XiNetConfig config;
  int64_t epoch = 0;
  std::vector<std::tuple<std::string, Shape, std::vector<double>>> tensors;
};

RawCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": file not found");
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError(path + ": not a Xi-Net checkpoint (bad magic)");
  uint32_t hlen = 0;
  if (!in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen)))
    throw DataError(path + ": truncated header");
  std::string htext(hlen, '\0');
  if (!in.read(htext.data(), hlen)) throw DataError(path + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(htext);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": corrupt header: " + e.what());
  }

  RawCheckpoint ck;
  try {
    ck.config = config_from_json(header.at("config").dump());
    ck.epoch = header.at("epoch").get<int64_t>();
    std::vector<char> payload(std::istreambuf_iterator<char>(in), {});
    for (const auto& e : header.at("tensors")) {
      const std::string name = e.at("name").get<std::string>();
      const Shape shape = e.at("shape").get<Shape>();
      const size_t offset = e.at("offset").get<size_t>();
      const size_t count = static_cast<size_t>(ad::shape_numel(shape));
      if (offset + count * sizeof(float) > payload.size())
        throw DataError(path + ": truncated payload at tensor " + name);
      std::vector<double> vals(count);
      const float* src = reinterpret_cast<const float*>(payload.data() + offset);
      for (size_t i = 0; i < count; ++i) vals[i] = static_cast<double>(src[i]);
      ck.tensors.emplace_back(name, shape, std::move(vals));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": corrupt header: " + e.what());
  }
  return ck;
}

void apply_checkpoint(XiNet& model, RawCheckpoint&& ck, const std::string& path,
                      CheckpointExtra* extra) {
  std::map<std::string, Tensor> by_name;
  for (const auto& [name, p] : model.parameters()) by_name.emplace(name, p);

  std::set<std::string> filled;
  if (extra) {
    extra->epoch = ck.epoch;
    extra->opt_state.clear();
  }
  for (auto& [name, shape, vals] : ck.tensors) {
    if (name.rfind("opt.", 0) == 0) {
      if (extra)
        extra->opt_state.emplace_back(name.substr(4),
                                      Tensor::from(shape, std::move(vals)));
      continue;
    }
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError(path + ": unknown tensor " + name);
    if (it->second.shape() != shape)
      throw DataError(strformat("%s: tensor %s has shape %s, expected %s", path.c_str(),
                                name.c_str(), ad::shape_str(shape).c_str(),
                                ad::shape_str(it->second.shape()).c_str()));
    it->second.mutable_values() = std::move(vals);
    filled.insert(name);
  }
  for (const auto& [name, _] : model.parameters())
    if (!filled.count(name)) throw DataError(path + ": checkpoint is missing tensor " + name);
}

}  // namespace

XiNet load_checkpoint(const std::string& path, CheckpointExtra* extra) {
  RawCheckpoint ck = read_checkpoint(path);
  XiNet model(ck.config);
  apply_checkpoint(model, std::move(ck), path, extra);
  return model;
}

void load_checkpoint_into(XiNet& model, const std::string& path, CheckpointExtra* extra) {
  RawCheckpoint ck = read_checkpoint(path);
  const XiNetConfig& a = model.config();
  const XiNetConfig& b = ck.config;
  if (a.variant != b.variant)
    throw DataError(strformat("%s: checkpoint variant '%s' does not match model variant '%s'",
                              path.c_str(), b.variant.c_str(), a.variant.c_str()));
  if (a.input_length != b.input_length || a.patch != b.patch || a.embed_dim != b.embed_dim ||
      a.stage_depths != b.stage_depths || a.bottleneck_depth != b.bottleneck_depth ||
      a.window != b.window || a.heads != b.heads || a.spectrum_scale != b.spectrum_scale)
    throw DataError(path + ": checkpoint architecture does not match the model config");
  apply_checkpoint(model, std::move(ck), path, extra);
}

}  // namespace xinet
