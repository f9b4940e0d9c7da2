#pragma once

#include <string>
#include <utility>
#include <vector>

#include "xinet/data.hpp"
#include "xinet/swin1d.hpp"
#include "xinet/tensor.hpp"

namespace xinet {

struct XiNetConfig {
  int64_t input_length = 1024;         // L, samples per record
  int64_t patch = 8;                   // P, samples per token
  int64_t embed_dim = 16;              // C, stage-0 feature dim
  std::vector<int> stage_depths = {2, 2, 2};
  int bottleneck_depth = 2;
  int64_t window = 8;                  // M, tokens per attention window
  std::vector<int> heads;              // per stage + bottleneck; empty = dim/32, min 1
  std::string variant = "full";        // full | time_only | single_encoder
  uint64_t seed = 0;
  double spectrum_scale = 0.0;         // <= 0 means 1/L

  int stages() const { return static_cast<int>(stage_depths.size()); }
};

XiNetConfig config_from_json(const std::string& json_text);
std::string config_to_json(const XiNetConfig& cfg);

// Xi-Net: time encoder, frequency encoder (spectrum of the gapped input),
// depth-stacked bottleneck fusion, skip-connected decoder whose stage dims
// are double the encoder's, and a final patch expansion back to samples.
class XiNet {
 public:
  explicit XiNet(const XiNetConfig& cfg);

  const XiNetConfig& config() const { return cfg_; }

  // [B, L, 1] -> [B, L, 1]
  ad::Tensor forward(const ad::Tensor& input);

  // Named parameters in creation order; handles share storage with the model.
  const std::vector<std::pair<std::string, ad::Tensor>>& parameters() const { return params_; }

  int64_t parameter_count() const;

 private:
  struct Stage {
    std::vector<swin::SwinBlockParams> blocks;
  };
  struct Merge {
    swin::LayerNormParams norm;
    swin::LinearParams proj;
  };
  struct Encoder {
    swin::LinearParams embed;
    std::vector<Stage> stages;
    std::vector<Merge> merges;
    Stage bottleneck;
  };
  struct DecoderStage {
    swin::LinearParams expand;  // D -> D, no bias
    swin::LinearParams fuse;    // concat(dec, skips) -> stage dim
    Stage blocks;
  };

  ad::Tensor make_param(const std::string& name, ad::Shape shape, const char* init);
  swin::LinearParams make_linear(const std::string& name, int64_t in, int64_t out, bool bias);
  swin::LayerNormParams make_norm(const std::string& name, int64_t dim);
  Stage make_stage(const std::string& name, int depth, int64_t dim, int heads);
  Encoder make_encoder(const std::string& name, int64_t in_channels);
  int heads_for(int stage_index, int64_t dim) const;

  ad::Tensor run_encoder(const Encoder& enc, const ad::Tensor& tokens,
                         std::vector<ad::Tensor>* skips);
  ad::Tensor run_decoder(ad::Tensor x, const std::vector<std::vector<ad::Tensor>>& skip_sets);
  ad::Tensor frequency_input(const ad::Tensor& input) const;

  XiNetConfig cfg_;
  Rng init_rng_;
  Encoder time_enc_;   // also the single multi-channel encoder
  Encoder freq_enc_;   // full variant only
  swin::LinearParams fusion_;
  std::vector<DecoderStage> dec_;
  swin::LinearParams final_;
  std::vector<std::pair<std::string, ad::Tensor>> params_;
};

// Splices the model output into the gap, keeping observed samples verbatim.
Waveform reconstruct(XiNet& model, const Sample& sample);

// Checkpoint: magic "XINET1", JSON header (config, epoch, tensor directory),
// then the tensor payload as little-endian 32-bit floats.
struct CheckpointExtra {
  int64_t epoch = 0;
  std::vector<std::pair<std::string, ad::Tensor>> opt_state;
};

void save_checkpoint(const XiNet& model, const std::string& path,
                     const CheckpointExtra& extra = {});
XiNet load_checkpoint(const std::string& path, CheckpointExtra* extra = nullptr);

// Loads parameters into an existing model; the stored config must match
// (variant, shapes, schedule).
void load_checkpoint_into(XiNet& model, const std::string& path,
                          CheckpointExtra* extra = nullptr);

}  // namespace xinet
