#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "xinet/model.hpp"

namespace xinet {

struct TrainConfig {
  int epochs = 80;
  double base_lr = 1e-3;
  double weight_decay = 1e-4;
  int64_t batch_size = 8;
  uint64_t seed = 0;
  std::string schedule = "constant_cosine";  // or "constant"
  std::string loss_scope = "full_waveform";  // or "gap_weighted"
  double gap_lambda = 1.0;  // gap_weighted: weight of off-gap residuals
  bool augment = true;      // mirror-augment the training set
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

TrainConfig train_config_from_json(const std::string& json_text);
std::string train_config_to_json(const TrainConfig& cfg);

struct OptState {
  std::vector<std::vector<double>> m, v;  // per parameter, flat
  int64_t step = 0;
};

OptState make_opt_state(const std::vector<std::pair<std::string, ad::Tensor>>& params);

// Decoupled weight decay, then a bias-corrected Adam update from each
// parameter's accumulated gradient (missing gradient buffers count as zero).
// Parameters and moments stay on the f32 lattice.
void adamw_step(const std::vector<std::pair<std::string, ad::Tensor>>& params, OptState& state,
                double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

// Constant learning rate for the first half of training, cosine decay to
// base_lr/100 over the second half.
double lr_at(int epoch, int total, double base_lr);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_gap_mae = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  OptState opt_state;
};

// Named tensors for checkpointing ("m.*", "v.*", "step") and back.
std::vector<std::pair<std::string, ad::Tensor>> opt_state_to_tensors(
    const OptState& state, const std::vector<std::pair<std::string, ad::Tensor>>& params);
OptState opt_state_from_tensors(
    const std::vector<std::pair<std::string, ad::Tensor>>& tensors,
    const std::vector<std::pair<std::string, ad::Tensor>>& params);

// Seeded mini-batch training; writes one CSV row per epoch when a path is
// given. A non-finite loss aborts with a NumericError diagnostic.
TrainResult train(XiNet& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg,
                  const std::string& loss_csv_path = "",
                  const std::function<void(const EpochStats&)>& on_epoch = nullptr);

}  // namespace xinet
