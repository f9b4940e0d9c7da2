#include "xinet/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "json.hpp"
#include "xinet/errors.hpp"

namespace xinet {

using ad::Tensor;

namespace {

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw UsageError("train config: epochs must be >= 1");
  if (!(cfg.base_lr > 0.0)) throw UsageError("train config: base_lr must be > 0");
  if (cfg.weight_decay < 0.0) throw UsageError("train config: weight_decay must be >= 0");
  if (cfg.batch_size < 1) throw UsageError("train config: batch_size must be >= 1");
  if (cfg.schedule != "constant_cosine" && cfg.schedule != "constant")
    throw UsageError("train config: schedule must be constant_cosine or constant");
  if (cfg.loss_scope != "full_waveform" && cfg.loss_scope != "gap_weighted")
    throw UsageError("train config: loss_scope must be full_waveform or gap_weighted");
  if (cfg.gap_lambda < 0.0) throw UsageError("train config: gap_lambda must be >= 0");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw UsageError("train config: betas must lie in [0, 1)");
  if (!(cfg.eps > 0.0)) throw UsageError("train config: eps must be > 0");
}

double f32_lattice(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

TrainConfig train_config_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("train config: ") + e.what());
  }
  static const std::set<std::string> known = {
      "epochs",    "base_lr",    "weight_decay", "batch_size", "seed",  "schedule",
      "loss_scope", "gap_lambda", "augment",      "beta1",      "beta2", "eps"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw DataError("train config: unknown key '" + it.key() + "'");
  TrainConfig cfg;
  try {
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.base_lr = j.value("base_lr", cfg.base_lr);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.schedule = j.value("schedule", cfg.schedule);
    cfg.loss_scope = j.value("loss_scope", cfg.loss_scope);
    cfg.gap_lambda = j.value("gap_lambda", cfg.gap_lambda);
    cfg.augment = j.value("augment", cfg.augment);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.eps = j.value("eps", cfg.eps);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("train config: ") + e.what());
  }
  validate_train_config(cfg);
  return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["epochs"] = cfg.epochs;
  j["base_lr"] = cfg.base_lr;
  j["weight_decay"] = cfg.weight_decay;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  j["schedule"] = cfg.schedule;
  j["loss_scope"] = cfg.loss_scope;
  j["gap_lambda"] = cfg.gap_lambda;
  j["augment"] = cfg.augment;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["eps"] = cfg.eps;
  return j.dump();
}

OptState make_opt_state(const std::vector<std::pair<std::string, Tensor>>& params) {
  OptState state;
  for (const auto& [_, p] : params) {
    state.m.emplace_back(p.numel(), 0.0);
    state.v.emplace_back(p.numel(), 0.0);
  }
  return state;
}

void adamw_step(const std::vector<std::pair<std::string, Tensor>>& params, OptState& state,
                double lr, double weight_decay, double beta1, double beta2, double eps) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw UsageError("adamw_step: state does not match the parameter list");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k].second;
    std::vector<double>& m = state.m[k];
    std::vector<double>& v = state.v[k];
    if (static_cast<int64_t>(m.size()) != p.numel() ||
        static_cast<int64_t>(v.size()) != p.numel())
      throw UsageError("adamw_step: moment shape mismatch for " + params[k].first);
    const std::vector<double>* grad = p.has_grad() ? &p.grad() : nullptr;
    std::vector<double>& w = p.mutable_values();
    for (size_t i = 0; i < w.size(); ++i) {
      const double g = grad ? (*grad)[i] : 0.0;
      w[i] -= lr * weight_decay * w[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] = f32_lattice(w[i] - lr * m_hat / (std::sqrt(v_hat) + eps));
      m[i] = f32_lattice(m[i]);
      v[i] = f32_lattice(v[i]);
    }
  }
}

double lr_at(int epoch, int total, double base_lr) {
  if (epoch < 0 || epoch >= total)
    throw UsageError(strformat("lr_at: epoch %d outside [0, %d)", epoch, total));
  const int half = (total + 1) / 2;
  if (epoch < half) return base_lr;
  const double end_lr = base_lr / 100.0;
  const int span = total - half - 1;
  const double progress =
      span > 0 ? static_cast<double>(epoch - half) / static_cast<double>(span) : 1.0;
  return end_lr + (base_lr - end_lr) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

std::vector<std::pair<std::string, Tensor>> opt_state_to_tensors(
    const OptState& state, const std::vector<std::pair<std::string, Tensor>>& params) {
  if (state.m.size() != params.size())
    throw UsageError("opt_state_to_tensors: state does not match the parameter list");
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t k = 0; k < params.size(); ++k) {
    out.emplace_back("m." + params[k].first,
                     Tensor::from(params[k].second.shape(), state.m[k]));
    out.emplace_back("v." + params[k].first,
                     Tensor::from(params[k].second.shape(), state.v[k]));
  }
  out.emplace_back("step", Tensor::from({1}, {static_cast<double>(state.step)}));
  return out;
}

OptState opt_state_from_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors,
                                const std::vector<std::pair<std::string, Tensor>>& params) {
  OptState state = make_opt_state(params);
  std::set<std::string> seen;
  for (const auto& [name, t] : tensors) {
    if (name == "step") {
      state.step = static_cast<int64_t>(t.values()[0]);
      seen.insert(name);
      continue;
    }
    const bool is_m = name.rfind("m.", 0) == 0;
    const bool is_v = name.rfind("v.", 0) == 0;
    if (!is_m && !is_v) throw DataError("optimizer state: unknown tensor " + name);
    const std::string pname = name.substr(2);
    bool matched = false;
    for (size_t k = 0; k < params.size(); ++k) {
      if (params[k].first != pname) continue;
      if (t.numel() != params[k].second.numel())
        throw DataError("optimizer state: size mismatch for " + name);
      (is_m ? state.m : state.v)[k] = t.values();
      matched = true;
      break;
    }
    if (!matched) throw DataError("optimizer state: unknown tensor " + name);
    seen.insert(name);
  }
  const size_t expected = 2 * params.size() + 1;
  if (seen.size() != expected) throw DataError("optimizer state: incomplete tensor set");
  return state;
}

namespace {

Tensor batch_tensor(const std::vector<Sample>& set, const std::vector<int64_t>& idx,
                    size_t lo, size_t hi, bool target) {
  const int64_t L = set[idx[lo]].input.length();
  std::vector<double> v;
  v.reserve((hi - lo) * L);
  for (size_t k = lo; k < hi; ++k) {
    const Waveform& w = target ? set[idx[k]].target : set[idx[k]].input;
    v.insert(v.end(), w.samples.begin(), w.samples.end());
  }
  return Tensor::from({static_cast<int64_t>(hi - lo), L, 1}, std::move(v));
}

// 1 inside each sample's gap, lambda elsewhere.
Tensor gap_weights(const std::vector<Sample>& set, const std::vector<int64_t>& idx, size_t lo,
                   size_t hi, double lambda) {
  const int64_t L = set[idx[lo]].input.length();
  std::vector<double> w((hi - lo) * L, lambda);
  for (size_t k = lo; k < hi; ++k) {
    const GapSpec& gap = set[idx[k]].gap;
    for (int64_t i = gap.start_index; i < gap.end_index(); ++i)
      w[(k - lo) * L + i] = 1.0;
  }
  return Tensor::from({static_cast<int64_t>(hi - lo), L, 1}, std::move(w));
}

double param_norm(const std::vector<std::pair<std::string, Tensor>>& params) {
  double sq = 0.0;
  for (const auto& [_, p] : params)
    for (double v : p.values()) sq += v * v;
  return std::sqrt(sq);
}

double validation_gap_mae(XiNet& model, const std::vector<Sample>& val_set,
                          int64_t batch_size) {
  if (val_set.empty()) return std::numeric_limits<double>::quiet_NaN();
  ad::NoGradGuard guard;
  const int64_t L = model.config().input_length;
  double sum = 0.0;
  int64_t count = 0;
  for (size_t lo = 0; lo < val_set.size(); lo += batch_size) {
    const size_t hi = std::min(val_set.size(), lo + batch_size);
    std::vector<int64_t> idx(hi - lo);
    std::iota(idx.begin(), idx.end(), static_cast<int64_t>(lo));
    Tensor out = model.forward(batch_tensor(val_set, idx, 0, idx.size(), false));
    for (size_t k = 0; k < idx.size(); ++k) {
      const Sample& s = val_set[idx[k]];
      double err = 0.0;
      for (int64_t i = s.gap.start_index; i < s.gap.end_index(); ++i)
        err += std::abs(out.values()[k * L + i] - s.target.samples[i]);
      sum += err / static_cast<double>(s.gap.length_samples);
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

}  // namespace

TrainResult train(XiNet& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg,
                  const std::string& loss_csv_path,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  validate_train_config(cfg);
  if (train_set.empty()) throw UsageError("train: empty training set");
  const int64_t L = model.config().input_length;
  for (const Sample& s : train_set)
    if (s.input.length() != L || s.target.length() != L)
      throw DataError("train: sample length does not match the model input length");

  std::vector<Sample> working = cfg.augment ? mirror_augment(train_set) : train_set;
  const auto& params = model.parameters();
  OptState state = make_opt_state(params);
  Rng rng(cfg.seed);

  std::ofstream csv;
  if (!loss_csv_path.empty()) {
    csv.open(loss_csv_path);
    if (!csv) throw DataError(loss_csv_path + ": cannot open for writing");
    csv << "epoch,lr,train_loss,val_gap_mae\n";
  }

  std::vector<int64_t> order(working.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr =
        cfg.schedule == "constant" ? cfg.base_lr : lr_at(epoch, cfg.epochs, cfg.base_lr);
    // Fisher-Yates with the run's RNG keeps epochs deterministic.
    for (int64_t i = static_cast<int64_t>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, i)]);

    double loss_sum = 0.0;
    int batch_index = 0;
    for (size_t lo = 0; lo < order.size(); lo += cfg.batch_size, ++batch_index) {
      const size_t hi = std::min(order.size(), lo + static_cast<size_t>(cfg.batch_size));
      Tensor input = batch_tensor(working, order, lo, hi, false);
      Tensor target = batch_tensor(working, order, lo, hi, true);
      Tensor out = model.forward(input);
      Tensor loss;
      if (cfg.loss_scope == "gap_weighted") {
        Tensor diff = ad::sub(out, target);
        loss = ad::mean(ad::mul(ad::mul(diff, diff),
                                gap_weights(working, order, lo, hi, cfg.gap_lambda)));
      } else {
        loss = ad::mse_loss(out, target);
      }
      const double loss_value = loss.values()[0];
      if (!std::isfinite(loss_value))
        throw NumericError(strformat(
            "train: non-finite loss at epoch %d batch %d (parameter norm %.6g)", epoch,
            batch_index, param_norm(params)));
      ad::backward(loss);
      adamw_step(params, state, lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps);
      for (const auto& [_, p] : params) {
        Tensor handle = p;
        handle.zero_grad();
      }
      loss_sum += loss_value * static_cast<double>(hi - lo);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.val_gap_mae = validation_gap_mae(model, val_set, cfg.batch_size);
    result.history.push_back(stats);
    if (csv.is_open()) {
      csv << strformat("%d,%.17g,%.17g,%.17g\n", stats.epoch, stats.lr, stats.train_loss,
                       stats.val_gap_mae);
      csv.flush();
    }
    if (on_epoch) on_epoch(stats);
  }
  result.opt_state = std::move(state);
  return result;
}

}  // namespace xinet
