#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "xinet/data.hpp"

namespace xinet {

struct SampleMetrics {
  double dfd = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  double pred_range = 0.0;
  double target_range = 0.0;
};

struct EvalReport {
  double dfd_mean = 0.0;
  double mrd = 0.0;
  double mae_mean = 0.0;
  double rmse_mean = 0.0;
  int64_t margin = 0;
  std::vector<SampleMetrics> per_sample;
};

// Gap samples extended by `margin` on both sides, clipped at record edges.
std::vector<double> gap_segment(const Waveform& w, const GapSpec& gap, int64_t margin = 0);

// Discrete Fréchet distance between amplitude sequences. The point metric is
// |p_i - q_j| by default; with polyline_2d the curves are (index, amplitude)
// polylines under the Euclidean metric.
double dfd(const std::vector<double>& p, const std::vector<double>& q,
           bool polyline_2d = false);

// Absolute difference of mean per-array ranges, a dataset-level scalar.
double mrd(const std::vector<std::vector<double>>& preds,
           const std::vector<std::vector<double>>& targets);

double mae(const std::vector<double>& p, const std::vector<double>& q);
double rmse(const std::vector<double>& p, const std::vector<double>& q);

using Reconstructor = std::function<Waveform(const Sample&)>;

// Gap-restricted evaluation: per-sample DFD/MAE/RMSE averaged over the set,
// MRD computed dataset-level from the gap-segment ranges.
EvalReport evaluate(const std::vector<Sample>& samples, const Reconstructor& reconstruct,
                    int64_t margin = 0);

// Reference baselines.
Waveform zero_fill_baseline(const Sample& sample);
Waveform linear_interp_baseline(const Sample& sample);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& json_text);

// Aligned text table, one column per named report, rows DFD/MRD/MAE/RMSE.
std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& columns);

}  // namespace xinet
