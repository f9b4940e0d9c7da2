#include "xinet/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "xinet/errors.hpp"

namespace xinet {

std::vector<double> gap_segment(const Waveform& w, const GapSpec& gap, int64_t margin) {
  if (margin < 0) throw UsageError("gap_segment: margin must be >= 0");
  const int64_t lo = std::max<int64_t>(0, gap.start_index - margin);
  const int64_t hi = std::min<int64_t>(w.length(), gap.end_index() + margin);
  if (gap.start_index < 0 || gap.end_index() > w.length() || gap.length_samples <= 0)
    throw UsageError(strformat("gap_segment: gap [%lld, %lld) outside record of %lld samples",
                               static_cast<long long>(gap.start_index),
                               static_cast<long long>(gap.end_index()),
                               static_cast<long long>(w.length())));
  return std::vector<double>(w.samples.begin() + lo, w.samples.begin() + hi);
}

double dfd(const std::vector<double>& p, const std::vector<double>& q, bool polyline_2d) {
  if (p.empty() || q.empty()) throw UsageError("dfd: empty input");
  const size_t n = p.size(), m = q.size();
  auto point = [&](size_t i, size_t j) {
    const double da = p[i] - q[j];
    if (!polyline_2d) return std::abs(da);
    const double dt = static_cast<double>(i) - static_cast<double>(j);
    return std::hypot(dt, da);
  };
  // Eiter-Mannila DP, one row at a time.
  std::vector<double> prev(m), cur(m);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < m; ++j) {
      double reach;
      if (i == 0 && j == 0)
        reach = 0.0;
      else if (i == 0)
        reach = cur[j - 1];
      else if (j == 0)
        reach = prev[0];
      else
        reach = std::min({prev[j], prev[j - 1], cur[j - 1]});
      cur[j] = std::max(point(i, j), reach);
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

namespace {

double range_of(const std::vector<double>& a) {
  auto [lo, hi] = std::minmax_element(a.begin(), a.end());
  return *hi - *lo;
}

}  // namespace

double mrd(const std::vector<std::vector<double>>& preds,
           const std::vector<std::vector<double>>& targets) {
  if (preds.empty() || preds.size() != targets.size())
    throw UsageError("mrd: need equally many nonempty predictions and targets");
  double pred_sum = 0.0, tgt_sum = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].empty() || targets[i].empty()) throw UsageError("mrd: empty array");
    pred_sum += range_of(preds[i]);
    tgt_sum += range_of(targets[i]);
  }
  return std::abs(pred_sum - tgt_sum) / static_cast<double>(preds.size());
}

double mae(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size() || p.empty())
    throw UsageError("mae: arrays must be nonempty and of equal length");
  double sum = 0.0;
  for (size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return sum / static_cast<double>(p.size());
}

double rmse(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size() || p.empty())
    throw UsageError("rmse: arrays must be nonempty and of equal length");
  double sum = 0.0;
  for (size_t i = 0; i < p.size(); ++i) sum += (p[i] - q[i]) * (p[i] - q[i]);
  return std::sqrt(sum / static_cast<double>(p.size()));
}

EvalReport evaluate(const std::vector<Sample>& samples, const Reconstructor& reconstruct,
                    int64_t margin) {
  if (samples.empty()) throw UsageError("evaluate: empty dataset");
  EvalReport report;
  report.margin = margin;
  std::vector<std::vector<double>> preds, targets;
  preds.reserve(samples.size());
  targets.reserve(samples.size());
  for (const Sample& s : samples) {
    Waveform rec = reconstruct(s);
    if (rec.length() != s.target.length())
      throw DataError("evaluate: reconstruction length differs from target");
    std::vector<double> p = gap_segment(rec, s.gap, margin);
    std::vector<double> t = gap_segment(s.target, s.gap, margin);
    SampleMetrics m;
    m.dfd = dfd(p, t);
    m.mae = mae(p, t);
    m.rmse = rmse(p, t);
    m.pred_range = range_of(p);
    m.target_range = range_of(t);
    report.per_sample.push_back(m);
    preds.push_back(std::move(p));
    targets.push_back(std::move(t));
  }
  const double n = static_cast<double>(samples.size());
  for (const SampleMetrics& m : report.per_sample) {
    report.dfd_mean += m.dfd / n;
    report.mae_mean += m.mae / n;
    report.rmse_mean += m.rmse / n;
  }
  report.mrd = mrd(preds, targets);
  return report;
}

Waveform zero_fill_baseline(const Sample& sample) { return sample.input; }

Waveform linear_interp_baseline(const Sample& sample) {
  const GapSpec& gap = sample.gap;
  if (gap.start_index <= 0 || gap.end_index() >= sample.input.length())
    throw DataError("linear_interp_baseline: gap touches the record boundary");
  Waveform out = sample.input;
  const int64_t s = gap.start_index, e = gap.end_index();
  const double v0 = out.samples[s - 1], v1 = out.samples[e];
  const double span = static_cast<double>(e - (s - 1));
  for (int64_t i = s; i < e; ++i)
    out.samples[i] = v0 + (v1 - v0) * static_cast<double>(i - (s - 1)) / span;
  return out;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["dfd_mean"] = report.dfd_mean;
  j["mrd"] = report.mrd;
  j["mae_mean"] = report.mae_mean;
  j["rmse_mean"] = report.rmse_mean;
  j["margin"] = report.margin;
  j["per_sample"] = nlohmann::json::array();
  for (const SampleMetrics& m : report.per_sample)
    j["per_sample"].push_back({{"dfd", m.dfd},
                               {"mae", m.mae},
                               {"rmse", m.rmse},
                               {"pred_range", m.pred_range},
                               {"target_range", m.target_range}});
  return j.dump(2);
}

EvalReport report_from_json(const std::string& json_text) {
  EvalReport report;
  try {
    nlohmann::json j = nlohmann::json::parse(json_text);
    report.dfd_mean = j.at("dfd_mean").get<double>();
    report.mrd = j.at("mrd").get<double>();
    report.mae_mean = j.at("mae_mean").get<double>();
    report.rmse_mean = j.at("rmse_mean").get<double>();
    report.margin = j.at("margin").get<int64_t>();
    for (const auto& e : j.at("per_sample")) {
      SampleMetrics m;
      m.dfd = e.at("dfd").get<double>();
      m.mae = e.at("mae").get<double>();
      m.rmse = e.at("rmse").get<double>();
      m.pred_range = e.at("pred_range").get<double>();
      m.target_range = e.at("target_range").get<double>();
      report.per_sample.push_back(m);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("eval report: ") + e.what());
  }
  return report;
}

std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& columns) {
  if (columns.empty()) throw UsageError("format_table: no columns");
  const char* rows[] = {"DFD", "MRD", "MAE", "RMSE"};
  auto value = [](const EvalReport& r, int row) {
    switch (row) {
      case 0: return r.dfd_mean;
      case 1: return r.mrd;
      case 2: return r.mae_mean;
      default: return r.rmse_mean;
    }
  };
  size_t width = 6;  // fits the metric-name column
  for (const auto& [name, _] : columns) width = std::max(width, name.size());
  width = std::max<size_t>(width, 8);

  std::string out;
  auto cell = [&](const std::string& text) {
    out += text;
    out.append(width + 2 - text.size(), ' ');
  };
  cell("Metric");
  for (const auto& [name, _] : columns) cell(name);
  out += '\n';
  for (int row = 0; row < 4; ++row) {
    cell(rows[row]);
    for (const auto& [_, report] : columns) cell(strformat("%.4f", value(report, row)));
    out += '\n';
  }
  out += "(lower is better)\n";
  return out;
}

}  // namespace xinet
