#include "xinet/data.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "xinet/errors.hpp"

namespace xinet {

namespace {

void validate_generator_config(const GeneratorConfig& cfg, double sample_rate_hz) {
  if (cfg.noise_std < 0.0) throw UsageError("generator: noise_std must be >= 0");
  if (cfg.min_events < 0 || cfg.min_events > cfg.max_events)
    throw UsageError("generator: need 0 <= min_events <= max_events");
  if (!(0.0 < cfg.min_freq_hz && cfg.min_freq_hz <= cfg.max_freq_hz &&
        cfg.max_freq_hz < sample_rate_hz / 2.0))
    throw UsageError(strformat("generator: event band [%g, %g] Hz outside (0, %g)",
                               cfg.min_freq_hz, cfg.max_freq_hz, sample_rate_hz / 2.0));
  if (cfg.min_amp > cfg.max_amp || cfg.min_decay_s > cfg.max_decay_s ||
      cfg.min_onset_frac > cfg.max_onset_frac || cfg.min_onset_frac < 0.0 ||
      cfg.max_onset_frac > 1.0)
    throw UsageError("generator: malformed parameter ranges");
}

}  // namespace

Waveform generate_raw(uint64_t seed, int64_t length, double sample_rate_hz,
                      const GeneratorConfig& cfg, std::vector<EventParams>* events_out) {
  if (length < 2) throw DataError(strformat("generator: length %lld too short",
                                            static_cast<long long>(length)));
  if (!(sample_rate_hz > 0.0)) throw UsageError("generator: sample rate must be positive");
  validate_generator_config(cfg, sample_rate_hz);

  Rng rng(seed);
  Waveform w;
  w.sample_rate_hz = sample_rate_hz;
  w.samples.resize(length);
  for (auto& v : w.samples) v = rng.normal(0.0, cfg.noise_std);

  const double duration = static_cast<double>(length) / sample_rate_hz;
  const int n_events = rng.uniform_int(cfg.min_events, cfg.max_events);
  for (int e = 0; e < n_events; ++e) {
    EventParams ev;
    ev.onset_s = rng.uniform(cfg.min_onset_frac, cfg.max_onset_frac) * duration;
    ev.freq_hz = rng.uniform(cfg.min_freq_hz, cfg.max_freq_hz);
    ev.amp = rng.uniform(cfg.min_amp, cfg.max_amp);
    ev.decay_s = rng.uniform(cfg.min_decay_s, cfg.max_decay_s);
    ev.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    if (events_out) events_out->push_back(ev);
    for (int64_t i = 0; i < length; ++i) {
      const double t = static_cast<double>(i) / sample_rate_hz - ev.onset_s;
      if (t < 0.0) continue;
      w.samples[i] += ev.amp * std::exp(-t / ev.decay_s) *
                      std::sin(2.0 * std::numbers::pi * ev.freq_hz * t + ev.phase);
    }
  }
  return w;
}

Waveform generate_waveform(uint64_t seed, int64_t length, double sample_rate_hz,
                           const GeneratorConfig& cfg) {
  if (length < 64 || length % 2 != 0)
    throw DataError(strformat("generator: length must be even and >= 64, got %lld",
                              static_cast<long long>(length)));
  if (!(cfg.band_high_hz < sample_rate_hz / 2.0))
    throw UsageError(strformat("generator: band edge %g Hz >= Nyquist %g Hz",
                               cfg.band_high_hz, sample_rate_hz / 2.0));
  Waveform raw = generate_raw(seed, length / 2, sample_rate_hz / 2.0, cfg);
  Waveform up = upsample2x(raw);
  return butterworth_bandpass(up, cfg.band_low_hz, cfg.band_high_hz, cfg.filter_order);
}

Sample make_sample(const Waveform& target, const GapSpec& gap) {
  if (gap.start_index < 0 || gap.length_samples < 1 || gap.end_index() > target.length())
    throw DataError(strformat("gap [%lld, %lld) outside waveform of length %lld",
                              static_cast<long long>(gap.start_index),
                              static_cast<long long>(gap.end_index()),
                              static_cast<long long>(target.length())));
  Sample s;
  s.target = target;
  s.input = target;
  s.gap = gap;
  for (int64_t i = gap.start_index; i < gap.end_index(); ++i) s.input.samples[i] = 0.0;
  return s;
}

Sample cut_gap(const Waveform& target, Rng& rng) {
  const int64_t L = target.length();
  const double sr = target.sample_rate_hz;
  if (!(sr > 0.0)) throw UsageError("cut_gap: waveform lacks a sample rate");
  if (static_cast<double>(L) / sr <= 2.0)
    throw DataError(strformat("cut_gap: record of %.3f s too short (need > 2 s)",
                              static_cast<double>(L) / sr));

  const int64_t len_lo = static_cast<int64_t>(std::ceil(0.5 * sr));
  const int64_t len_hi = static_cast<int64_t>(std::floor(1.0 * sr));
  const int64_t margin = static_cast<int64_t>(std::floor(0.05 * static_cast<double>(L)));
  const int64_t gap_len = rng.uniform_int(len_lo, len_hi);
  const int64_t max_start = L - margin - gap_len;
  if (max_start < margin)
    throw DataError(strformat("cut_gap: no admissible gap position for length %lld",
                              static_cast<long long>(L)));
  const int64_t start = rng.uniform_int(margin, max_start);
  return make_sample(target, GapSpec{start, gap_len});
}

std::vector<Sample> mirror_augment(const std::vector<Sample>& samples) {
  std::vector<Sample> out = samples;
  out.reserve(2 * samples.size());
  for (const Sample& s : samples) {
    Sample m = s;
    std::reverse(m.input.samples.begin(), m.input.samples.end());
    std::reverse(m.target.samples.begin(), m.target.samples.end());
    m.gap.start_index = s.target.length() - s.gap.end_index();
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// file I/O
// ---------------------------------------------------------------------------

void save_waveform(const Waveform& w, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw DataError(path + ": cannot open for writing");
  for (double v : w.samples) std::fprintf(f, "%.17g\n", v);
  if (std::fclose(f) != 0) throw DataError(path + ": write failed");
}

Waveform load_waveform(const std::string& path, double sample_rate_hz) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": file not found");
  Waveform w;
  w.sample_rate_hz = sample_rate_hz;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.eof()) break;
    const char* begin = line.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    while (end && *end && std::isspace(static_cast<unsigned char>(*end))) ++end;
    if (end == begin || (end && *end))
      throw DataError(strformat("%s:%lld: invalid sample '%s'", path.c_str(),
                                static_cast<long long>(line_no), line.c_str()));
    if (!std::isfinite(v))
      throw DataError(strformat("%s:%lld: non-finite sample", path.c_str(),
                                static_cast<long long>(line_no)));
    w.samples.push_back(v);
  }
  if (w.samples.empty()) throw DataError(path + ": no samples");
  return w;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  nlohmann::json j;
  j["sample_rate_hz"] = m.sample_rate_hz;
  j["length"] = m.length;
  j["files"] = m.files;
  j["gaps"] = nlohmann::json::array();
  for (const GapSpec& g : m.gaps)
    j["gaps"].push_back({{"start_index", g.start_index}, {"length_samples", g.length_samples}});
  j["seed"] = m.seed;
  j["split"] = m.split;
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << j.dump(2) << "\n";
  if (!out) throw DataError(path + ": write failed");
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": file not found");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    m.length = j.at("length").get<int64_t>();
    m.files = j.at("files").get<std::vector<std::string>>();
    for (const auto& g : j.at("gaps"))
      m.gaps.push_back({g.at("start_index").get<int64_t>(),
                        g.at("length_samples").get<int64_t>()});
    m.seed = j.at("seed").get<uint64_t>();
    m.split = j.at("split").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (!(m.sample_rate_hz > 0.0)) throw DataError(path + ": sample_rate_hz must be positive");
  if (m.length < 2) throw DataError(path + ": length must be >= 2");
  if (m.gaps.size() != m.files.size() || m.split.size() != m.files.size())
    throw DataError(path + ": files/gaps/split arrays must be parallel");
  for (size_t i = 0; i < m.files.size(); ++i) {
    if (m.split[i] != "train" && m.split[i] != "val")
      throw DataError(path + ": split entry '" + m.split[i] + "' is not train/val");
    const GapSpec& g = m.gaps[i];
    if (g.start_index < 0 || g.length_samples < 1 || g.end_index() > m.length)
      throw DataError(path + ": gap out of bounds for file " + m.files[i]);
  }
  return m;
}

Dataset load_dataset(const std::string& manifest_path) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  const std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
  for (size_t i = 0; i < ds.manifest.files.size(); ++i) {
    const std::filesystem::path p = dir / ds.manifest.files[i];
    if (!std::filesystem::exists(p))
      throw DataError(manifest_path + ": manifest references missing file " +
                      ds.manifest.files[i]);
    Waveform w = load_waveform(p.string(), ds.manifest.sample_rate_hz);
    if (w.length() != ds.manifest.length)
      throw DataError(strformat("%s: expected %lld samples, found %lld",
                                p.string().c_str(), static_cast<long long>(ds.manifest.length),
                                static_cast<long long>(w.length())));
    ds.samples.push_back(make_sample(w, ds.manifest.gaps[i]));
  }
  return ds;
}

std::vector<int64_t> split_indices(const DatasetManifest& m, const std::string& split) {
  std::vector<int64_t> idx;
  for (size_t i = 0; i < m.split.size(); ++i)
    if (m.split[i] == split) idx.push_back(static_cast<int64_t>(i));
  return idx;
}

GapSpec detect_gap(const Waveform& w) {
  GapSpec best{0, 0};
  int64_t start = -1;
  for (int64_t i = 0; i <= w.length(); ++i) {
    if (i < w.length() && w.samples[i] == 0.0) {
      if (start < 0) start = i;
    } else if (start >= 0) {
      if (i - start > best.length_samples) best = GapSpec{start, i - start};
      start = -1;
    }
  }
  if (best.length_samples == 0) throw DataError("detect_gap: no zero run in the record");
  return best;
}

}  // namespace xinet
