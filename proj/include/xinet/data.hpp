#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xinet/dsp.hpp"
#include "xinet/rng.hpp"

namespace xinet {

// A contiguous missing segment, zero-filled in model inputs.
struct GapSpec {
  int64_t start_index = 0;
  int64_t length_samples = 0;

  int64_t end_index() const { return start_index + length_samples; }  // exclusive
};

struct Sample {
  Waveform input;   // target with the gap zero-filled
  Waveform target;  // complete waveform
  GapSpec gap;
};

struct DatasetManifest {
  double sample_rate_hz = 0.0;
  int64_t length = 0;
  std::vector<std::string> files;  // relative to the manifest directory
  std::vector<GapSpec> gaps;       // parallel to files
  std::vector<std::string> split;  // parallel to files, "train" or "val"
  uint64_t seed = 0;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;  // parallel to manifest.files
};

struct GeneratorConfig {
  double noise_std = 0.1;
  int min_events = 1;
  int max_events = 3;
  double min_freq_hz = 1.0;
  double max_freq_hz = 8.0;
  double min_amp = 0.5;  // absolute event amplitudes; defaults give a
  double max_amp = 1.5;  // 5:1..15:1 ratio over the default noise floor
  double min_decay_s = 0.5;
  double max_decay_s = 3.0;
  double min_onset_frac = 0.05;
  double max_onset_frac = 0.85;
  double band_low_hz = 0.5;
  double band_high_hz = 20.0;
  int filter_order = 4;
};

struct EventParams {
  double onset_s, freq_hz, amp, decay_s, phase;
};

// Noise plus exponentially enveloped damped sinusoids, no preprocessing.
// Drawn event parameters are reported through `events_out` when non-null.
Waveform generate_raw(uint64_t seed, int64_t length, double sample_rate_hz,
                      const GeneratorConfig& cfg = {},
                      std::vector<EventParams>* events_out = nullptr);

// Full synthetic record: raw generation at half rate, upsample2x, Butterworth
// bandpass. Output has exactly `length` samples at `sample_rate_hz`.
Waveform generate_waveform(uint64_t seed, int64_t length, double sample_rate_hz,
                           const GeneratorConfig& cfg = {});

// Cuts a 0.5-1.0 s gap, uniform over admissible lengths and positions, kept
// out of the first/last 5% of the record.
Sample cut_gap(const Waveform& target, Rng& rng);

// Zero-fills the gap of a complete waveform.
Sample make_sample(const Waveform& target, const GapSpec& gap);

// Originals followed by time-reversed copies (gap indices remapped).
std::vector<Sample> mirror_augment(const std::vector<Sample>& samples);

void save_waveform(const Waveform& w, const std::string& path);
Waveform load_waveform(const std::string& path, double sample_rate_hz);

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Loads every waveform the manifest lists and re-derives gapped inputs.
Dataset load_dataset(const std::string& manifest_path);

// Longest run of exactly-zero samples, for gapped records without metadata.
GapSpec detect_gap(const Waveform& w);

std::vector<int64_t> split_indices(const DatasetManifest& m, const std::string& split);

}  // namespace xinet
