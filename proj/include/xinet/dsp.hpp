#pragma once

#include <complex>
#include <vector>

#include "xinet/tensor.hpp"

namespace xinet {

// A uniformly sampled real-valued signal.
struct Waveform {
  std::vector<double> samples;
  double sample_rate_hz = 0.0;

  int64_t length() const { return static_cast<int64_t>(samples.size()); }
  double duration_s() const { return length() / sample_rate_hz; }
};

// Same-length discrete Fourier transform of a waveform, split into planes.
struct Spectrum {
  std::vector<double> real_part;
  std::vector<double> imag_part;
  double sample_rate_hz = 0.0;

  int64_t length() const { return static_cast<int64_t>(real_part.size()); }
};

// Doubles the sample rate: originals at even indices, midpoints between
// neighbours at odd indices, final sample replicated so the output is
// exactly twice as long.
Waveform upsample2x(const Waveform& w);

struct Biquad {
  double b0, b1, b2;  // numerator (gain folded in)
  double a1, a2;      // denominator, a0 normalized to 1
};

struct SosFilter {
  std::vector<Biquad> sections;
};

// Butterworth bandpass of the given (even) final order as second-order
// sections: analog prototype, bandpass transform with frequency pre-warping,
// bilinear transform. Rejects invalid bands and unstable sections.
SosFilter design_butterworth_bandpass(int order, double low_hz, double high_hz,
                                      double sample_rate_hz);

// Single causal forward pass through the cascade, zero initial state.
std::vector<double> sosfilt(const SosFilter& filter, const std::vector<double>& x);

Waveform butterworth_bandpass(const Waveform& w, double low_hz, double high_hz, int order = 4);

// Length-L DFT, X[k] = sum_n x[n] exp(-i 2 pi k n / L). Radix-2 FFT for
// power-of-two lengths, Bluestein otherwise.
Spectrum dft(const Waveform& w);
Waveform idft(const Spectrum& s);

// In-place complex transform used by dft/idft; exposed for reuse and tests.
void fft_complex(std::vector<std::complex<double>>& a, bool inverse);

// Spectrum as a [L, 2] tensor, channel 0 real and channel 1 imaginary,
// optionally scaled (the model feeds 1/L to keep magnitudes signal-like).
ad::Tensor stack_complex(const Spectrum& s, double scale = 1.0);

}  // namespace xinet
