#include "xinet/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "xinet/errors.hpp"

namespace xinet {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

Waveform upsample2x(const Waveform& w) {
  const int64_t L = w.length();
  if (L < 2) throw DataError(strformat("upsample2x: need at least 2 samples, got %lld",
                                       static_cast<long long>(L)));
  Waveform out;
  out.sample_rate_hz = 2.0 * w.sample_rate_hz;
  out.samples.resize(2 * L);
  for (int64_t i = 0; i + 1 < L; ++i) {
    out.samples[2 * i] = w.samples[i];
    out.samples[2 * i + 1] = 0.5 * (w.samples[i] + w.samples[i + 1]);
  }
  out.samples[2 * L - 2] = w.samples[L - 1];
  out.samples[2 * L - 1] = w.samples[L - 1];
  return out;
}

// ---------------------------------------------------------------------------
// Butterworth bandpass design
// ---------------------------------------------------------------------------

SosFilter design_butterworth_bandpass(int order, double low_hz, double high_hz,
                                      double sample_rate_hz) {
  if (order < 2 || order % 2 != 0)
    throw UsageError(strformat("butterworth: order must be even and >= 2, got %d", order));
  if (!(sample_rate_hz > 0.0))
    throw UsageError("butterworth: sample rate must be positive");
  if (!(0.0 < low_hz && low_hz < high_hz && high_hz < sample_rate_hz / 2.0))
    throw UsageError(strformat(
        "butterworth: band [%g, %g] Hz invalid for Nyquist %g Hz (need 0 < low < high < fs/2)",
        low_hz, high_hz, sample_rate_hz / 2.0));

  using cd = std::complex<double>;
  const int n_proto = order / 2;
  const double K = 2.0 * sample_rate_hz;
  // Pre-warp so the digital response hits the analog one exactly at the cutoffs.
  const double wl = K * std::tan(kPi * low_hz / sample_rate_hz);
  const double wh = K * std::tan(kPi * high_hz / sample_rate_hz);
  const double bw = wh - wl;
  const double w0_sq = wl * wh;

  // Analog lowpass prototype poles on the unit circle, then the bandpass
  // substitution S -> (s^2 + w0^2) / (bw * s); each prototype pole yields two
  // analog bandpass poles.
  std::vector<cd> analog_poles;
  for (int k = 0; k < n_proto; ++k) {
    const double theta = kPi * (2.0 * k + 1.0) / (2.0 * n_proto) + kPi / 2.0;
    const cd p = std::polar(1.0, theta);
    const cd pb = p * (bw * 0.5);
    const cd disc = std::sqrt(pb * pb - cd(w0_sq, 0.0));
    analog_poles.push_back(pb + disc);
    analog_poles.push_back(pb - disc);
  }

  // Pair each pole with its conjugate partner. Complex poles pair across the
  // real axis; real poles (a wide band can produce them) pair with each other.
  std::vector<std::pair<cd, cd>> pairs;
  std::vector<cd> upper, real_poles;
  for (const cd& q : analog_poles) {
    if (std::fabs(q.imag()) < 1e-12 * std::max(1.0, std::fabs(q.real())))
      real_poles.push_back(cd(q.real(), 0.0));
    else if (q.imag() > 0.0)
      upper.push_back(q);
  }
  for (const cd& q : upper) pairs.emplace_back(q, std::conj(q));
  std::sort(real_poles.begin(), real_poles.end(),
            [](const cd& a, const cd& b) { return a.real() < b.real(); });
  for (size_t i = 0; i + 1 < real_poles.size(); i += 2)
    pairs.emplace_back(real_poles[i], real_poles[i + 1]);
  if (static_cast<int>(pairs.size()) != n_proto)
    throw NumericError("butterworth: failed to pair analog poles into sections");

  SosFilter filter;
  for (const auto& [qa, qb] : pairs) {
    // Bilinear transform of the pole pair; the section keeps one zero at
    // z = +1 and one at z = -1 (numerator z^2 - 1).
    const cd za = (cd(K, 0.0) + qa) / (cd(K, 0.0) - qa);
    const cd zb = (cd(K, 0.0) + qb) / (cd(K, 0.0) - qb);
    if (std::abs(za) >= 1.0 || std::abs(zb) >= 1.0)
      throw NumericError(strformat(
          "butterworth: unstable section (|pole| = %.17g) for band [%g, %g] Hz",
          std::max(std::abs(za), std::abs(zb)), low_hz, high_hz));
    const double denom = ((cd(K, 0.0) - qa) * (cd(K, 0.0) - qb)).real();
    const double g = bw * K / denom;
    Biquad s;
    s.b0 = g;
    s.b1 = 0.0;
    s.b2 = -g;
    s.a1 = -(za + zb).real();
    s.a2 = (za * zb).real();
    filter.sections.push_back(s);
  }
  return filter;
}

std::vector<double> sosfilt(const SosFilter& filter, const std::vector<double>& x) {
  std::vector<double> y = x;
  for (const Biquad& s : filter.sections) {
    // Direct form II transposed, zero initial state.
    double z1 = 0.0, z2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

Waveform butterworth_bandpass(const Waveform& w, double low_hz, double high_hz, int order) {
  SosFilter f = design_butterworth_bandpass(order, low_hz, high_hz, w.sample_rate_hz);
  return Waveform{sosfilt(f, w.samples), w.sample_rate_hz};
}

// ---------------------------------------------------------------------------
// DFT
// ---------------------------------------------------------------------------

namespace {

void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const std::complex<double> wl = std::polar(1.0, ang);
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Bluestein's chirp transform for arbitrary lengths, built on fft_pow2.
void fft_bluestein(std::vector<std::complex<double>>& a, bool inverse) {
  using cd = std::complex<double>;
  const size_t n = a.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<cd> chirp(n);
  for (size_t i = 0; i < n; ++i) {
    // i^2 mod 2n keeps the argument bounded.
    const uint64_t idx = (static_cast<uint64_t>(i) * i) % (2 * n);
    chirp[i] = std::polar(1.0, sign * kPi * static_cast<double>(idx) / static_cast<double>(n));
  }
  const size_t m = next_pow2(2 * n - 1);
  std::vector<cd> f(m, cd(0, 0)), g(m, cd(0, 0));
  for (size_t i = 0; i < n; ++i) f[i] = a[i] * chirp[i];
  g[0] = std::conj(chirp[0]);
  for (size_t i = 1; i < n; ++i) g[i] = g[m - i] = std::conj(chirp[i]);
  fft_pow2(f, false);
  fft_pow2(g, false);
  for (size_t i = 0; i < m; ++i) f[i] *= g[i];
  fft_pow2(f, true);
  const double scale = 1.0 / static_cast<double>(m);
  for (size_t i = 0; i < n; ++i) a[i] = f[i] * chirp[i] * scale;
}

}  // namespace

void fft_complex(std::vector<std::complex<double>>& a, bool inverse) {
  if (a.empty()) return;
  if (is_pow2(a.size()))
    fft_pow2(a, inverse);
  else
    fft_bluestein(a, inverse);
}

Spectrum dft(const Waveform& w) {
  const size_t L = w.samples.size();
  std::vector<std::complex<double>> a(L);
  for (size_t i = 0; i < L; ++i) a[i] = std::complex<double>(w.samples[i], 0.0);
  fft_complex(a, false);
  Spectrum s;
  s.sample_rate_hz = w.sample_rate_hz;
  s.real_part.resize(L);
  s.imag_part.resize(L);
  for (size_t i = 0; i < L; ++i) {
    s.real_part[i] = a[i].real();
    s.imag_part[i] = a[i].imag();
  }
  return s;
}

Waveform idft(const Spectrum& s) {
  const size_t L = s.real_part.size();
  if (s.imag_part.size() != L) throw UsageError("idft: real/imag plane lengths differ");
  std::vector<std::complex<double>> a(L);
  for (size_t i = 0; i < L; ++i) a[i] = std::complex<double>(s.real_part[i], s.imag_part[i]);
  fft_complex(a, true);
  Waveform w;
  w.sample_rate_hz = s.sample_rate_hz;
  w.samples.resize(L);
  const double scale = 1.0 / static_cast<double>(L);
  for (size_t i = 0; i < L; ++i) w.samples[i] = a[i].real() * scale;
  return w;
}

ad::Tensor stack_complex(const Spectrum& s, double scale) {
  const int64_t L = s.length();
  if (s.imag_part.size() != static_cast<size_t>(L))
    throw UsageError("stack_complex: real/imag plane lengths differ");
  std::vector<double> data(2 * L);
  for (int64_t i = 0; i < L; ++i) {
    data[2 * i] = s.real_part[i] * scale;
    data[2 * i + 1] = s.imag_part[i] * scale;
  }
  return ad::Tensor::from({L, 2}, std::move(data));
}

}  // namespace xinet
