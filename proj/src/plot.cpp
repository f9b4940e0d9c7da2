#include "xinet/plot.hpp"

#include <algorithm>
#include <cmath>

#include "xinet/errors.hpp"

namespace xinet {

namespace {

constexpr double kWidth = 900.0, kPanelHeight = 170.0, kPad = 34.0;

// Panel-local coordinates: identical traces yield identical panel bodies.
void append_panel(std::string& svg, const Waveform& w, const char* title, int index,
                  const GapSpec* gap) {
  const double plot_w = kWidth - 2 * kPad, plot_h = kPanelHeight - 2 * kPad;
  const auto [lo_it, hi_it] = std::minmax_element(w.samples.begin(), w.samples.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi - lo < 1e-12) {  // flat trace: give it a visible band
    lo -= 1.0;
    hi += 1.0;
  }
  const int64_t n = w.length();
  auto x_of = [&](int64_t i) {
    return kPad + plot_w * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  auto y_of = [&](double v) { return kPad + plot_h * (hi - v) / (hi - lo); };

  svg += strformat("<g transform=\"translate(0,%.2f)\">\n", index * kPanelHeight);
  if (gap) {
    const double gx = x_of(gap->start_index);
    const double gw = x_of(gap->end_index() - 1) - gx;
    svg += strformat(
        "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"#fde8e8\"/>\n", gx,
        kPad, std::max(gw, 1.0), plot_h);
  }
  svg += strformat(
      "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" "
      "stroke=\"#888\"/>\n",
      kPad, kPad, plot_w, plot_h);
  svg += strformat("<text x=\"%.2f\" y=\"%.2f\" font-size=\"13\" font-family=\"sans-serif\">"
                   "%s</text>\n",
                   kPad, kPad - 8.0, title);
  svg += "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1\" points=\"";
  for (int64_t i = 0; i < n; ++i) {
    if (i) svg += ' ';
    svg += strformat("%.2f,%.2f", x_of(i), y_of(w.samples[i]));
  }
  svg += "\"/>\n</g>\n";
}

}  // namespace

std::string render_three_panel_svg(const Waveform& target, const Waveform& gapped,
                                   const Waveform& recon) {
  if (target.length() < 2 || target.length() != gapped.length() ||
      target.length() != recon.length())
    throw UsageError("plot: traces must share a length of at least 2");

  GapSpec gap;
  bool have_gap = true;
  try {
    gap = detect_gap(gapped);
  } catch (const DataError&) {
    have_gap = false;
  }

  std::string svg = strformat(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
      "viewBox=\"0 0 %.0f %.0f\">\n<rect width=\"100%%\" height=\"100%%\" fill=\"white\"/>\n",
      kWidth, 3 * kPanelHeight, kWidth, 3 * kPanelHeight);
  append_panel(svg, target, "Original", 0, have_gap ? &gap : nullptr);
  append_panel(svg, gapped, "Gapped", 1, have_gap ? &gap : nullptr);
  append_panel(svg, recon, "Reconstructed", 2, have_gap ? &gap : nullptr);
  svg += "</svg>\n";
  return svg;
}

std::string traces_csv(const Waveform& target, const Waveform& gapped, const Waveform& recon) {
  if (target.length() != gapped.length() || target.length() != recon.length())
    throw UsageError("plot: traces must share a length");
  std::string csv = "index,target,gapped,recon\n";
  for (int64_t i = 0; i < target.length(); ++i)
    csv += strformat("%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(i), target.samples[i],
                     gapped.samples[i], recon.samples[i]);
  return csv;
}

}  // namespace xinet
