#include "xinet/plot.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "testutil.hpp"
#include "xinet/errors.hpp"

using namespace xinet;

namespace {

// Minimal XML well-formedness check: balanced, properly nested tags.
bool xml_well_formed(const std::string& text) {
  std::vector<std::string> stack;
  size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '<') {
      ++i;
      continue;
    }
    size_t j = i + 1;
    bool in_quote = false;
    while (j < text.size() && (in_quote || text[j] != '>')) {
      if (text[j] == '"') in_quote = !in_quote;
      ++j;
    }
    if (j == text.size()) return false;
    std::string tag = text.substr(i + 1, j - i - 1);
    if (!tag.empty() && tag.front() == '?') {  // declaration
      i = j + 1;
      continue;
    }
    if (!tag.empty() && tag.front() == '/') {
      std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else if (!tag.empty() && tag.back() == '/') {
      // self-closing
    } else {
      std::string name = tag.substr(0, tag.find_first_of(" \t\n"));
      stack.push_back(name);
    }
    i = j + 1;
  }
  return stack.empty();
}

std::vector<std::string> polyline_points(const std::string& svg) {
  std::vector<std::string> out;
  size_t pos = 0;
  while ((pos = svg.find("points=\"", pos)) != std::string::npos) {
    pos += 8;
    size_t end = svg.find('"', pos);
    out.push_back(svg.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

Waveform sine_wave(int64_t n, double cycles) {
  Waveform w;
  w.sample_rate_hz = 64.0;
  // Phase offset keeps every sample away from exact zero, so a trace with no
  // cut gap is also free of detectable zero runs.
  for (int64_t i = 0; i < n; ++i)
    w.samples.push_back(std::sin(2.0 * M_PI * cycles * i / static_cast<double>(n) + 0.3));
  return w;
}

}  // namespace

TEST_CASE("three-panel svg is well-formed and shades the gap") {
  Waveform target = sine_wave(128, 3.0);
  Sample s = make_sample(target, GapSpec{40, 20});
  Waveform recon = s.input;
  for (int64_t i = 40; i < 60; ++i) recon.samples[i] = 0.5;

  std::string svg = render_three_panel_svg(target, s.input, recon);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(xml_well_formed(svg));
  CHECK(polyline_points(svg).size() == 3);
  CHECK(svg.find("Original") != std::string::npos);
  CHECK(svg.find("Gapped") != std::string::npos);
  CHECK(svg.find("Reconstructed") != std::string::npos);
  CHECK(svg.find("#fde8e8") != std::string::npos);  // gap shading present
}

TEST_CASE("identical traces render three identical panels") {
  Waveform w = sine_wave(64, 2.0);
  std::string svg = render_three_panel_svg(w, w, w);
  CHECK(xml_well_formed(svg));
  auto points = polyline_points(svg);
  REQUIRE(points.size() == 3);
  CHECK(points[0] == points[1]);
  CHECK(points[1] == points[2]);
  CHECK(svg.find("#fde8e8") == std::string::npos);  // nothing to shade
}

TEST_CASE("flat traces still render") {
  Waveform w;
  w.sample_rate_hz = 1.0;
  w.samples.assign(16, 3.0);
  std::string svg = render_three_panel_svg(w, w, w);
  CHECK(xml_well_formed(svg));
  CHECK(polyline_points(svg).size() == 3);
}

TEST_CASE("traces csv lists all three traces") {
  Waveform target = sine_wave(32, 1.0);
  Sample s = make_sample(target, GapSpec{10, 5});
  std::string csv = traces_csv(target, s.input, target);
  CHECK(csv.rfind("index,target,gapped,recon\n", 0) == 0);
  int lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == 33);  // header + 32 rows
  CHECK(csv.find("\n10,") != std::string::npos);
}

TEST_CASE("plot input validation") {
  Waveform a = sine_wave(32, 1.0), b = sine_wave(16, 1.0);
  CHECK_THROWS_AS(render_three_panel_svg(a, b, a), UsageError);
  CHECK_THROWS_AS(traces_csv(a, b, a), UsageError);
  Waveform single;
  single.sample_rate_hz = 1.0;
  single.samples = {1.0};
  CHECK_THROWS_AS(render_three_panel_svg(single, single, single), UsageError);
}
