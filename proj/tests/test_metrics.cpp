#include "xinet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "testutil.hpp"
#include "xinet/errors.hpp"

using namespace xinet;

namespace {

// Exhaustive reference: walks every monotone coupling through the (n, m)
// grid and minimizes the running maximum of the point distances.
double brute_dfd(const std::vector<double>& p, const std::vector<double>& q) {
  const size_t n = p.size(), m = q.size();
  double best = std::numeric_limits<double>::infinity();
  std::function<void(size_t, size_t, double)> walk = [&](size_t i, size_t j, double running) {
    running = std::max(running, std::abs(p[i] - q[j]));
    if (i == n - 1 && j == m - 1) {
      best = std::min(best, running);
      return;
    }
    if (i + 1 < n) walk(i + 1, j, running);
    if (j + 1 < m) walk(i, j + 1, running);
    if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1, running);
  };
  walk(0, 0, 0.0);
  return best;
}

std::vector<double> random_array(Rng& rng, int64_t len) {
  std::vector<double> v(len);
  for (auto& x : v) x = rng.normal(0.0, 1.0);
  return v;
}

std::vector<Sample> synthetic_samples(int count, uint64_t seed) {
  std::vector<Sample> out;
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    Waveform w = generate_waveform(seed * 100 + i, 256, 64.0);
    out.push_back(cut_gap(w, rng));
  }
  return out;
}

}  // namespace

TEST_CASE("gap_segment extracts the gap with optional clipped margin") {
  Waveform w;
  w.sample_rate_hz = 1.0;
  for (int i = 0; i < 20; ++i) w.samples.push_back(i);
  GapSpec gap{8, 4};

  std::vector<double> exact = gap_segment(w, gap);
  CHECK(exact == std::vector<double>{8, 9, 10, 11});

  std::vector<double> widened = gap_segment(w, gap, 4);
  CHECK(widened.size() == 12);  // margin == gap length -> 3x gap length
  CHECK(widened.front() == 4);
  CHECK(widened.back() == 15);

  GapSpec at_edge{0, 3};
  std::vector<double> clipped = gap_segment(w, at_edge, 5);
  CHECK(clipped.size() == 8);  // left side clipped away
  CHECK(clipped.front() == 0);

  CHECK_THROWS_AS(gap_segment(w, gap, -1), UsageError);
  CHECK_THROWS_AS(gap_segment(w, GapSpec{18, 5}, 0), UsageError);
}

TEST_CASE("dfd matches hand examples") {
  CHECK(dfd({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(dfd({0, 0}, {1, 1}) == 1.0);
  CHECK(dfd({0}, {5}) == 5.0);
  // The dog can wait: one-point curve against a spike.
  CHECK(dfd({0, 1, 0}, {0}) == 1.0);
  CHECK_THROWS_AS(dfd({}, {1.0}), UsageError);
  CHECK_THROWS_AS(dfd({1.0}, {}), UsageError);
}

TEST_CASE("dfd equals the exhaustive coupling enumeration") {
  Rng rng(1234);
  for (int trial = 0; trial < 500; ++trial) {
    const int64_t n = rng.uniform_int(1, 8), m = rng.uniform_int(1, 8);
    std::vector<double> p = random_array(rng, n), q = random_array(rng, m);
    const double got = dfd(p, q);
    const double want = brute_dfd(p, q);
    CAPTURE(trial);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("dfd properties on random arrays") {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const int64_t n = rng.uniform_int(1, 40), m = rng.uniform_int(1, 40);
    std::vector<double> p = random_array(rng, n), q = random_array(rng, m);
    const double d = dfd(p, q);
    CHECK(d >= 0.0);
    CHECK(d == dfd(q, p));  // symmetry, bit exact
    CHECK(d >= std::abs(p.front() - q.front()) - 1e-15);
    CHECK(d >= std::abs(p.back() - q.back()) - 1e-15);

    // Translation invariance.
    std::vector<double> ps = p, qs = q;
    for (auto& x : ps) x += 3.25;
    for (auto& x : qs) x += 3.25;
    CHECK(dfd(ps, qs) == doctest::Approx(d).epsilon(1e-12));

    // Reversing both curves keeps the distance.
    std::vector<double> pr(p.rbegin(), p.rend()), qr(q.rbegin(), q.rend());
    CHECK(dfd(pr, qr) == doctest::Approx(d).epsilon(1e-12));

    if (n == m) {
      double ident = 0.0;
      for (int64_t i = 0; i < n; ++i) ident = std::max(ident, std::abs(p[i] - q[i]));
      CHECK(d <= ident + 1e-15);  // identity coupling upper bound
    }
  }
}

TEST_CASE("dfd 2d polyline variant") {
  CHECK(dfd({0.0}, {0.0, 0.0}, true) == doctest::Approx(1.0));  // must reach (1, 0)
  CHECK(dfd({2, 2, 2}, {2, 2, 2}, true) == 0.0);
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p = random_array(rng, rng.uniform_int(1, 10));
    std::vector<double> q = random_array(rng, rng.uniform_int(1, 10));
    const double d2 = dfd(p, q, true);
    CHECK(d2 == dfd(q, p, true));
    CHECK(d2 >= dfd(p, q) - 1e-15);  // Euclidean dominates the amplitude metric
  }
}

TEST_CASE("mrd examples and re-computation oracle") {
  CHECK(mrd({{0, 1}}, {{0, 1}}) == 0.0);
  CHECK(mrd({{0, 1}}, {{0, 3}}) == 2.0);
  CHECK_THROWS_AS(mrd({}, {}), UsageError);
  CHECK_THROWS_AS(mrd({{1.0}}, {{1.0}, {2.0}}), UsageError);
  CHECK_THROWS_AS(mrd({{}}, {{1.0}}), UsageError);

  Rng rng(321);
  for (int trial = 0; trial < 100; ++trial) {
    const int count = static_cast<int>(rng.uniform_int(1, 12));
    std::vector<std::vector<double>> preds, targets;
    for (int i = 0; i < count; ++i) {
      preds.push_back(random_array(rng, rng.uniform_int(1, 30)));
      targets.push_back(random_array(rng, rng.uniform_int(1, 30)));
    }
    // Independent direct evaluation of the defining formula.
    double mp = 0.0, mt = 0.0;
    for (const auto& a : preds)
      mp += *std::max_element(a.begin(), a.end()) - *std::min_element(a.begin(), a.end());
    for (const auto& a : targets)
      mt += *std::max_element(a.begin(), a.end()) - *std::min_element(a.begin(), a.end());
    const double want = std::abs(mp / count - mt / count);
    CHECK(mrd(preds, targets) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("mae and rmse") {
  CHECK(mae({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(rmse({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(mae({0, 2}, {0, 0}) == 1.0);
  CHECK(rmse({0, 2}, {0, 0}) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(mae({1.0}, {1.0, 2.0}), UsageError);
  CHECK_THROWS_AS(rmse({}, {}), UsageError);

  Rng rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t n = rng.uniform_int(1, 50);
    std::vector<double> p = random_array(rng, n), q = random_array(rng, n);
    CHECK(rmse(p, q) >= mae(p, q) - 1e-15);  // Jensen
    std::vector<double> ps = p, qs = q;
    for (auto& x : ps) x -= 1.5;
    for (auto& x : qs) x -= 1.5;
    CHECK(mae(ps, qs) == doctest::Approx(mae(p, q)).epsilon(1e-12));
    CHECK(rmse(ps, qs) == doctest::Approx(rmse(p, q)).epsilon(1e-12));
  }
}

TEST_CASE("evaluate: ground truth scores zero, zero fill reproduces the reference") {
  std::vector<Sample> samples = synthetic_samples(6, 42);

  EvalReport perfect = evaluate(samples, [](const Sample& s) { return s.target; });
  CHECK(perfect.dfd_mean == 0.0);
  CHECK(perfect.mrd == 0.0);
  CHECK(perfect.mae_mean == 0.0);
  CHECK(perfect.rmse_mean == 0.0);
  CHECK(perfect.per_sample.size() == samples.size());

  EvalReport reference = evaluate(samples, zero_fill_baseline);
  CHECK(reference.mae_mean > 0.0);
  CHECK(reference.rmse_mean >= reference.mae_mean);
  CHECK(std::isfinite(reference.dfd_mean));
  CHECK(std::isfinite(reference.mrd));
  // Zero fill leaves the gap at zero, so each prediction segment is constant.
  for (const SampleMetrics& m : reference.per_sample) CHECK(m.pred_range == 0.0);

  // Aggregates are means of the per-sample records.
  double dfd_sum = 0.0;
  for (const SampleMetrics& m : reference.per_sample) dfd_sum += m.dfd;
  CHECK(reference.dfd_mean ==
        doctest::Approx(dfd_sum / samples.size()).epsilon(1e-12));
}

TEST_CASE("evaluate is permutation invariant") {
  std::vector<Sample> samples = synthetic_samples(8, 7);
  EvalReport a = evaluate(samples, zero_fill_baseline, 3);
  std::vector<Sample> shuffled = samples;
  std::rotate(shuffled.begin(), shuffled.begin() + 3, shuffled.end());
  std::swap(shuffled[0], shuffled[4]);
  EvalReport b = evaluate(shuffled, zero_fill_baseline, 3);
  CHECK(a.dfd_mean == doctest::Approx(b.dfd_mean).epsilon(1e-12));
  CHECK(a.mrd == doctest::Approx(b.mrd).epsilon(1e-12));
  CHECK(a.mae_mean == doctest::Approx(b.mae_mean).epsilon(1e-12));
  CHECK(a.rmse_mean == doctest::Approx(b.rmse_mean).epsilon(1e-12));
}

TEST_CASE("evaluation is reverse invariant") {
  std::vector<Sample> samples = synthetic_samples(5, 99);
  std::vector<Sample> reversed = mirror_augment(samples);
  reversed.erase(reversed.begin(), reversed.begin() + samples.size());
  REQUIRE(reversed.size() == samples.size());
  EvalReport fwd = evaluate(samples, zero_fill_baseline);
  EvalReport rev = evaluate(reversed, zero_fill_baseline);
  CHECK(fwd.mae_mean == doctest::Approx(rev.mae_mean).epsilon(1e-12));
  CHECK(fwd.rmse_mean == doctest::Approx(rev.rmse_mean).epsilon(1e-12));
  CHECK(fwd.mrd == doctest::Approx(rev.mrd).epsilon(1e-12));
  CHECK(fwd.dfd_mean == doctest::Approx(rev.dfd_mean).epsilon(1e-12));
}

TEST_CASE("linear interpolation baseline") {
  SUBCASE("flat signal is reproduced exactly") {
    Waveform w;
    w.sample_rate_hz = 1.0;
    w.samples.assign(16, 2.5);
    Sample s = make_sample(w, GapSpec{6, 4});
    Waveform filled = linear_interp_baseline(s);
    for (int64_t i = 0; i < 16; ++i) CHECK(filled.samples[i] == doctest::Approx(2.5));
  }

  SUBCASE("single missing point between 0 and 2 becomes 1") {
    Waveform w;
    w.sample_rate_hz = 1.0;
    w.samples = {0, 0, 7, 2, 2, 2};  // 7 is hidden by the gap
    Sample s = make_sample(w, GapSpec{2, 1});
    Waveform filled = linear_interp_baseline(s);
    CHECK(filled.samples[2] == doctest::Approx(1.0));
  }

  SUBCASE("exact on linear data, beats nothing on a sine") {
    Waveform ramp;
    ramp.sample_rate_hz = 1.0;
    for (int i = 0; i < 32; ++i) ramp.samples.push_back(0.5 * i - 3.0);
    GapSpec gap{10, 7};
    Sample s = make_sample(ramp, gap);
    EvalReport r = evaluate({s}, linear_interp_baseline);
    CHECK(r.mae_mean == doctest::Approx(0.0).epsilon(1e-12));

    Waveform sine;
    sine.sample_rate_hz = 32.0;
    for (int i = 0; i < 64; ++i) sine.samples.push_back(std::sin(2 * M_PI * 3 * i / 32.0));
    Sample s2 = make_sample(sine, GapSpec{20, 16});
    EvalReport r2 = evaluate({s2}, linear_interp_baseline);
    CHECK(r2.mae_mean > 0.0);
  }

  SUBCASE("boundary gap rejected") {
    Waveform w;
    w.sample_rate_hz = 1.0;
    w.samples.assign(8, 1.0);
    Sample s = make_sample(w, GapSpec{0, 3});
    CHECK_THROWS_AS(linear_interp_baseline(s), DataError);
    Sample s2 = make_sample(w, GapSpec{5, 3});
    CHECK_THROWS_AS(linear_interp_baseline(s2), DataError);
  }
}

TEST_CASE("report json round trip and table formatting") {
  std::vector<Sample> samples = synthetic_samples(3, 5);
  EvalReport r = evaluate(samples, zero_fill_baseline, 2);
  EvalReport back = report_from_json(report_to_json(r));
  CHECK(back.dfd_mean == r.dfd_mean);
  CHECK(back.mrd == r.mrd);
  CHECK(back.mae_mean == r.mae_mean);
  CHECK(back.rmse_mean == r.rmse_mean);
  CHECK(back.margin == r.margin);
  REQUIRE(back.per_sample.size() == r.per_sample.size());
  CHECK(back.per_sample[1].dfd == r.per_sample[1].dfd);

  CHECK_THROWS_AS(report_from_json("{}"), DataError);

  EvalReport model = evaluate(samples, [](const Sample& s) { return s.target; });
  std::string table = format_table({{"Reference", r}, {"Model", model}});
  CHECK(table.find("Metric") != std::string::npos);
  CHECK(table.find("DFD") != std::string::npos);
  CHECK(table.find("MRD") != std::string::npos);
  CHECK(table.find("MAE") != std::string::npos);
  CHECK(table.find("RMSE") != std::string::npos);
  CHECK(table.find("Reference") != std::string::npos);
  CHECK(table.find("lower is better") != std::string::npos);
  CHECK(table.find("0.0000") != std::string::npos);  // the perfect column
  CHECK_THROWS_AS(format_table({}), UsageError);
}
