#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "fortune/baselines.hpp"
#include "fortune/errors.hpp"
#include "fortune/rng.hpp"
#include "fortune/trace.hpp"

using namespace fortune;

namespace {

TraceMatrix make_trace(const std::vector<std::vector<double>>& rows) {
  TraceMatrix t;
  const std::size_t m = rows.size(), T = rows.front().size();
  t.values = Mat(m, T);
  for (std::size_t c = 0; c < m; ++c) {
    t.channel_names.push_back("CH" + std::to_string(c));
    for (std::size_t k = 0; k < T; ++k) t.values(c, k) = rows[c][k];
  }
  return t;
}

// Warping-path definition of DTW: minimum over all monotone paths from
// (0,0) to (n-1,m-1) of the summed squared differences. Exponential, but
// fine for the short sequences used here, and independent of the DP.
double enum_dtw(const std::vector<double>& a, const std::vector<double>& b,
                std::size_t i, std::size_t j) {
  const double d = a[i] - b[j];
  const double c = d * d;
  if (i + 1 == a.size() && j + 1 == b.size()) return c;
  double best = std::numeric_limits<double>::infinity();
  if (i + 1 < a.size()) best = std::min(best, enum_dtw(a, b, i + 1, j));
  if (j + 1 < b.size()) best = std::min(best, enum_dtw(a, b, i, j + 1));
  if (i + 1 < a.size() && j + 1 < b.size())
    best = std::min(best, enum_dtw(a, b, i + 1, j + 1));
  return c + best;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("cpd config and input validation") {
  auto t = make_trace({{1.0, 2.0, 3.0}});
  CpdConfig bad;
  bad.mu_a = 0.0;
  CHECK_THROWS_AS(cpd_detect(t, bad), UsageError);
  bad = CpdConfig{};
  bad.beta = -1.0;
  CHECK_THROWS_AS(cpd_detect(t, bad), UsageError);
  bad = CpdConfig{};
  bad.channel = 1;
  CHECK_THROWS_AS(cpd_detect(t, bad), DataError);
}

TEST_CASE("cpd matches an independent transcription of its recurrence") {
  Rng rng(2024);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 5 + rng.below(60);
    std::vector<double> xs(n);
    for (auto& v : xs) v = double(rng.below(300));
    auto t = make_trace({xs});
    CpdConfig cfg;
    cfg.mu_a = 20.0 + double(rng.below(100));
    cfg.beta = 0.2 + 0.1 * double(rng.below(10));
    const auto got = cpd_detect(t, cfg);

    double s = 0.0, mu_b = xs[0], sum = xs[0];
    std::size_t cnt = 1;
    std::vector<std::uint8_t> flags(n, 0);
    std::vector<double> stat(n);
    std::vector<std::size_t> cps;
    for (std::size_t i = 0; i < n; ++i) {
      s = std::max(0.0, s + cfg.beta * (xs[i] - (mu_b + cfg.mu_a / 2.0)));
      stat[i] = s;
      if (s > cfg.mu_a) {
        flags[i] = 1;
        cps.push_back(i);
        s = 0.0;
      } else if (i > 0) {
        sum += xs[i];
        ++cnt;
        mu_b = sum / double(cnt);
      }
    }
    CHECK(got.flags == flags);
    CHECK(got.change_points == cps);
    REQUIRE(got.statistic.size() == n);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(got.statistic[i] == doctest::Approx(stat[i]).epsilon(1e-12));
      CHECK(got.statistic[i] >= 0.0);
    }
  }
}

TEST_CASE("cpd stays quiet on a constant channel") {
  auto t = make_trace({std::vector<double>(80, 50.0)});
  const auto res = cpd_detect(t, CpdConfig{});
  CHECK(res.change_points.empty());
  CHECK(std::count(res.flags.begin(), res.flags.end(), 1) == 0);
  for (double s : res.statistic) CHECK(s == 0.0);
}

TEST_CASE("cpd reports a mean shift within a few samples") {
  std::vector<double> xs(100, 10.0);
  std::fill(xs.begin() + 50, xs.end(), 200.0);
  auto t = make_trace({xs});
  CpdConfig cfg;  // mu_a = 100, beta = 0.65
  const auto res = cpd_detect(t, cfg);
  REQUIRE_FALSE(res.change_points.empty());
  CHECK(res.change_points.front() >= 50);
  CHECK(res.change_points.front() <= 55);
  // The statistic resets after each report, so a sustained shift keeps
  // re-reporting rather than saturating.
  CHECK(res.change_points.size() >= 2);
}

TEST_CASE("dtw distance on hand-checked pairs") {
  std::vector<double> a{0.0}, b{1.0};
  CHECK(dtw_distance(a, b) == 1.0);
  std::vector<double> aa{0.0, 0.0};
  CHECK(dtw_distance(aa, b) == 2.0);  // both zeros must align to the one 1
  std::vector<double> p{0.0, 1.0, 2.0}, q{0.0, 1.0, 2.0};
  CHECK(dtw_distance(p, q) == 0.0);
  // Stretching is free: a long plateau matches a short one exactly.
  std::vector<double> plat1{5.0, 5.0, 5.0, 5.0, 5.0}, plat2{5.0};
  CHECK(dtw_distance(plat1, plat2) == 0.0);
  CHECK_THROWS_AS(dtw_distance({}, b), DataError);
  CHECK_THROWS_AS(dtw_distance(a, {}), DataError);
}

TEST_CASE("dtw distance equals the minimum over explicit warping paths") {
  Rng rng(9090);
  for (int rep = 0; rep < 2000; ++rep) {
    const std::size_t n = 1 + rng.below(6), m = 1 + rng.below(6);
    std::vector<double> a(n), b(m);
    for (auto& v : a) v = double(rng.below(3));
    for (auto& v : b) v = double(rng.below(3));
    const double got = dtw_distance(a, b);
    const double want = enum_dtw(a, b, 0, 0);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("dtw distance symmetry, non-negativity, zero self-distance") {
  Rng rng(9191);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng.below(10), m = 1 + rng.below(10);
    std::vector<double> a(n), b(m);
    for (auto& v : a) v = rng.uniform(0.0, 8.0);
    for (auto& v : b) v = rng.uniform(0.0, 8.0);
    const double ab = dtw_distance(a, b);
    CHECK(ab >= 0.0);
    CHECK(ab == doctest::Approx(dtw_distance(b, a)).epsilon(1e-12));
    CHECK(dtw_distance(a, a) == 0.0);
  }
}

TEST_CASE("dtw detector validation") {
  auto t = make_trace({{1.0, 2.0}, {3.0, 4.0}});
  DtwConfig cfg;
  cfg.reference = {};
  CHECK_THROWS_AS(dtw_detect(t, cfg), DataError);
  cfg.reference = {1.0};
  cfg.arm_threshold = -1.0;
  CHECK_THROWS_AS(dtw_detect(t, cfg), UsageError);
  cfg = DtwConfig{};
  cfg.reference = {1.0};
  cfg.jump_factor = 0.0;
  CHECK_THROWS_AS(dtw_detect(t, cfg), UsageError);
  cfg = DtwConfig{};
  cfg.reference = {1.0};
  cfg.watch_window = 0;
  CHECK_THROWS_AS(dtw_detect(t, cfg), UsageError);
  cfg = DtwConfig{};
  cfg.reference = {1.0};
  cfg.signature_channel = 5;
  CHECK_THROWS_AS(dtw_detect(t, cfg), DataError);
  cfg = DtwConfig{};
  cfg.reference = {1.0};
  cfg.watch_channels = {7};
  CHECK_THROWS_AS(dtw_detect(t, cfg), DataError);
}

TEST_CASE("dtw detector arms on the signature and flags nearby jumps") {
  // Signature 3,7,3 sits at offset 10 in channel 0; channel 1 idles at 5
  // and jumps to 40 two samples after the match completes.
  std::vector<double> sig(30, 0.0), watch(30, 5.0);
  sig[10] = 3.0;
  sig[11] = 7.0;
  sig[12] = 3.0;
  watch[14] = 40.0;
  watch[25] = 40.0;  // far outside the watch window: must stay unflagged
  auto t = make_trace({sig, watch});
  DtwConfig cfg;
  cfg.reference = {3.0, 7.0, 3.0};
  cfg.arm_threshold = 0.0;
  cfg.jump_factor = 2.0;
  cfg.watch_window = 5;
  const auto res = dtw_detect(t, cfg);
  // Exact match arms at the last sample of the window, index 12.
  CHECK(std::count(res.armed_at.begin(), res.armed_at.end(), 12u) == 1);
  REQUIRE(res.flags.size() == 30);
  CHECK(res.flags[14] == 1);  // 40 > 2 * 5 within watch range
  CHECK(res.flags[25] == 0);
  CHECK(std::count(res.flags.begin(), res.flags.end(), 1) == 1);
}

TEST_CASE("dtw detector clamps the reference level at 1") {
  // Watch channel is zero when armed; the jump test must use level 1, not 0.
  std::vector<double> sig(12, 0.0), watch(12, 0.0);
  sig[3] = 2.0;
  watch[5] = 3.0;
  auto t = make_trace({sig, watch});
  DtwConfig cfg;
  cfg.reference = {2.0};
  cfg.arm_threshold = 0.0;
  cfg.jump_factor = 2.0;
  cfg.watch_window = 5;
  const auto res = dtw_detect(t, cfg);
  CHECK(std::count(res.armed_at.begin(), res.armed_at.end(), 3u) == 1);
  CHECK(res.flags[5] == 1);  // 3 > 2 * max(1, 0)
}

TEST_CASE("dtw detector ignores references longer than the trace") {
  auto t = make_trace({{1.0, 2.0}, {3.0, 4.0}});
  DtwConfig cfg;
  cfg.reference = {1.0, 2.0, 3.0};
  const auto res = dtw_detect(t, cfg);
  CHECK(res.armed_at.empty());
  CHECK(std::count(res.flags.begin(), res.flags.end(), 1) == 0);
}

TEST_CASE("dtw detector matches a mirrored window scan on random traces") {
  Rng rng(777);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t T = 20 + rng.below(20), L = 2 + rng.below(3);
    std::vector<double> sig(T), watch(T);
    for (auto& v : sig) v = double(rng.below(6));
    for (auto& v : watch) v = double(rng.below(30));
    auto t = make_trace({sig, watch});
    DtwConfig cfg;
    cfg.reference.resize(L);
    for (auto& v : cfg.reference) v = double(rng.below(6));
    cfg.arm_threshold = double(rng.below(4));
    cfg.jump_factor = 1.5;
    cfg.watch_window = 1 + rng.below(6);
    const auto got = dtw_detect(t, cfg);

    std::vector<std::uint8_t> flags(T, 0);
    std::vector<std::size_t> armed;
    std::vector<double> win(L);
    for (std::size_t s = 0; s + L <= T; ++s) {
      std::copy(sig.begin() + s, sig.begin() + s + L, win.begin());
      if (dtw_distance(win, cfg.reference) > cfg.arm_threshold) continue;
      const std::size_t at = s + L - 1;
      armed.push_back(at);
      const double level = std::max(1.0, watch[at]);
      for (std::size_t k = at + 1; k < std::min(T, at + 1 + cfg.watch_window);
           ++k)
        if (watch[k] > cfg.jump_factor * level) flags[k] = 1;
    }
    CHECK(got.flags == flags);
    CHECK(got.armed_at == armed);
  }
}

TEST_CASE("pdf fit matches a Welford-style oracle") {
  Rng rng(321);
  std::vector<TraceMatrix> traces;
  for (int i = 0; i < 3; ++i) {
    std::vector<double> r0(40), r1(40);
    for (auto& v : r0) v = double(rng.below(500));
    for (auto& v : r1) v = 100.0 + double(rng.below(50));
    traces.push_back(make_trace({r0, r1}));
  }
  const auto model = fit_pdf(traces);
  REQUIRE(model.mean.size() == 2);
  CHECK(model.channel_names == traces[0].channel_names);

  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    for (const auto& t : traces)
      for (std::size_t k = 0; k < t.samples(); ++k) {
        ++n;
        const double x = t.values(c, k);
        const double d = x - mean;
        mean += d / double(n);
        m2 += d * (x - mean);
      }
    CHECK(model.mean[c] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(model.variance[c] ==
          doctest::Approx(m2 / double(n - 1)).epsilon(1e-10));
  }
}

TEST_CASE("pdf fit rejects degenerate inputs") {
  CHECK_THROWS_AS(fit_pdf({}), DataError);

  auto a = make_trace({{1.0, 2.0}});
  auto b = make_trace({{1.0, 2.0}});
  b.channel_names[0] = "OTHER";
  CHECK_THROWS_AS(fit_pdf({a, b}), DataError);

  auto single = make_trace({{1.0}});
  CHECK_THROWS_AS(fit_pdf({single}), DataError);

  auto flat = make_trace({{7.0, 7.0, 7.0}, {1.0, 2.0, 3.0}});
  CHECK_THROWS_WITH_AS(fit_pdf({flat}), doctest::Contains("CH0"), DataError);
}

TEST_CASE("pdf density is the product of per-channel normal densities") {
  auto t = make_trace({{1.0, 3.0, 5.0}, {10.0, 20.0, 60.0}});
  const auto model = fit_pdf({t});
  Rng rng(606);
  for (int rep = 0; rep < 50; ++rep) {
    Vec sample{double(rng.below(8)), double(rng.below(80))};
    double want = 1.0;
    for (std::size_t c = 0; c < 2; ++c) {
      const double v = model.variance[c];
      const double d = sample[c] - model.mean[c];
      want *= std::exp(-d * d / (2.0 * v)) / std::sqrt(2.0 * M_PI * v);
    }
    CHECK(pdf_density(model, sample) ==
          doctest::Approx(want).epsilon(1e-12));
  }
  Vec wrong{1.0};
  CHECK_THROWS_AS(pdf_density(model, wrong), DataError);
}

TEST_CASE("pdf detector flags the mode and spares far-out samples") {
  auto fitsrc = make_trace({{90.0, 100.0, 110.0, 95.0, 105.0, 100.0}});
  const auto model = fit_pdf({fitsrc});
  const double sigma = std::sqrt(model.variance[0]);
  const double mode_density = pdf_density(model, Vec{model.mean[0]});

  std::vector<double> xs{model.mean[0], model.mean[0] + 10.0 * sigma};
  auto t = make_trace({xs});
  const auto hit = pdf_detect(t, model, mode_density);
  CHECK(hit.flags[0] == 1);  // density at the mean equals the threshold
  CHECK(hit.flags[1] == 0);
  const auto half = pdf_detect(t, model, mode_density / 2.0);
  CHECK(half.flags[0] == 1);
  CHECK(half.flags[1] == 0);  // 10 sigma out: vanishing density
  for (std::size_t i = 0; i < xs.size(); ++i)
    CHECK(hit.density[i] ==
          doctest::Approx(pdf_density(model, Vec{xs[i]})).epsilon(1e-12));
}

TEST_CASE("raising epsilon never adds pdf flags") {
  auto fitsrc = make_trace({{90.0, 100.0, 110.0, 95.0, 105.0, 100.0}});
  const auto model = fit_pdf({fitsrc});
  Rng rng(515151);
  std::vector<double> xs(60);
  for (auto& v : xs) v = 60.0 + double(rng.below(80));
  auto t = make_trace({xs});
  const auto lo = pdf_detect(t, model, 1e-6);
  const auto hi = pdf_detect(t, model, 1e-3);
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (hi.flags[i]) CHECK(lo.flags[i] == 1);
}

TEST_CASE("pdf detector validation") {
  auto fitsrc = make_trace({{1.0, 2.0, 3.0}});
  const auto model = fit_pdf({fitsrc});
  auto t = make_trace({{1.0, 2.0}});
  CHECK_THROWS_AS(pdf_detect(t, model, -1.0), UsageError);
  auto renamed = t;
  renamed.channel_names[0] = "X";
  CHECK_THROWS_AS(pdf_detect(renamed, model, 0.5), DataError);
}

}  // TEST_SUITE
