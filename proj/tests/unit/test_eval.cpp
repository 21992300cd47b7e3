#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "../support/metric_oracles.hpp"
#include "cfx/error.hpp"
#include "cfx/eval.hpp"
#include "doctest.h"

using namespace cfx;
using namespace cfx::eval;
using namespace cfx::testing::oracle;

namespace {

std::vector<EvalRecord> random_records(std::mt19937_64& gen, int n_ids, std::vector<Method> methods) {
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::uniform_int_distribution<int> cls(0, 9), tie(0, 5);
  std::vector<EvalRecord> out;
  for (int id = 0; id < n_ids; ++id) {
    const int y = cls(gen);
    const int y_cf = (y + 1 + cls(gen) % 9) % 10;
    for (Method m : methods) {
      EvalRecord r{id * 3 + 1, m, y, y_cf, u(gen), u(gen), u(gen) * 1e-2};
      if (tie(gen) == 0) r.im1 = 1.0;
      out.push_back(r);
    }
  }
  std::shuffle(out.begin(), out.end(), gen);
  return out;
}

Tensor filled(float v) { return Tensor({28, 28, 1}, v); }

}  // namespace

TEST_CASE("metrics config rejects non-positive epsilon") {
  CHECK_NOTHROW(MetricsConfig{}.validate());
  CHECK_THROWS_AS(MetricsConfig{0.0}.validate(), ConfigError);
  CHECK_THROWS_AS(MetricsConfig{-1e-8}.validate(), ConfigError);
  CHECK_THROWS_AS(MetricsConfig{NAN}.validate(), ConfigError);
}

TEST_CASE("im1 hand value on stubbed reconstructions") {
  // Numerator error 0.5 and denominator error 1.0.
  std::vector<float> x(784, 0.0f), r1(784, 0.0f), r2(784, 0.0f);
  r1[0] = std::sqrt(0.5f);
  r2[0] = 1.0f;
  CHECK(im1_from(x, r1, r2, 1e-8) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(im1_from(x, x, r2, 1e-8) == 0.0);
  CHECK(im1_from(x, r2, r2, 1e-8) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("im2 hand value on stubbed reconstructions") {
  std::vector<float> x(784, 0.0f), r1(784, 0.3f), r2(784, 0.2f);
  for (int i = 0; i < 100; ++i) x[i] = 1.0f;
  CHECK(im2_from(x, r1, r2, 1e-8) == doctest::Approx(784 * 0.01 / 100).epsilon(1e-5));
  CHECK(im2_from(x, r1, r1, 1e-8) == 0.0);
  std::vector<float> bigger = x;
  for (auto& v : bigger) v *= 2.0f;
  CHECK(im2_from(bigger, r1, r2, 1e-8) < im2_from(x, r1, r2, 1e-8));
}

TEST_CASE("metrics reject mismatched sizes") {
  std::vector<float> a(784), b(783);
  CHECK_THROWS_AS(im1_from(a, b, a, 1e-8), DimensionError);
  CHECK_THROWS_AS(im2_from(a, a, b, 1e-8), DimensionError);
}

TEST_CASE("metrics on model reconstructions") {
  const models::Autoencoder ae(4), other(5);
  const Tensor x = filled(0.3f);
  CHECK(im1(ae, ae, x) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(im2(ae, ae, x) == 0.0);
  const Tensor rx = ae.reconstruct(x.reshaped({1, 28, 28, 1}));
  const Tensor ro = other.reconstruct(x.reshaped({1, 28, 28, 1}));
  std::vector<float> xv(x.data().begin(), x.data().end()), a(rx.data().begin(), rx.data().end()),
      b(ro.data().begin(), ro.data().end());
  CHECK(close(im1(ae, other, x), static_cast<double>(oracle_im1(xv, a, b, 1e-8L))));
  CHECK(close(im2(ae, other, x), static_cast<double>(oracle_im2(xv, a, b, 1e-8L))));
  CHECK_THROWS_AS(im1(ae, other, Tensor({27, 27, 1})), DimensionError);
}

TEST_CASE("im1 and im2 match the brute-force oracle on random inputs") {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<std::size_t> len(1, 64);
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t n = len(gen);
    const auto x = random_image(gen, n), r1 = random_image(gen, n), r2 = random_image(gen, n);
    const double a = im1_from(x, r1, r2, 1e-8), b = im2_from(x, r1, r2, 1e-8);
    CHECK(close(a, static_cast<double>(oracle_im1(x, r1, r2, 1e-8L))));
    CHECK(close(b, static_cast<double>(oracle_im2(x, r1, r2, 1e-8L))));
    CHECK((std::isfinite(a) && a >= 0.0));
    CHECK((std::isfinite(b) && b >= 0.0));
  }
}

TEST_CASE("metrics stay finite and non-negative on degenerate inputs") {
  std::vector<float> zero(784, 0.0f), neg(784, -2.0f), one(784, 1.0f);
  for (const auto* x : {&zero, &neg, &one})
    for (const auto* r : {&zero, &neg, &one}) {
      const double a = im1_from(*x, *r, *x, 1e-8), b = im2_from(*x, *r, one, 1e-8);
      CHECK((std::isfinite(a) && a >= 0.0));
      CHECK((std::isfinite(b) && b >= 0.0));
    }
}

TEST_CASE("iqr hand values and errors") {
  const std::vector<double> v = {1, 2, 3, 4};
  CHECK(quantile(v, 0.25) == doctest::Approx(1.75));
  CHECK(quantile(v, 0.75) == doctest::Approx(3.25));
  CHECK(iqr(v) == doctest::Approx(1.5));
  CHECK(iqr(std::vector<double>{7, 7, 7}) == 0.0);
  CHECK(iqr(std::vector<double>{3}) == 0.0);
  CHECK_THROWS_AS(iqr(std::vector<double>{}), Error);
  CHECK_THROWS_AS(quantile(v, 1.5), ConfigError);
}

TEST_CASE("iqr matches the rank-counting oracle and is translation invariant") {
  std::mt19937_64 gen(12);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  std::uniform_real_distribution<double> shift(-100.0, 100.0);
  for (int t = 0; t < kTrials; ++t) {
    const auto v = random_values(gen, len(gen), t % 3 == 0);
    const double got = iqr(v);
    CHECK(close(got, oracle_iqr(v)));
    CHECK(got >= 0.0);
    // Integer shifts keep every value exact, so invariance is exact too.
    const double c = std::round(shift(gen));
    auto moved = v;
    for (auto& x : moved) x += c;
    if (t % 3 == 0) CHECK(iqr(moved) == got);
    else CHECK(close(iqr(moved), got));
  }
}

TEST_CASE("paired_lower_prob hand values and errors") {
  const std::vector<double> a = {1, 1}, b = {2, 2};
  CHECK(paired_lower_prob(a, a) == 0.5);
  CHECK(paired_lower_prob(a, b) == 1.0);
  CHECK(paired_lower_prob(b, a) == 0.0);
  CHECK_THROWS_AS(paired_lower_prob(a, std::vector<double>{1}), DimensionError);
  CHECK_THROWS_AS(paired_lower_prob(std::vector<double>{}, std::vector<double>{}), DimensionError);
  const std::vector<std::int64_t> ids = {3, 5}, swapped = {5, 3};
  CHECK(paired_lower_prob(ids, a, ids, b) == 1.0);
  CHECK_THROWS_AS(paired_lower_prob(ids, a, swapped, b), InvariantError);
}

TEST_CASE("paired_lower_prob matches the oracle and is exactly antisymmetric") {
  std::mt19937_64 gen(13);
  std::uniform_int_distribution<std::size_t> len(1, 200);
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t n = len(gen);
    const auto a = random_values(gen, n, t % 2 == 0), b = random_values(gen, n, t % 2 == 0);
    const double ab = paired_lower_prob(a, b), ba = paired_lower_prob(b, a);
    CHECK(close(ab, oracle_plp(a, b)));
    CHECK(ab + ba == 1.0);
    CHECK((ab >= 0.0 && ab <= 1.0));
  }
}

TEST_CASE("records csv round-trips exactly") {
  std::mt19937_64 gen(14);
  auto recs = random_records(gen, 20, {Method::CFPROTO, Method::DGCEx, Method::DADGCEx});
  recs[0].im2 = 1.0 / 3.0;
  recs[1].seconds = 1e-300;
  const std::string csv = records_csv(recs);
  CHECK(csv.rfind("instance_id,method,y,y_cf,im1,im2,seconds\n", 0) == 0);
  const auto back = parse_records_csv(csv);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].instance_id == recs[i].instance_id);
    CHECK(back[i].method == recs[i].method);
    CHECK(back[i].y == recs[i].y);
    CHECK(back[i].y_cf == recs[i].y_cf);
    CHECK(back[i].im1 == recs[i].im1);
    CHECK(back[i].im2 == recs[i].im2);
    CHECK(back[i].seconds == recs[i].seconds);
  }
  CHECK(records_csv(back) == csv);
  CHECK_THROWS_AS(parse_records_csv("id,method\n"), ParseError);
  CHECK_THROWS_AS(parse_records_csv("instance_id,method,y,y_cf,im1,im2,seconds\n1,CFPROTO,2,3,x,0,0\n"), ParseError);
  CHECK_THROWS_AS(parse_records_csv("instance_id,method,y,y_cf,im1,im2,seconds\n1,NOPE,2,3,0,0,0\n"), ParseError);
}

TEST_CASE("record validation rejects negative or non-finite metrics") {
  EvalRecord r{1, Method::DGCEx, 1, 2, 0.5, 0.5, 0.1};
  CHECK_NOTHROW(r.validate());
  r.im1 = -1e-12;
  CHECK_THROWS_AS(r.validate(), InvariantError);
  r.im1 = 0.5;
  r.im2 = INFINITY;
  CHECK_THROWS_AS(r.validate(), InvariantError);
}

TEST_CASE("protocol check catches mismatched targets and missing methods") {
  std::vector<EvalRecord> recs = {{1, Method::CFPROTO, 3, 5, 1, 1, 1}, {1, Method::DGCEx, 3, 5, 1, 1, 1}};
  CHECK_NOTHROW(check_protocol(recs));
  recs[1].y_cf = 6;
  CHECK_THROWS_AS(check_protocol(recs), InvariantError);
  CHECK_THROWS_AS(summarize(recs), InvariantError);
  recs[1].y_cf = 5;
  recs.push_back({2, Method::CFPROTO, 1, 2, 1, 1, 1});
  CHECK_THROWS_AS(check_protocol(recs), InvariantError);
  recs.pop_back();
  recs.push_back({1, Method::DGCEx, 3, 5, 1, 1, 1});
  CHECK_THROWS_AS(check_protocol(recs), InvariantError);
  CHECK_THROWS_AS(summarize(std::vector<EvalRecord>{}), InvariantError);
}

TEST_CASE("single record per method gives the value and zero spread") {
  const std::vector<EvalRecord> recs = {{4, Method::CFPROTO, 1, 2, 0.7, 0.03, 2.5}, {4, Method::DADGCEx, 1, 2, 0.4, 0.02, 0.01}};
  const Report r = summarize(recs);
  REQUIRE(r.summary.size() == 2);
  CHECK(r.summary[0].method == Method::CFPROTO);
  CHECK(r.summary[0].im1.mean == 0.7);
  CHECK(r.summary[0].im1.iqr == 0.0);
  CHECK(r.summary[1].seconds.mean == 0.01);
  CHECK(r.im1.p[0][1].value() == 0.0);
  CHECK(r.im1.p[1][0].value() == 1.0);
  CHECK_FALSE(r.im1.p[0][0].has_value());
}

TEST_CASE("summary renders IM2 scaled by ten, only the evaluated methods, and speed separately") {
  const std::vector<EvalRecord> recs = {{1, Method::DGCEx, 1, 2, 0.5, 0.123, 0.01},
                                        {1, Method::DADGCEx, 1, 2, 0.5, 0.1, 0.01}};
  const Report r = summarize(recs);
  const std::string text = summary_text(r), csv = summary_csv(r);
  CHECK(text.find("1.2300") != std::string::npos);
  CHECK(text.find("CFPROTO") == std::string::npos);
  CHECK(csv.find("\nDGCEx,1,0.5,0,1.2") != std::string::npos);
  CHECK(speed_text(r).find("0.010000") != std::string::npos);
  CHECK(speed_csv(r).rfind("method,n,seconds_mean,seconds_iqr\n", 0) == 0);
  // Changing only timings leaves the metric tables unchanged.
  auto slower = recs;
  for (auto& rec : slower) rec.seconds *= 3.0;
  CHECK(summary_text(summarize(slower)) == text);
  const std::string pw = pairwise_text(r);
  CHECK(pw.find('-') != std::string::npos);
  CHECK(pairwise_csv(r).find("im2,DGCEx,DGCEx,-\n") != std::string::npos);
}

TEST_CASE("summarize matches a double-entry brute-force pass") {
  std::mt19937_64 gen(15);
  const std::vector<Method> all = {Method::CFPROTO, Method::DGCEx, Method::DADGCEx};
  for (int t = 0; t < 50; ++t) {
    std::uniform_int_distribution<int> n_ids(1, 30);
    const auto recs = random_records(gen, n_ids(gen), all);
    const Report rep = summarize(recs);
    REQUIRE(rep.methods == all);
    for (std::size_t mi = 0; mi < all.size(); ++mi) {
      std::vector<double> i1, i2, s;
      for (const auto& r : recs)
        if (r.method == all[mi]) {
          i1.push_back(r.im1);
          i2.push_back(r.im2);
          s.push_back(r.seconds);
        }
      long double m1 = 0, m2 = 0, ms = 0;
      for (std::size_t k = 0; k < i1.size(); ++k) {
        m1 += i1[k];
        m2 += i2[k];
        ms += s[k];
      }
      const auto& got = rep.summary[mi];
      CHECK(got.n == static_cast<std::int64_t>(i1.size()));
      CHECK(close(got.im1.mean, static_cast<double>(m1 / i1.size())));
      CHECK(close(got.im2.mean, static_cast<double>(m2 / i2.size())));
      CHECK(close(got.seconds.mean, static_cast<double>(ms / s.size())));
      CHECK(close(got.im1.iqr, oracle_iqr(i1)));
      CHECK(close(got.im2.iqr, oracle_iqr(i2)));
      CHECK(close(got.seconds.iqr, oracle_iqr(s)));
      for (std::size_t mj = 0; mj < all.size(); ++mj) {
        if (mi == mj) continue;
        // Join on instance id by linear search.
        std::size_t wins = 0, ties = 0, n = 0;
        for (const auto& a : recs) {
          if (a.method != all[mi]) continue;
          for (const auto& b : recs)
            if (b.method == all[mj] && b.instance_id == a.instance_id) {
              ++n;
              wins += a.im2 < b.im2;
              ties += a.im2 == b.im2;
            }
        }
        CHECK(close(rep.im2.p[mi][mj].value(), (wins + 0.5 * ties) / n));
        CHECK(rep.im1.p[mi][mj].value() + rep.im1.p[mj][mi].value() == 1.0);
      }
    }
    for (const auto& h : rep.histograms) {
      REQUIRE(h.counts.size() == static_cast<std::size_t>(kHistogramBins));
      REQUIRE(h.edges.size() == static_cast<std::size_t>(kHistogramBins + 1));
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& r : recs) {
        const double v = h.metric == "im1" ? r.im1 : r.im2;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      CHECK(h.edges.front() == lo);
      CHECK(h.edges.back() == hi);
      std::int64_t total = 0;
      for (int b = 0; b < kHistogramBins; ++b) {
        std::int64_t expect = 0;
        for (const auto& r : recs) {
          if (r.method != h.method) continue;
          const double v = h.metric == "im1" ? r.im1 : r.im2;
          const bool last = b == kHistogramBins - 1;
          if (v >= h.edges[b] && (v < h.edges[b + 1] || (last && v <= h.edges[b + 1]))) ++expect;
        }
        CHECK(h.counts[b] == expect);
        total += h.counts[b];
      }
      CHECK(total == static_cast<std::int64_t>(recs.size() / all.size()));
    }
  }
}

TEST_CASE("report output is independent of record order") {
  std::mt19937_64 gen(16);
  auto recs = random_records(gen, 25, {Method::CFPROTO, Method::DGCEx, Method::DADGCEx});
  const Report a = summarize(recs);
  std::shuffle(recs.begin(), recs.end(), gen);
  const Report b = summarize(recs);
  CHECK(summary_text(a) == summary_text(b));
  CHECK(summary_csv(a) == summary_csv(b));
  CHECK(speed_csv(a) == speed_csv(b));
  CHECK(pairwise_csv(a) == pairwise_csv(b));
  CHECK(histogram_csv(a) == histogram_csv(b));
  const std::string h = histogram_csv(a);
  CHECK(h.rfind("method,metric,bin_left,bin_right,count\n", 0) == 0);
  CHECK(std::count(h.begin(), h.end(), '\n') == 1 + 3 * 2 * kHistogramBins);
}

TEST_CASE("histogram of identical values lands in the first bin") {
  const std::vector<EvalRecord> recs = {{1, Method::DGCEx, 1, 2, 0.5, 0.5, 0}, {2, Method::DGCEx, 1, 3, 0.5, 0.5, 0}};
  const Report r = summarize(recs);
  CHECK(r.histograms[0].counts[0] == 2);
  CHECK(r.histograms[0].edges.back() == 1.5);
}

TEST_CASE("image grid layout, scaling and PGM round trip") {
  Tensor x = filled(0.0f), cf = filled(1.0f);
  x[0] = 0.5f;
  const GrayImage g = image_grid({{x, cf}});
  CHECK(g.width == 58);
  CHECK(g.height == 28);
  CHECK(g.pixels[0] == 128);
  CHECK(g.pixels[1] == 0);
  CHECK(g.pixels[28] == 255);  // gutter
  CHECK(g.pixels[30] == 255);  // pixel value 1.0
  CHECK(g.pixels[57 + 27 * 58] == 255);

  const GrayImage two = image_grid({{x, cf, cf}, {cf, x, x}});
  CHECK(two.width == 3 * 28 + 2 * 2);
  CHECK(two.height == 2 * 28 + 2);
  CHECK(two.pixels[29 * two.width] == 255);  // horizontal gutter

  const std::string bytes = pgm_bytes(two);
  CHECK(bytes.rfind("P5\n88 58\n255\n", 0) == 0);
  const GrayImage back = parse_pgm(bytes);
  CHECK(back.width == two.width);
  CHECK(back.height == two.height);
  CHECK(back.pixels == two.pixels);
  const GrayImage commented = parse_pgm("P5\n# c\n2 1\n255\n\x01\x02");
  CHECK(commented.pixels == std::vector<std::uint8_t>{1, 2});
}

TEST_CASE("image grid and PGM reader reject malformed input") {
  CHECK_THROWS_AS(image_grid({{filled(0.0f)}, {filled(0.0f), filled(0.0f)}}), DimensionError);
  CHECK_THROWS_AS(image_grid({{filled(0.0f), Tensor({27, 29, 1})}}), DimensionError);
  CHECK_THROWS_AS(image_grid({}), DimensionError);
  CHECK_NOTHROW(image_grid({{Tensor({1, 28, 28, 1}), Tensor({28, 28})}}));
  CHECK_THROWS_AS(parse_pgm("P2\n1 1\n255\n\x01"), ParseError);
  CHECK_THROWS_AS(parse_pgm("P5\n2 2\n255\n\x01"), ParseError);
  CHECK_THROWS_AS(parse_pgm("P5\n1 1\n65535\n\x01\x01"), ParseError);
}

TEST_CASE("combined oracle sweep has no mismatches") {
  const SweepResult r = sweep(kTrials, 99);
  CHECK(r.trials == kTrials);
  CHECK(r.im1_fail == 0);
  CHECK(r.im2_fail == 0);
  CHECK(r.iqr_fail == 0);
  CHECK(r.plp_fail == 0);
  CHECK(r.antisymmetry_fail == 0);
}
