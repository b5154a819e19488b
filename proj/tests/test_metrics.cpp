#include <cmath>

#include "doctest.h"
#include "geomlab/builder.hpp"
#include "geomlab/metrics.hpp"
#include "geomlab/rng.hpp"

using namespace geomlab;

namespace {

// test-owned reference Pearson (naive two-pass) and t-distribution p-value by
// adaptive Simpson quadrature, independent of the library's ibeta path
double ref_pearson(const std::vector<int>& x, const std::vector<int>& y) {
  const int n = static_cast<int>(x.size());
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double num = 0, dx2 = 0, dy2 = 0;
  for (int i = 0; i < n; ++i) {
    num += (x[i] - mx) * (y[i] - my);
    dx2 += (x[i] - mx) * (x[i] - mx);
    dy2 += (y[i] - my) * (y[i] - my);
  }
  return num / std::sqrt(dx2 * dy2);
}

double t_density(double t, double nu) {
  const double c = std::exp(std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2)) /
                   std::sqrt(nu * 3.14159265358979323846);
  return c * std::pow(1.0 + t * t / nu, -(nu + 1) / 2);
}

double simpson(double a, double b, double nu, int depth, double fa, double fm, double fb,
               double whole) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = t_density(lm, nu), frm = t_density(rm, nu);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 1e-13) return left + right;
  return simpson(a, m, nu, depth - 1, fa, flm, fm, left) +
         simpson(m, b, nu, depth - 1, fm, frm, fb, right);
}

double ref_two_sided_p(double t, double nu) {
  t = std::abs(t);
  const double fa = t_density(0, nu), fb = t_density(t, nu), fm = t_density(t / 2, nu);
  const double whole = t / 6 * (fa + 4 * fm + fb);
  const double integral = simpson(0, t, nu, 40, fa, fm, fb, whole);
  return std::max(0.0, 1.0 - 2.0 * integral);
}

}  // namespace

TEST_CASE("frechet basics: identical sets, symmetry, non-negativity") {
  BuildParams p;
  p.n = 240;
  p.icr = 0.5;
  p.n_test = 0;
  p.seed = 9;
  auto samples = build_samples(p);
  std::vector<Image> A, B;
  for (size_t i = 0; i < samples.size(); ++i)
    (i % 2 == 0 ? A : B).push_back(samples[i].image);

  CHECK(frechet(A, A) <= 1e-6);
  const double ab = frechet(A, B);
  const double ba = frechet(B, A);
  CHECK(ab >= 0.0);
  CHECK(std::abs(ab - ba) <= 1e-6);
  CHECK(ab > 0.01);  // different halves genuinely differ
}

TEST_CASE("frechet matches the closed-form gaussian offset") {
  // two unit-variance gaussian clouds, means offset by delta in one dim:
  // closed-form FID = delta^2
  Rng rng(13);
  const int N = 5000, D = FeatureExtractor::kDims;
  const double delta = 4.0;
  std::vector<std::vector<double>> a, b;
  for (int i = 0; i < N; ++i) {
    std::vector<double> ra(D), rb(D);
    for (int j = 0; j < D; ++j) {
      ra[j] = rng.normal();
      rb[j] = rng.normal();
    }
    rb[0] += delta;
    a.push_back(std::move(ra));
    b.push_back(std::move(rb));
  }
  const double fid = frechet_features(a, b);
  CHECK(fid == doctest::Approx(delta * delta).epsilon(0.10));
}

TEST_CASE("frechet refuses too-few samples, naming the minimum") {
  std::vector<std::vector<double>> a(50, std::vector<double>(FeatureExtractor::kDims, 0.0));
  CHECK_THROWS_WITH_AS(frechet_features(a, a), doctest::Contains("89"), Error);
}

TEST_CASE("icr counting") {
  BuildParams p;
  p.n = 5;
  p.icr = 0.2;
  p.n_test = 0;
  p.seed = 4;
  p.kind = ConceptKind::qr;
  auto samples = build_samples(p);
  std::vector<Image> imgs;
  for (auto& s : samples) imgs.push_back(s.image);
  TemplateDetector det(ConceptKind::qr, 32);
  CHECK(icr(imgs, det) == doctest::Approx(20.0));

  SUBCASE("blank set scores zero") {
    std::vector<Image> blanks(4, Image(32, 32, 0.5f));
    CHECK(icr(blanks, det) == 0.0);
  }
  SUBCASE("empty set is an error") { CHECK_THROWS_AS(icr({}, det), Error); }
  SUBCASE("permutation invariance") {
    std::vector<Image> shuffled = {imgs[3], imgs[0], imgs[4], imgs[2], imgs[1]};
    CHECK(icr(shuffled, det) == icr(imgs, det));
  }
}

TEST_CASE("fr_score fixtures") {
  CHECK(fr_score(9.05, 11.13) == doctest::Approx(1.007265).epsilon(1e-9));
  CHECK(fr_score(9.05, 11.13) == 9.05 * 11.13 / 100.0);
  CHECK(fr_score(123.0, 0.0) == 0.0);
  // ablation tables report the raw product: same numbers, x100 convention
  CHECK(fr_score(6.99, 5.02) * 100.0 == doctest::Approx(35.0898).epsilon(1e-9));
  CHECK_THROWS_AS(fr_score(-1.0, 5.0), Error);

  MetricsRecord rec;
  rec.fid = 6.99;
  rec.icr = 5.02;
  CHECK(rec.fr() == doctest::Approx(35.0898));
  CHECK(rec.fr_over_100() == doctest::Approx(0.350898));
}

TEST_CASE("pearson_study extremes and errors") {
  std::vector<int> a = {1, 0, 1, 1, 0, 0, 1, 0};
  CHECK(pearson_study(a, a).r == doctest::Approx(1.0));
  std::vector<int> na;
  for (int v : a) na.push_back(1 - v);
  CHECK(pearson_study(a, na).r == doctest::Approx(-1.0));
  CHECK(pearson_study(a, a).p == doctest::Approx(0.0).epsilon(1e-12));

  std::vector<int> ones(8, 1);
  CHECK_THROWS_AS(pearson_study(a, ones), Error);
  CHECK_THROWS_AS(pearson_study(a, {1, 0}), Error);
}

TEST_CASE("pearson_study matches the reference implementation to 1e-10") {
  Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 30 + static_cast<int>(rng.uniform_int(0, 200));
    std::vector<int> x, y;
    bool ok = false;
    while (!ok) {
      x.clear();
      y.clear();
      for (int i = 0; i < n; ++i) {
        x.push_back(rng.uniform() < 0.4 ? 1 : 0);
        y.push_back(rng.uniform() < 0.6 ? 1 : 0);
      }
      int sx = 0, sy = 0;
      for (int i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
      }
      ok = sx > 0 && sx < n && sy > 0 && sy < n;
    }
    auto mine = pearson_study(x, y);
    const double r_ref = ref_pearson(x, y);
    CHECK(std::abs(mine.r - r_ref) < 1e-10);
    const double t = r_ref * std::sqrt((n - 2) / std::max(1e-15, 1.0 - r_ref * r_ref));
    const double p_ref = ref_two_sided_p(t, n - 2);
    CHECK(std::abs(mine.p - p_ref) < 1e-8);
  }
}

TEST_CASE("independent coin flips are insignificant in most seeded trials") {
  int pass = 0;
  const int trials = 40;
  for (int s = 0; s < trials; ++s) {
    Rng rng(1000 + static_cast<uint64_t>(s));
    std::vector<int> x, y;
    for (int i = 0; i < 1000; ++i) {
      x.push_back(rng.uniform() < 0.5 ? 1 : 0);
      y.push_back(rng.uniform() < 0.5 ? 1 : 0);
    }
    auto res = pearson_study(x, y);
    if (std::abs(res.r) < 0.1 && res.p > 0.05) ++pass;
  }
  CHECK(pass >= trials * 9 / 10);
}

TEST_CASE("bootstrap expected-max statistic") {
  SUBCASE("all positive flags give (1, 0) exactly") {
    std::vector<int> flags(200, 1);
    auto res = bootstrap_expected_max(flags, 25, 2000, 3);
    CHECK(res.mean == 1.0);
    CHECK(res.stddev == 0.0);
  }
  SUBCASE("all negative flags give (0, 0) exactly") {
    std::vector<int> flags(200, 0);
    auto res = bootstrap_expected_max(flags, 25, 2000, 3);
    CHECK(res.mean == 0.0);
    CHECK(res.stddev == 0.0);
  }
  SUBCASE("rate q = 0.09 matches the closed form 1-(1-q)^25 within 0.02") {
    std::vector<int> flags(10000, 0);
    for (int i = 0; i < 900; ++i) flags[static_cast<size_t>(i) * 11] = 1;  // exactly 9%
    auto res = bootstrap_expected_max(flags, 25, 20000, 7);
    const double closed = 1.0 - std::pow(1.0 - 0.09, 25);
    CHECK(res.mean == doctest::Approx(closed).epsilon(0.0221));  // 0.02 absolute on ~0.905
    CHECK(res.stddev < 0.05);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(bootstrap_expected_max({}, 25, 2000, 1), Error);
    CHECK_THROWS_AS(bootstrap_expected_max({1, 0}, 25, 500, 1), Error);
  }
}
