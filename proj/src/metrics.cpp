#include "geomlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "geomlab/rng.hpp"

namespace geomlab {

namespace {

// frozen seed for the projection matrix; changing it would invalidate every
// stored FD number
constexpr uint64_t kFeatureSeed = 0x6d65747269637331ULL;

const std::vector<double>& projection_matrix(int pixels) {
  static std::map<int, std::vector<double>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> g(mu);
  auto it = cache.find(pixels);
  if (it != cache.end()) return it->second;
  Rng rng(Rng(kFeatureSeed).fork(static_cast<uint64_t>(pixels)).next_u64());
  std::vector<double> m(static_cast<size_t>(FeatureExtractor::kProjDims) * pixels);
  const double scale = 1.0 / std::sqrt(static_cast<double>(pixels));
  for (auto& v : m) v = rng.normal() * scale;
  return cache.emplace(pixels, std::move(m)).first->second;
}

}  // namespace

std::vector<double> FeatureExtractor::features(const Image& img) {
  if (img.w != img.h || img.w % 8 != 0)
    throw ConfigError("features: image side must be square and divisible by 8");
  const int pixels = img.w * img.h;
  const auto& proj = projection_matrix(pixels);
  std::vector<double> f(static_cast<size_t>(kDims), 0.0);
  for (int d = 0; d < kProjDims; ++d) {
    const double* row = &proj[static_cast<size_t>(d) * pixels];
    double acc = 0.0;
    for (int i = 0; i < pixels; ++i) acc += row[i] * img.px[static_cast<size_t>(i)];
    f[static_cast<size_t>(d)] = acc;
  }
  const int block = img.w / 8;
  for (int by = 0; by < 8; ++by)
    for (int bx = 0; bx < 8; ++bx) {
      double acc = 0.0;
      for (int y = 0; y < block; ++y)
        for (int x = 0; x < block; ++x) acc += img.at(bx * block + x, by * block + y);
      f[static_cast<size_t>(kProjDims + by * 8 + bx)] = acc / (block * block);
    }
  return f;
}

namespace {

// cyclic Jacobi eigendecomposition of a symmetric matrix; A is destroyed
void jacobi_eig(std::vector<double>& A, int n, std::vector<double>& eigvals,
                std::vector<double>* V) {
  if (V) {
    V->assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) (*V)[static_cast<size_t>(i) * n + i] = 1.0;
  }
  auto at = [&](int i, int j) -> double& { return A[static_cast<size_t>(i) * n + j]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    if (off < 1e-22) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        if (V) {
          for (int k = 0; k < n; ++k) {
            const double vkp = (*V)[static_cast<size_t>(k) * n + p];
            const double vkq = (*V)[static_cast<size_t>(k) * n + q];
            (*V)[static_cast<size_t>(k) * n + p] = c * vkp - s * vkq;
            (*V)[static_cast<size_t>(k) * n + q] = s * vkp + c * vkq;
          }
        }
      }
    }
  }
  eigvals.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) eigvals[static_cast<size_t>(i)] = at(i, i);
}

void mean_and_cov(const std::vector<std::vector<double>>& x, std::vector<double>& mu,
                  std::vector<double>& cov) {
  const int n = static_cast<int>(x.size());
  const int d = static_cast<int>(x[0].size());
  mu.assign(static_cast<size_t>(d), 0.0);
  for (const auto& row : x)
    for (int j = 0; j < d; ++j) mu[static_cast<size_t>(j)] += row[static_cast<size_t>(j)];
  for (auto& v : mu) v /= n;
  cov.assign(static_cast<size_t>(d) * d, 0.0);
  for (const auto& row : x) {
    for (int i = 0; i < d; ++i) {
      const double di = row[static_cast<size_t>(i)] - mu[static_cast<size_t>(i)];
      for (int j = i; j < d; ++j)
        cov[static_cast<size_t>(i) * d + j] += di * (row[static_cast<size_t>(j)] - mu[static_cast<size_t>(j)]);
    }
  }
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      cov[static_cast<size_t>(i) * d + j] /= (n - 1);
      cov[static_cast<size_t>(j) * d + i] = cov[static_cast<size_t>(i) * d + j];
    }
}

std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b, int n) {
  std::vector<double> c(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double av = a[static_cast<size_t>(i) * n + k];
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) c[static_cast<size_t>(i) * n + j] += av * b[static_cast<size_t>(k) * n + j];
    }
  return c;
}

}  // namespace

double frechet_features(const std::vector<std::vector<double>>& a,
                        const std::vector<std::vector<double>>& b) {
  if (a.empty() || b.empty()) throw Error("frechet: empty feature set");
  const int d = static_cast<int>(a[0].size());
  const int min_n = d + 1;
  if (static_cast<int>(a.size()) < min_n || static_cast<int>(b.size()) < min_n)
    throw Error(strformat("frechet: need at least %d samples per side, got %zu and %zu", min_n,
                          a.size(), b.size()));

  std::vector<double> mu1, mu2, c1, c2;
  mean_and_cov(a, mu1, c1);
  mean_and_cov(b, mu2, c2);
  for (int i = 0; i < d; ++i) {
    c1[static_cast<size_t>(i) * d + i] += 1e-6;
    c2[static_cast<size_t>(i) * d + i] += 1e-6;
  }

  double mean_term = 0.0, tr1 = 0.0, tr2 = 0.0;
  for (int i = 0; i < d; ++i) {
    const double dm = mu1[static_cast<size_t>(i)] - mu2[static_cast<size_t>(i)];
    mean_term += dm * dm;
    tr1 += c1[static_cast<size_t>(i) * d + i];
    tr2 += c2[static_cast<size_t>(i) * d + i];
  }

  // S1 = sqrt(C1) via eigendecomposition, eigenvalues clipped at 0
  std::vector<double> work = c1, evals, evecs;
  jacobi_eig(work, d, evals, &evecs);
  std::vector<double> s1(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) {
        const double lam = std::max(0.0, evals[static_cast<size_t>(k)]);
        acc += evecs[static_cast<size_t>(i) * d + k] * std::sqrt(lam) * evecs[static_cast<size_t>(j) * d + k];
      }
      s1[static_cast<size_t>(i) * d + j] = acc;
    }

  // M = S1 C2 S1, symmetrized
  std::vector<double> m = matmul_sq(matmul_sq(s1, c2, d), s1, d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double v = 0.5 * (m[static_cast<size_t>(i) * d + j] + m[static_cast<size_t>(j) * d + i]);
      m[static_cast<size_t>(i) * d + j] = v;
      m[static_cast<size_t>(j) * d + i] = v;
    }
  std::vector<double> mvals;
  jacobi_eig(m, d, mvals, nullptr);
  double tr_sqrt = 0.0;
  for (double v : mvals) tr_sqrt += std::sqrt(std::max(0.0, v));

  return std::max(0.0, mean_term + tr1 + tr2 - 2.0 * tr_sqrt);
}

double frechet(const std::vector<Image>& a, const std::vector<Image>& b) {
  std::vector<std::vector<double>> fa, fb;
  fa.reserve(a.size());
  fb.reserve(b.size());
  for (const auto& img : a) fa.push_back(FeatureExtractor::features(img));
  for (const auto& img : b) fb.push_back(FeatureExtractor::features(img));
  return frechet_features(fa, fb);
}

double icr(const std::vector<Image>& images, const TemplateDetector& det) {
  if (images.empty()) throw Error("icr: empty image set");
  int hits = 0;
  for (const auto& img : images)
    if (!det.detect(img).empty()) ++hits;
  return 100.0 * hits / static_cast<double>(images.size());
}

double fr_score(double fid, double icr_percent) {
  if (fid < 0.0 || icr_percent < 0.0) throw Error("fr_score: inputs must be non-negative");
  return fid * icr_percent / 100.0;
}

namespace {

double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16, kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double ibeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log(1.0 - x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

PearsonResult pearson_study(const std::vector<int>& prompt_flags,
                            const std::vector<int>& presence_flags) {
  if (prompt_flags.size() != presence_flags.size())
    throw Error("pearson_study: flag vectors differ in length");
  const int n = static_cast<int>(prompt_flags.size());
  if (n < 3) throw Error("pearson_study: need at least 3 samples");
  auto constant = [](const std::vector<int>& v) {
    for (int x : v)
      if (x != v[0]) return false;
    return true;
  };
  if (constant(prompt_flags) || constant(presence_flags))
    throw Error("pearson_study: constant vector (both classes must be present)");

  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += prompt_flags[static_cast<size_t>(i)];
    my += presence_flags[static_cast<size_t>(i)];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    const double dx = prompt_flags[static_cast<size_t>(i)] - mx;
    const double dy = presence_flags[static_cast<size_t>(i)] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  PearsonResult res;
  res.n = n;
  res.r = sxy / std::sqrt(sxx * syy);

  const double nu = n - 2;
  const double r2 = std::min(res.r * res.r, 1.0);
  if (1.0 - r2 < 1e-15) {
    res.p = 0.0;
  } else {
    const double t2 = r2 * nu / (1.0 - r2);
    res.p = ibeta(nu / 2.0, 0.5, nu / (nu + t2));
  }
  return res;
}

BootstrapResult bootstrap_expected_max(const std::vector<int>& flags, int group_size,
                                       int resamples, uint64_t seed, int batches) {
  if (flags.empty()) throw Error("bootstrap: empty flag vector");
  if (resamples < 1000) throw Error("bootstrap: need at least 1000 resamples");
  if (group_size < 1 || batches < 1) throw Error("bootstrap: bad group size or batch count");
  Rng rng(seed);
  std::vector<double> fractions;
  fractions.reserve(static_cast<size_t>(batches));
  const int per_batch = resamples / batches;
  int done = 0;
  for (int b = 0; b < batches; ++b) {
    const int count = (b == batches - 1) ? resamples - done : per_batch;
    done += count;
    if (count == 0) continue;
    int positive_groups = 0;
    for (int g = 0; g < count; ++g) {
      bool any = false;
      for (int k = 0; k < group_size; ++k)
        if (flags[static_cast<size_t>(rng.below(flags.size()))]) any = true;
      if (any) ++positive_groups;
    }
    fractions.push_back(static_cast<double>(positive_groups) / count);
  }
  BootstrapResult res;
  for (double f : fractions) res.mean += f;
  res.mean /= static_cast<double>(fractions.size());
  double var = 0.0;
  for (double f : fractions) var += (f - res.mean) * (f - res.mean);
  res.stddev = std::sqrt(var / static_cast<double>(fractions.size()));
  return res;
}

}  // namespace geomlab
