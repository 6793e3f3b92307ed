#pragma once

#include <optional>

#include "mat/records.hpp"

// Generative evaluation metrics over pluggable image embeddings: Frechet
// distance between Gaussian fits (FID) and the paired / unpaired linear
// discriminative scores (P-IDS / U-IDS).

namespace mat {

struct FeatureSet {
  int64_t n = 0;
  int64_t d = 0;
  std::vector<double> data;  // [n, d] row-major
  std::string provenance;

  double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * d + j)]; }

  void validate() const {
    check(n >= 1 && d >= 1 && static_cast<int64_t>(data.size()) == n * d,
          "FeatureSet: inconsistent extents");
    for (double v : data)
      if (!std::isfinite(v)) throw NumericalError("FeatureSet: non-finite embedding entry");
  }

  std::vector<Record> to_records() const {
    std::vector<Record> recs;
    recs.push_back(Record::from_f64("features", Shape{n, d}, std::span<const double>(data)));
    recs.push_back(Record::from_bytes("provenance", provenance));
    return recs;
  }

  static FeatureSet from_records(const std::vector<Record>& recs) {
    const Record& f = find_record(recs, "features");
    check(f.shape.size() == 2, "FeatureSet: features record must be 2-D");
    FeatureSet out;
    out.n = f.shape[0];
    out.d = f.shape[1];
    out.data = f.as_f64();
    out.provenance = find_record(recs, "provenance").as_string();
    out.validate();
    return out;
  }
};

namespace linalg {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major d x d).
// Plenty for the small embedding dimensions used here.
inline void jacobi_eigh(std::vector<double> a, int64_t d, std::vector<double>& eigenvalues,
                        std::vector<double>* eigenvectors) {
  std::vector<double> v;
  if (eigenvectors) {
    v.assign(static_cast<size_t>(d * d), 0.0);
    for (int64_t i = 0; i < d; ++i) v[static_cast<size_t>(i * d + i)] = 1.0;
  }
  auto off_norm = [&]() {
    double s = 0;
    for (int64_t i = 0; i < d; ++i)
      for (int64_t j = i + 1; j < d; ++j) s += a[static_cast<size_t>(i * d + j)] * a[static_cast<size_t>(i * d + j)];
    return std::sqrt(2 * s);
  };
  double scale0 = 0;
  for (double x : a) scale0 = std::max(scale0, std::abs(x));
  const double tol = std::max(scale0, 1.0) * 1e-14;
  for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
    for (int64_t p = 0; p < d; ++p) {
      for (int64_t q = p + 1; q < d; ++q) {
        const double apq = a[static_cast<size_t>(p * d + q)];
        if (std::abs(apq) <= tol * 1e-2) continue;
        const double app = a[static_cast<size_t>(p * d + p)];
        const double aqq = a[static_cast<size_t>(q * d + q)];
        const double theta = (aqq - app) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int64_t k = 0; k < d; ++k) {
          const double akp = a[static_cast<size_t>(k * d + p)];
          const double akq = a[static_cast<size_t>(k * d + q)];
          a[static_cast<size_t>(k * d + p)] = c * akp - s * akq;
          a[static_cast<size_t>(k * d + q)] = s * akp + c * akq;
        }
        for (int64_t k = 0; k < d; ++k) {
          const double apk = a[static_cast<size_t>(p * d + k)];
          const double aqk = a[static_cast<size_t>(q * d + k)];
          a[static_cast<size_t>(p * d + k)] = c * apk - s * aqk;
          a[static_cast<size_t>(q * d + k)] = s * apk + c * aqk;
        }
        if (eigenvectors)
          for (int64_t k = 0; k < d; ++k) {
            const double vkp = v[static_cast<size_t>(k * d + p)];
            const double vkq = v[static_cast<size_t>(k * d + q)];
            v[static_cast<size_t>(k * d + p)] = c * vkp - s * vkq;
            v[static_cast<size_t>(k * d + q)] = s * vkp + c * vkq;
          }
      }
    }
  }
  eigenvalues.resize(static_cast<size_t>(d));
  for (int64_t i = 0; i < d; ++i) eigenvalues[static_cast<size_t>(i)] = a[static_cast<size_t>(i * d + i)];
  if (eigenvectors) *eigenvectors = std::move(v);
}

// eigenvalue clamp shared by the FID square roots: tiny negatives (numerical
// noise) go to zero, anything beyond tolerance is a hard error
inline void clamp_psd_eigenvalues(std::vector<double>& vals, const char* what) {
  double vmax = 0;
  for (double v : vals) vmax = std::max(vmax, v);
  const double floor = -1e-6 * std::max(vmax, 1e-30);
  for (double& v : vals) {
    if (v < floor)
      throw NumericalError(std::string(what) + ": eigenvalue " + std::to_string(v) +
                           " below PSD tolerance (max " + std::to_string(vmax) + ")");
    if (v < 0) v = 0;
  }
}

}  // namespace linalg

namespace metricsdetail {

inline std::vector<double> column_means(const FeatureSet& f) {
  std::vector<double> mu(static_cast<size_t>(f.d), 0.0);
  for (int64_t i = 0; i < f.n; ++i)
    for (int64_t j = 0; j < f.d; ++j) mu[static_cast<size_t>(j)] += f.at(i, j);
  for (double& m : mu) m /= static_cast<double>(f.n);
  return mu;
}

// unbiased covariance (n - 1 normalization)
inline std::vector<double> covariance(const FeatureSet& f, const std::vector<double>& mu) {
  std::vector<double> cov(static_cast<size_t>(f.d * f.d), 0.0);
  for (int64_t i = 0; i < f.n; ++i)
    for (int64_t a = 0; a < f.d; ++a) {
      const double da = f.at(i, a) - mu[static_cast<size_t>(a)];
      for (int64_t b = a; b < f.d; ++b)
        cov[static_cast<size_t>(a * f.d + b)] += da * (f.at(i, b) - mu[static_cast<size_t>(b)]);
    }
  for (int64_t a = 0; a < f.d; ++a)
    for (int64_t b = a; b < f.d; ++b) {
      const double v = cov[static_cast<size_t>(a * f.d + b)] / static_cast<double>(f.n - 1);
      cov[static_cast<size_t>(a * f.d + b)] = v;
      cov[static_cast<size_t>(b * f.d + a)] = v;
    }
  return cov;
}

}  // namespace metricsdetail

// ||mu_r - mu_f||^2 + Tr(S_r + S_f - 2 (S_r S_f)^{1/2}), the trace term via
// eigendecomposition of S_r^{1/2} S_f S_r^{1/2} (same spectrum as S_r S_f).
inline double fid(const FeatureSet& real, const FeatureSet& fake) {
  real.validate();
  fake.validate();
  check(real.d == fake.d, "fid: embedding dims differ: " + std::to_string(real.d) + " vs " +
                              std::to_string(fake.d));
  check(real.n >= real.d + 1 && fake.n >= fake.d + 1,
        "fid: need at least d+1 samples per set for covariance estimates");
  const int64_t d = real.d;
  auto mu_r = metricsdetail::column_means(real);
  auto mu_f = metricsdetail::column_means(fake);
  auto cov_r = metricsdetail::covariance(real, mu_r);
  auto cov_f = metricsdetail::covariance(fake, mu_f);

  double mean_term = 0;
  for (int64_t j = 0; j < d; ++j) {
    const double dm = mu_r[static_cast<size_t>(j)] - mu_f[static_cast<size_t>(j)];
    mean_term += dm * dm;
  }
  double tr_r = 0, tr_f = 0;
  for (int64_t j = 0; j < d; ++j) {
    tr_r += cov_r[static_cast<size_t>(j * d + j)];
    tr_f += cov_f[static_cast<size_t>(j * d + j)];
  }

  // S = cov_r^{1/2}
  std::vector<double> vals, vecs;
  linalg::jacobi_eigh(cov_r, d, vals, &vecs);
  linalg::clamp_psd_eigenvalues(vals, "fid: real covariance");
  std::vector<double> sqrt_r(static_cast<size_t>(d * d), 0.0);
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) {
      double acc = 0;
      for (int64_t k = 0; k < d; ++k)
        acc += vecs[static_cast<size_t>(i * d + k)] * std::sqrt(vals[static_cast<size_t>(k)]) *
               vecs[static_cast<size_t>(j * d + k)];
      sqrt_r[static_cast<size_t>(i * d + j)] = acc;
    }
  // B = S cov_f S, symmetrized
  auto matmul_dd = [d](const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> c(static_cast<size_t>(d * d), 0.0);
    for (int64_t i = 0; i < d; ++i)
      for (int64_t k = 0; k < d; ++k) {
        const double s = a[static_cast<size_t>(i * d + k)];
        for (int64_t j = 0; j < d; ++j) c[static_cast<size_t>(i * d + j)] += s * b[static_cast<size_t>(k * d + j)];
      }
    return c;
  };
  std::vector<double> b = matmul_dd(matmul_dd(sqrt_r, cov_f), sqrt_r);
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = i + 1; j < d; ++j) {
      const double s = 0.5 * (b[static_cast<size_t>(i * d + j)] + b[static_cast<size_t>(j * d + i)]);
      b[static_cast<size_t>(i * d + j)] = s;
      b[static_cast<size_t>(j * d + i)] = s;
    }
  std::vector<double> bvals;
  linalg::jacobi_eigh(b, d, bvals, nullptr);
  linalg::clamp_psd_eigenvalues(bvals, "fid: cross term");
  double tr_sqrt = 0;
  for (double v : bvals) tr_sqrt += std::sqrt(v);

  return mean_term + tr_r + tr_f - 2.0 * tr_sqrt;
}

// Deterministic linear classifier protocol behind P-IDS / U-IDS: features are
// centered by the pooled mean and scaled by one global deviation scalar
// (rotation-equivariant), then a hinge-loss SVM is fit by full-batch
// subgradient descent with a fixed iteration budget.
struct IdsConfig {
  double reg = 1e-3;  // margin/regularization tradeoff
  int iterations = 500;
  double lr0 = 1.0;
};

struct IdsResult {
  std::optional<double> p_ids;  // present only in paired mode
  double u_ids = 0.0;
};

inline IdsResult pids_uids(const FeatureSet& real, const FeatureSet& fake, bool paired,
                           const IdsConfig& cfg = IdsConfig{}) {
  real.validate();
  fake.validate();
  check(real.d == fake.d, "pids_uids: embedding dims differ");
  if (paired)
    check(real.n == fake.n, "pids_uids: paired mode requires equal sample counts, got " +
                                std::to_string(real.n) + " vs " + std::to_string(fake.n));
  const int64_t d = real.d;
  const int64_t n_total = real.n + fake.n;

  // pooled standardization: mean vector + single scale
  std::vector<double> mu(static_cast<size_t>(d), 0.0);
  for (int64_t i = 0; i < real.n; ++i)
    for (int64_t j = 0; j < d; ++j) mu[static_cast<size_t>(j)] += real.at(i, j);
  for (int64_t i = 0; i < fake.n; ++i)
    for (int64_t j = 0; j < d; ++j) mu[static_cast<size_t>(j)] += fake.at(i, j);
  for (double& m : mu) m /= static_cast<double>(n_total);
  double total_var = 0;
  for (int64_t i = 0; i < real.n; ++i)
    for (int64_t j = 0; j < d; ++j) {
      const double dv = real.at(i, j) - mu[static_cast<size_t>(j)];
      total_var += dv * dv;
    }
  for (int64_t i = 0; i < fake.n; ++i)
    for (int64_t j = 0; j < d; ++j) {
      const double dv = fake.at(i, j) - mu[static_cast<size_t>(j)];
      total_var += dv * dv;
    }
  total_var /= static_cast<double>(n_total * d);
  if (total_var <= 0)
    throw NumericalError("pids_uids: degenerate features (zero variance)");
  const double inv_scale = 1.0 / std::sqrt(total_var);

  auto standardized = [&](const FeatureSet& f, int64_t i, int64_t j) {
    return (f.at(i, j) - mu[static_cast<size_t>(j)]) * inv_scale;
  };

  // full-batch subgradient descent on mean hinge + 0.5 reg ||w||^2
  std::vector<double> w(static_cast<size_t>(d), 0.0);
  double bias = 0.0;
  std::vector<double> grad_w(static_cast<size_t>(d));
  for (int t = 0; t < cfg.iterations; ++t) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    double grad_b = 0.0;
    auto accumulate = [&](const FeatureSet& f, double label) {
      for (int64_t i = 0; i < f.n; ++i) {
        double score = bias;
        for (int64_t j = 0; j < d; ++j) score += w[static_cast<size_t>(j)] * standardized(f, i, j);
        if (label * score < 1.0) {
          for (int64_t j = 0; j < d; ++j) grad_w[static_cast<size_t>(j)] -= label * standardized(f, i, j);
          grad_b -= label;
        }
      }
    };
    accumulate(real, +1.0);
    accumulate(fake, -1.0);
    const double inv_n = 1.0 / static_cast<double>(n_total);
    const double lr = cfg.lr0 / (1.0 + cfg.lr0 * cfg.reg * static_cast<double>(t));
    for (int64_t j = 0; j < d; ++j)
      w[static_cast<size_t>(j)] -= lr * (grad_w[static_cast<size_t>(j)] * inv_n + cfg.reg * w[static_cast<size_t>(j)]);
    bias -= lr * grad_b * inv_n;
  }

  auto score_of = [&](const FeatureSet& f, int64_t i) {
    double s = bias;
    for (int64_t j = 0; j < d; ++j) s += w[static_cast<size_t>(j)] * standardized(f, i, j);
    return s;
  };

  IdsResult out;
  int64_t real_wrong = 0, fake_wrong = 0;
  for (int64_t i = 0; i < real.n; ++i) real_wrong += score_of(real, i) < 0 ? 1 : 0;
  for (int64_t i = 0; i < fake.n; ++i) fake_wrong += score_of(fake, i) > 0 ? 1 : 0;
  out.u_ids = 0.5 * (static_cast<double>(real_wrong) / static_cast<double>(real.n) +
                     static_cast<double>(fake_wrong) / static_cast<double>(fake.n));
  if (paired) {
    double p = 0;
    for (int64_t i = 0; i < real.n; ++i) {
      const double sr = score_of(real, i), sf = score_of(fake, i);
      if (sf > sr)
        p += 1.0;
      else if (sf == sr)
        p += 0.5;  // ties split
    }
    out.p_ids = p / static_cast<double>(real.n);
  }
  return out;
}

}  // namespace mat
