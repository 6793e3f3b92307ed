#include <gtest/gtest.h>

#include "mat/metrics.hpp"

using namespace mat;

namespace {

FeatureSet gaussian_set(int64_t n, int64_t d, const std::vector<double>& mu,
                        const std::vector<double>& diag_sd, uint64_t seed) {
  Rng rng(seed);
  FeatureSet f;
  f.n = n;
  f.d = d;
  f.provenance = "test";
  f.data.resize(static_cast<size_t>(n * d));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j)
      f.data[static_cast<size_t>(i * d + j)] =
          mu[static_cast<size_t>(j)] + diag_sd[static_cast<size_t>(j)] * rng.normal();
  return f;
}

FeatureSet rotate(const FeatureSet& f, const std::vector<double>& q) {
  FeatureSet out = f;
  for (int64_t i = 0; i < f.n; ++i)
    for (int64_t j = 0; j < f.d; ++j) {
      double acc = 0;
      for (int64_t k = 0; k < f.d; ++k)
        acc += f.at(i, k) * q[static_cast<size_t>(k * f.d + j)];
      out.data[static_cast<size_t>(i * f.d + j)] = acc;
    }
  return out;
}

// random orthogonal matrix via Gram-Schmidt on a Gaussian draw
std::vector<double> random_orthogonal(int64_t d, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> q(static_cast<size_t>(d * d));
  for (auto& v : q) v = rng.normal();
  for (int64_t c = 0; c < d; ++c) {
    for (int64_t p = 0; p < c; ++p) {
      double dot = 0;
      for (int64_t r = 0; r < d; ++r)
        dot += q[static_cast<size_t>(r * d + c)] * q[static_cast<size_t>(r * d + p)];
      for (int64_t r = 0; r < d; ++r)
        q[static_cast<size_t>(r * d + c)] -= dot * q[static_cast<size_t>(r * d + p)];
    }
    double norm = 0;
    for (int64_t r = 0; r < d; ++r)
      norm += q[static_cast<size_t>(r * d + c)] * q[static_cast<size_t>(r * d + c)];
    norm = std::sqrt(norm);
    for (int64_t r = 0; r < d; ++r) q[static_cast<size_t>(r * d + c)] /= norm;
  }
  return q;
}

}  // namespace

TEST(Jacobi, RecoversKnownSpectrum) {
  // A = Q diag(5,2,1) Q^T
  auto q = random_orthogonal(3, 1);
  const double lam[3] = {5, 2, 1};
  std::vector<double> a(9, 0.0);
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 3; ++j)
      for (int64_t k = 0; k < 3; ++k)
        a[static_cast<size_t>(i * 3 + j)] +=
            q[static_cast<size_t>(i * 3 + k)] * lam[k] * q[static_cast<size_t>(j * 3 + k)];
  std::vector<double> vals, vecs;
  linalg::jacobi_eigh(a, 3, vals, &vecs);
  std::sort(vals.begin(), vals.end());
  EXPECT_NEAR(vals[0], 1, 1e-10);
  EXPECT_NEAR(vals[1], 2, 1e-10);
  EXPECT_NEAR(vals[2], 5, 1e-10);
}

TEST(Fid, IdenticalSetsGiveZero) {
  FeatureSet f = gaussian_set(200, 8, std::vector<double>(8, 0.3),
                              std::vector<double>(8, 1.0), 2);
  EXPECT_NEAR(fid(f, f), 0.0, 1e-6);
}

TEST(Fid, ShiftedGaussianMatchesMeanDistance) {
  // N(0, I) vs N(mu, I): analytic FID = ||mu||^2
  const int64_t d = 8, n = 100000;
  std::vector<double> mu(8, 0.0), sd(8, 1.0);
  FeatureSet real = gaussian_set(n, d, mu, sd, 3);
  std::vector<double> mu2(8, 0.7);
  FeatureSet fake = gaussian_set(n, d, mu2, sd, 4);
  const double analytic = 8 * 0.7 * 0.7;
  const double est = fid(real, fake);
  EXPECT_NEAR(est, analytic, 0.02 * analytic);
}

TEST(Fid, DiagonalCovarianceAnalyticOracle) {
  // FID = ||mu||^2 + sum_i (sqrt(a_i) - sqrt(b_i))^2 for diagonal covariances
  const int64_t d = 8, n = 100000;
  Rng rng(5);
  std::vector<double> mu_r(8), mu_f(8), sd_r(8), sd_f(8);
  double analytic = 0;
  for (int j = 0; j < 8; ++j) {
    mu_r[static_cast<size_t>(j)] = rng.uniform(-0.5, 0.5);
    mu_f[static_cast<size_t>(j)] = rng.uniform(-0.5, 0.5);
    sd_r[static_cast<size_t>(j)] = rng.uniform(0.6, 1.6);
    sd_f[static_cast<size_t>(j)] = rng.uniform(0.6, 1.6);
    const double dm = mu_r[static_cast<size_t>(j)] - mu_f[static_cast<size_t>(j)];
    const double ds = sd_r[static_cast<size_t>(j)] - sd_f[static_cast<size_t>(j)];
    analytic += dm * dm + ds * ds;  // (sqrt a - sqrt b)^2 with a = sd^2
  }
  FeatureSet real = gaussian_set(n, d, mu_r, sd_r, 6);
  FeatureSet fake = gaussian_set(n, d, mu_f, sd_f, 7);
  const double est = fid(real, fake);
  EXPECT_NEAR(est, analytic, 0.03 * analytic);
}

TEST(Fid, SymmetryAndTranslationIdentity) {
  FeatureSet a = gaussian_set(500, 6, {0, 0, 0, 0, 0, 0}, {1, 1.2, 0.8, 1, 1, 1.5}, 8);
  FeatureSet b = gaussian_set(400, 6, {0.3, 0, -0.2, 0, 0.1, 0}, {1, 1, 1, 0.9, 1.1, 1}, 9);
  EXPECT_NEAR(fid(a, b), fid(b, a), 1e-6);

  // translating fakes by v changes FID by ||dmu - v||^2 - ||dmu||^2 exactly
  std::vector<double> v = {0.5, -0.3, 0.2, 0.0, 0.1, -0.4};
  FeatureSet shifted = b;
  for (int64_t i = 0; i < b.n; ++i)
    for (int64_t j = 0; j < 6; ++j)
      shifted.data[static_cast<size_t>(i * 6 + j)] += v[static_cast<size_t>(j)];
  auto mu_a = std::vector<double>(6, 0.0), mu_b = std::vector<double>(6, 0.0);
  for (int64_t i = 0; i < a.n; ++i)
    for (int64_t j = 0; j < 6; ++j) mu_a[static_cast<size_t>(j)] += a.at(i, j) / static_cast<double>(a.n);
  for (int64_t i = 0; i < b.n; ++i)
    for (int64_t j = 0; j < 6; ++j) mu_b[static_cast<size_t>(j)] += b.at(i, j) / static_cast<double>(b.n);
  double before = 0, after = 0;
  for (int j = 0; j < 6; ++j) {
    const double dm = mu_a[static_cast<size_t>(j)] - mu_b[static_cast<size_t>(j)];
    before += dm * dm;
    const double dm2 = dm - v[static_cast<size_t>(j)];
    after += dm2 * dm2;
  }
  EXPECT_NEAR(fid(a, shifted) - fid(a, b), after - before, 1e-8);
}

TEST(Fid, RotationInvariance) {
  FeatureSet a = gaussian_set(2000, 6, {0.2, 0, 0, -0.1, 0, 0}, {1, 1.3, 0.7, 1, 1, 1}, 10);
  FeatureSet b = gaussian_set(2000, 6, {0, 0.4, 0, 0, 0.2, 0}, {0.9, 1, 1.2, 1, 1, 1.1}, 11);
  auto q = random_orthogonal(6, 12);
  EXPECT_NEAR(fid(rotate(a, q), rotate(b, q)), fid(a, b), 1e-6);
}

TEST(Fid, PreconditionErrors) {
  FeatureSet small = gaussian_set(5, 8, std::vector<double>(8, 0.0),
                                  std::vector<double>(8, 1.0), 13);
  FeatureSet ok = gaussian_set(100, 8, std::vector<double>(8, 0.0),
                               std::vector<double>(8, 1.0), 14);
  EXPECT_THROW(fid(small, ok), ContractError);  // n < d+1
  FeatureSet wrong_d = gaussian_set(100, 4, std::vector<double>(4, 0.0),
                                    std::vector<double>(4, 1.0), 15);
  EXPECT_THROW(fid(ok, wrong_d), ContractError);
  FeatureSet bad = ok;
  bad.data[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(fid(bad, ok), NumericalError);
}

TEST(Ids, PerfectlySeparableGivesZeroes) {
  FeatureSet real = gaussian_set(500, 4, {5, 5, 5, 5}, {0.3, 0.3, 0.3, 0.3}, 16);
  FeatureSet fake = gaussian_set(500, 4, {-5, -5, -5, -5}, {0.3, 0.3, 0.3, 0.3}, 17);
  IdsResult r = pids_uids(real, fake, /*paired=*/true);
  EXPECT_EQ(r.u_ids, 0.0);
  ASSERT_TRUE(r.p_ids.has_value());
  EXPECT_EQ(*r.p_ids, 0.0);
}

TEST(Ids, IdenticalPairedSetsScoreHalfByTieRule) {
  FeatureSet real = gaussian_set(300, 4, {0, 0, 0, 0}, {1, 1, 1, 1}, 18);
  FeatureSet fake = real;
  IdsResult r = pids_uids(real, fake, /*paired=*/true);
  ASSERT_TRUE(r.p_ids.has_value());
  EXPECT_DOUBLE_EQ(*r.p_ids, 0.5);
}

TEST(Ids, IdenticalDistributionsLandNearChance) {
  const int64_t n = 10000;
  FeatureSet real = gaussian_set(n, 8, std::vector<double>(8, 0.0),
                                 std::vector<double>(8, 1.0), 19);
  FeatureSet fake = gaussian_set(n, 8, std::vector<double>(8, 0.0),
                                 std::vector<double>(8, 1.0), 20);
  IdsResult r = pids_uids(real, fake, /*paired=*/true);
  EXPECT_GE(r.u_ids, 0.45);
  EXPECT_LE(r.u_ids, 0.5);
  ASSERT_TRUE(r.p_ids.has_value());
  EXPECT_GE(*r.p_ids, 0.45);
  EXPECT_LE(*r.p_ids, 0.55);
}

TEST(Ids, ScoresAlwaysInUnitInterval) {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> mu_r(4), mu_f(4), sd(4, 1.0);
    for (auto& m : mu_r) m = rng.uniform(-1, 1);
    for (auto& m : mu_f) m = rng.uniform(-1, 1);
    FeatureSet real = gaussian_set(200, 4, mu_r, sd, 100 + static_cast<uint64_t>(trial));
    FeatureSet fake = gaussian_set(200, 4, mu_f, sd, 200 + static_cast<uint64_t>(trial));
    IdsResult r = pids_uids(real, fake, true);
    EXPECT_GE(r.u_ids, 0.0);
    EXPECT_LE(r.u_ids, 1.0);
    EXPECT_GE(*r.p_ids, 0.0);
    EXPECT_LE(*r.p_ids, 1.0);
  }
}

TEST(Ids, RotationInvariantWithinTolerance) {
  FeatureSet real = gaussian_set(2000, 6, {0.5, 0, 0, 0, 0, 0}, {1, 1, 1, 1, 1, 1}, 22);
  FeatureSet fake = gaussian_set(2000, 6, {-0.5, 0, 0, 0, 0, 0}, {1, 1, 1, 1, 1, 1}, 23);
  IdsResult base = pids_uids(real, fake, true);
  auto q = random_orthogonal(6, 24);
  IdsResult rot = pids_uids(rotate(real, q), rotate(fake, q), true);
  EXPECT_NEAR(rot.u_ids, base.u_ids, 0.01);
  EXPECT_NEAR(*rot.p_ids, *base.p_ids, 0.01);
}

TEST(Ids, DegenerateFeaturesRejected) {
  FeatureSet real, fake;
  real.n = fake.n = 50;
  real.d = fake.d = 3;
  real.data.assign(150, 1.0);
  fake.data.assign(150, 1.0);
  EXPECT_THROW(pids_uids(real, fake, true), NumericalError);
  FeatureSet uneven = gaussian_set(40, 3, {0, 0, 0}, {1, 1, 1}, 25);
  FeatureSet other = gaussian_set(30, 3, {0, 0, 0}, {1, 1, 1}, 26);
  EXPECT_THROW(pids_uids(uneven, other, /*paired=*/true), ContractError);
  EXPECT_NO_THROW(pids_uids(uneven, other, /*paired=*/false));
}

TEST(FeatureSetIo, RoundTripsThroughRecordFormat) {
  FeatureSet f = gaussian_set(20, 5, {0, 1, 2, 3, 4}, {1, 1, 1, 1, 1}, 27);
  f.provenance = "randconv-123|stripes";
  const std::string path = std::string(::testing::TempDir()) + "features.matc";
  write_records(path, f.to_records());
  FeatureSet g = FeatureSet::from_records(read_records(path));
  EXPECT_EQ(g.n, f.n);
  EXPECT_EQ(g.d, f.d);
  EXPECT_EQ(g.provenance, f.provenance);
  EXPECT_EQ(g.data, f.data);
  std::remove(path.c_str());
}
