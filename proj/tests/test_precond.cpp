#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <thread>

#include "bbmm/precond.hpp"
#include "support/oracles.hpp"

using namespace bbmm;
using oracle::Mat;
using oracle::Vec;

namespace {

struct CountingRows {
  Mat k;
  mutable std::size_t calls = 0;

  RowAccessor accessor() const {
    return [this](std::size_t i) {
      ++calls;
      const Vec r = k.row(static_cast<Eigen::Index>(i));
      return Vector(r.data(), r.data() + r.size());
    };
  }
  Vector diag() const {
    const Vec d = k.diagonal();
    return Vector(d.data(), d.data() + d.size());
  }
};

PivotedCholesky factor(const Mat& k, std::size_t rank) {
  const CountingRows rows{k};
  return pivoted_cholesky(rows.accessor(), rows.diag(), rank);
}

Mat llt(const PivotedCholesky& pc) {
  if (pc.factor.empty()) return Mat::Zero(pc.size(), pc.size());
  const Mat l = oracle::to_eigen(pc.factor);
  return l * l.transpose();
}

Mat points_1d(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Mat x(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) x(i, 0) = unif(rng);
  return x;
}

PivotedCholesky zero_factor(std::size_t n) {
  PivotedCholesky pc;
  pc.residual_diag.assign(n, 0.0);
  return pc;
}

// Random PSD matrix of the given rank, as a pivoted Cholesky input.
PivotedCholesky random_factor(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
  const Mat g = oracle::gaussian(n, k, seed);
  return factor(g * g.transpose(), static_cast<std::size_t>(k));
}

}  // namespace

TEST(PivotedCholesky, DiagonalPicksLargestEntries) {
  const Mat k = Vec((Vec(3) << 3.0, 1.0, 2.0).finished()).asDiagonal();
  const PivotedCholesky pc = factor(k, 2);
  EXPECT_EQ(pc.pivots, (std::vector<std::size_t>{0, 2}));
  const Mat want = Vec((Vec(3) << 3.0, 0.0, 2.0).finished()).asDiagonal();
  EXPECT_LE(oracle::max_abs(llt(pc) - want), 1e-15);
  EXPECT_DOUBLE_EQ(pc.residual_trace, 1.0);
}

TEST(PivotedCholesky, RankOneIsExact) {
  const Vec v = (Vec(5) << 0.5, -1.0, 2.0, 0.25, 1.5).finished();
  const Mat k = v * v.transpose();
  const PivotedCholesky pc = factor(k, 1);
  EXPECT_NEAR(pc.residual_trace, 0.0, 1e-12);
  EXPECT_LE(oracle::max_abs(llt(pc) - k), 1e-12);
}

TEST(PivotedCholesky, MatchesBruteForceOnRbfKernel) {
  Mat x(6, 1);
  x << 0.0, 0.3, 0.75, 1.2, 1.5, 2.2;
  const Mat k = oracle::rbf_matrix(x, x, 0.5, 1.3);
  const PivotedCholesky pc = factor(k, 3);
  const oracle::BruteCholesky want = oracle::brute_pivoted_cholesky(k, 3);
  ASSERT_EQ(pc.rank(), 3u);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(pc.pivots[j], static_cast<std::size_t>(want.pivots[j]));
  EXPECT_LE(oracle::max_abs(oracle::to_eigen(pc.factor) - want.l), 1e-10);
}

TEST(PivotedCholesky, TiesGoToLowestIndex) {
  const PivotedCholesky pc = factor(Mat::Identity(4, 4), 3);
  EXPECT_EQ(pc.pivots, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(PivotedCholesky, ReadsOneRowPerStep) {
  const Mat x = points_1d(30, 1);
  const CountingRows rows{oracle::rbf_matrix(x, x, 0.3, 1.0)};
  const PivotedCholesky pc = pivoted_cholesky(rows.accessor(), rows.diag(), 7);
  EXPECT_EQ(pc.rank(), 7u);
  EXPECT_EQ(rows.calls, 7u);
}

TEST(PivotedCholesky, EarlyExitShrinksRank) {
  const Vec v = Vec::LinSpaced(6, 1.0, 2.0);
  const PivotedCholesky pc = factor(v * v.transpose(), 4);
  EXPECT_EQ(pc.rank(), 1u);
  EXPECT_EQ(pc.factor.cols(), 1u);
}

TEST(PivotedCholesky, InvariantsOnRandomPsdInputs) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Eigen::Index n = 8 + static_cast<Eigen::Index>(seed) * 3;
    const Mat x = points_1d(n, seed);
    const Mat k = oracle::rbf_matrix(x, x, 0.1 + 0.05 * seed, 1.0);
    const std::size_t rank = 1 + seed % 6;
    const PivotedCholesky pc = factor(k, rank);
    const std::set<std::size_t> distinct(pc.pivots.begin(), pc.pivots.end());
    EXPECT_EQ(distinct.size(), pc.pivots.size());
    const Vec resid = (k - llt(pc)).diagonal();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      EXPECT_GE(resid(i), -1e-8);
      EXPECT_NEAR(pc.residual_diag[i], resid(i), 1e-10);
      sum += pc.residual_diag[i];
    }
    EXPECT_NEAR(pc.residual_trace, sum, 1e-10);
  }
}

TEST(PivotedCholesky, OperatorOverloadRemovesShift) {
  const Mat x = points_1d(12, 2);
  const Mat k = oracle::rbf_matrix(x, x, 0.4, 2.0);
  const double sigma2 = 0.3;
  const DenseSymmetricOperator op(oracle::from_eigen(k + sigma2 * Mat::Identity(12, 12)));
  const PivotedCholesky a = pivoted_cholesky(op, sigma2, 4);
  const PivotedCholesky b = factor(k, 4);
  EXPECT_EQ(a.pivots, b.pivots);
  EXPECT_LE(oracle::max_abs(oracle::to_eigen(a.factor) - oracle::to_eigen(b.factor)), 1e-12);
}

TEST(PivotedCholesky, Errors) {
  EXPECT_THROW(factor(Mat::Identity(3, 3), 0), DomainError);
  EXPECT_THROW(factor(Mat::Identity(3, 3), 4), DomainError);
  Mat neg = Mat::Identity(3, 3);
  neg(1, 1) = -1.0;
  EXPECT_THROW(factor(neg, 2), NotPositiveDefiniteError);
  Mat indef(2, 2);
  indef << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(factor(indef, 2), NotPositiveDefiniteError);
}

TEST(PrecondSolve, ZeroFactorScalesBySigma2) {
  const Mat m = oracle::gaussian(5, 3, 3);
  const Mat got = oracle::to_eigen(precond_solve(zero_factor(5), 0.25, oracle::from_eigen(m)));
  EXPECT_LE(oracle::max_abs(got - m / 0.25), 1e-15);
}

TEST(PrecondSolve, MatchesDenseSolve) {
  const PivotedCholesky pc = random_factor(16, 3, 4);
  const double sigma2 = 0.7;
  const Mat p = llt(pc) + sigma2 * Mat::Identity(16, 16);
  const Mat m = oracle::gaussian(16, 4, 5);
  const Mat got = oracle::to_eigen(precond_solve(pc, sigma2, oracle::from_eigen(m)));
  EXPECT_LE(oracle::rel_err(got, oracle::lu_solve(p, m)), 1e-10);
}

TEST(PrecondSolve, RoundTripProperty) {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const Eigen::Index n = 4 + static_cast<Eigen::Index>(seed * 5);  // up to 59
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(seed % 4);
    const PivotedCholesky pc = random_factor(n, k, 100 + seed);
    const double sigma2 = 0.05 * static_cast<double>(seed + 1);
    const Mat p = llt(pc) + sigma2 * Mat::Identity(n, n);
    const Mat m = oracle::gaussian(n, 3, 200 + seed);
    const Mat got = oracle::to_eigen(precond_solve(pc, sigma2, oracle::from_eigen(p * m)));
    EXPECT_LE(oracle::max_abs(got - m), 1e-9) << "seed " << seed;
  }
}

TEST(PrecondSolve, RejectsNonPositiveSigma2) {
  const PivotedCholesky pc = random_factor(6, 2, 6);
  EXPECT_THROW(precond_solve(pc, 0.0, DenseMatrix(6, 1, 1.0)), DomainError);
  EXPECT_THROW(precond_logdet(pc, -1.0), DomainError);
}

TEST(PrecondLogdet, ZeroFactor) {
  EXPECT_NEAR(precond_logdet(zero_factor(7), 0.5), 7.0 * std::log(0.5), 1e-14);
}

TEST(PrecondLogdet, FullRankReproducesDenseLogdet) {
  const Mat k = oracle::random_spd(8, 7, 0.5, 5.0);
  const PivotedCholesky pc = factor(k, 8);
  const double sigma2 = 0.2;
  EXPECT_NEAR(precond_logdet(pc, sigma2), oracle::logdet_eig(k + sigma2 * Mat::Identity(8, 8)), 1e-9);
}

TEST(PrecondLogdet, MatchesDenseLogdet) {
  const PivotedCholesky pc = random_factor(16, 3, 8);
  const double sigma2 = 0.7;
  const Mat p = llt(pc) + sigma2 * Mat::Identity(16, 16);
  EXPECT_NEAR(precond_logdet(pc, sigma2), oracle::logdet_eig(p), 1e-10);
}

TEST(Preconditioner, PivotedCholeskyClassAgreesWithFreeFunctions) {
  const PivotedCholesky pc = random_factor(20, 4, 9);
  const PivotedCholeskyPreconditioner pre(pc, 0.4);
  const DenseMatrix m = oracle::from_eigen(oracle::gaussian(20, 3, 10));
  EXPECT_LE(oracle::max_abs(oracle::to_eigen(pre.solve(m)) - oracle::to_eigen(precond_solve(pc, 0.4, m))), 1e-14);
  EXPECT_NEAR(pre.logdet(), precond_logdet(pc, 0.4), 1e-12);
  EXPECT_LE(oracle::max_abs(oracle::to_eigen(pre.to_dense()) - (llt(pc) + 0.4 * Mat::Identity(20, 20))), 1e-14);
}

TEST(Preconditioner, IdentityBehaviour) {
  const IdentityPreconditioner id(5);
  const DenseMatrix m = oracle::from_eigen(oracle::gaussian(5, 2, 11));
  EXPECT_EQ(id.solve(m).values()[3], m.values()[3]);
  EXPECT_EQ(id.logdet(), 0.0);
  Rng rng(1);
  EXPECT_EQ(id.sample_probes(rng, 3).distribution, ProbeDistribution::rademacher);
}

TEST(Preconditioner, FactoryHandlesRankZeroAndClamp) {
  const Mat k = oracle::random_spd(6, 12, 1.0, 3.0);
  const DenseSymmetricOperator op(oracle::from_eigen(k + 0.1 * Mat::Identity(6, 6)));
  EXPECT_NE(dynamic_cast<const IdentityPreconditioner*>(make_preconditioner(op, 0.1, 0).get()), nullptr);
  const auto full = make_preconditioner(op, 0.1, 50);
  const auto* pc = dynamic_cast<const PivotedCholeskyPreconditioner*>(full.get());
  ASSERT_NE(pc, nullptr);
  EXPECT_EQ(pc->decomposition().rank(), 6u);
}

TEST(Preconditioner, ConcurrentSolvesAgree) {
  const PivotedCholeskyPreconditioner pre(random_factor(40, 5, 13), 0.3);
  const DenseMatrix m = oracle::from_eigen(oracle::gaussian(40, 4, 14));
  const DenseMatrix want = pre.solve(m);
  std::vector<DenseMatrix> got(4);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < 4; ++i) threads.emplace_back([&, i] { got[i] = pre.solve(m); });
  for (auto& t : threads) t.join();
  for (const auto& g : got) {
    for (std::size_t j = 0; j < want.values().size(); ++j) EXPECT_EQ(g.values()[j], want.values()[j]);
  }
}

TEST(SampleProbes, RademacherEntriesAndNorms) {
  Rng rng(15);
  const ProbeSample s = sample_probes(nullptr, 1.0, rng, 20, 33);
  EXPECT_EQ(s.distribution, ProbeDistribution::rademacher);
  for (std::size_t j = 0; j < 20; ++j) {
    double sq = 0.0;
    for (std::size_t i = 0; i < 33; ++i) {
      const double v = s.z(i, j);
      EXPECT_TRUE(v == 1.0 || v == -1.0);
      sq += v * v;
    }
    EXPECT_EQ(sq, 33.0);
  }
  EXPECT_THROW(sample_probes(nullptr, 1.0, rng, 0, 5), DomainError);
}

TEST(SampleProbes, ZeroFactorCovarianceIsSigma2Identity) {
  const double sigma2 = 0.6;
  Rng rng(16);
  const PivotedCholesky pc = zero_factor(8);
  const ProbeSample s = sample_probes(&pc, sigma2, rng, 10000, 8);
  EXPECT_EQ(s.distribution, ProbeDistribution::gaussian_preconditioned);
  const Mat z = oracle::to_eigen(s.z);
  const Mat cov = z * z.transpose() / 10000.0;
  EXPECT_LE(oracle::max_abs(cov - sigma2 * Mat::Identity(8, 8)), 0.05 * sigma2);
}

TEST(SampleProbes, CovarianceMatchesPreconditioner) {
  const std::size_t t = 100000;
  const double sigma2 = 0.5;
  const PivotedCholesky pc = random_factor(8, 2, 17);
  Rng rng(18);
  const Mat z = oracle::to_eigen(sample_probes(&pc, sigma2, rng, t, 8).z);
  const Mat cov = z * z.transpose() / static_cast<double>(t);
  const Mat p = llt(pc) + sigma2 * Mat::Identity(8, 8);
  for (Eigen::Index i = 0; i < 8; ++i) {
    for (Eigen::Index j = 0; j < 8; ++j) {
      const double se = std::sqrt((p(i, i) * p(j, j) + p(i, j) * p(i, j)) / static_cast<double>(t));
      EXPECT_LE(std::abs(cov(i, j) - p(i, j)), 5.0 * se) << i << "," << j;
    }
  }
}

TEST(PivotedCholesky, ResidualTraceDecaysGeometricallyForRbf) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const Mat x = points_1d(120, seed);
    const Mat k = oracle::rbf_matrix(x, x, 0.2, 1.0);
    std::vector<double> traces;
    for (std::size_t rank = 1; rank <= 15; ++rank) traces.push_back(factor(k, rank).residual_trace);
    for (std::size_t i = 1; i < traces.size(); ++i) EXPECT_LE(traces[i], traces[i - 1] * (1 + 1e-12));
    // Least-squares slope of log residual_trace against k.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(traces.size());
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const double xi = static_cast<double>(i + 1), yi = std::log(traces[i]);
      sx += xi;
      sy += yi;
      sxx += xi * xi;
      sxy += xi * yi;
    }
    EXPECT_LT((m * sxy - sx * sy) / (m * sxx - sx * sx), -0.5) << "seed " << seed;
  }
}

TEST(Preconditioner, ConditionNumberDecreasesWithRank) {
  const Eigen::Index n = 80;
  const double sigma2 = 0.01;
  const Mat x = points_1d(n, 19);
  const Mat khat = oracle::rbf_matrix(x, x, 0.2, 1.0) + sigma2 * Mat::Identity(n, n);
  const DenseSymmetricOperator op(oracle::from_eigen(khat));
  auto kappa = [&](std::size_t rank) {
    Mat p = Mat::Identity(n, n);
    if (rank > 0) p = oracle::to_eigen(PivotedCholeskyPreconditioner(pivoted_cholesky(op, sigma2, rank), sigma2).to_dense());
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(khat, p, Eigen::EigenvaluesOnly);
    return ges.eigenvalues()(n - 1) / ges.eigenvalues()(0);
  };
  double prev = kappa(0);
  for (std::size_t rank : {2, 5, 9}) {
    const double cur = kappa(rank);
    EXPECT_LE(cur, prev) << "rank " << rank;
    prev = cur;
  }
  EXPECT_NEAR(kappa(static_cast<std::size_t>(n)), 1.0, 1e-6);
}
