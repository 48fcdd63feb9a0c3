#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "signmotion/errors.hpp"
#include "signmotion/metrics.hpp"
#include "signmotion/random.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>

using namespace signmotion;

namespace {

Rng rng(37);

// Exhaustive monotone-alignment oracle: walks every path of match / insert /
// delete steps and keeps the cheapest accumulated cost.
void enumerate_paths(const Mat& a, const Mat& b, Index i, Index j, Scalar cost,
                     Scalar& best) {
  cost += (a.row(i) - b.row(j)).norm();
  if (i == a.rows() - 1 && j == b.rows() - 1) {
    best = std::min(best, cost);
    return;
  }
  if (i + 1 < a.rows() && j + 1 < b.rows()) enumerate_paths(a, b, i + 1, j + 1, cost, best);
  if (i + 1 < a.rows()) enumerate_paths(a, b, i + 1, j, cost, best);
  if (j + 1 < b.rows()) enumerate_paths(a, b, i, j + 1, cost, best);
}

Scalar dtw_bruteforce(const Mat& a, const Mat& b) {
  Scalar best = std::numeric_limits<Scalar>::infinity();
  enumerate_paths(a, b, 0, 0, 0.0, best);
  return best;
}

// Independent matrix square root through the (non-symmetric) eigendecomposition
// of the covariance product.
Scalar fid_oracle(const Mat& set_a, const Mat& set_b) {
  auto stats = [](const Mat& s) {
    Vec mean = Vec::Zero(s.cols());
    for (Index i = 0; i < s.rows(); ++i) mean += s.row(i).transpose();
    mean /= static_cast<Scalar>(s.rows());
    Mat cov = Mat::Zero(s.cols(), s.cols());
    for (Index i = 0; i < s.rows(); ++i) {
      const Vec c = s.row(i).transpose() - mean;
      cov += c * c.transpose();
    }
    cov /= static_cast<Scalar>(s.rows() - 1);
    cov += 1e-6 * Mat::Identity(s.cols(), s.cols());
    return std::make_pair(mean, cov);
  };
  const auto [ma, ca] = stats(set_a);
  const auto [mb, cb] = stats(set_b);
  Eigen::EigenSolver<Mat> es(ca * cb);
  std::complex<Scalar> trace_sqrt = 0;
  for (Index i = 0; i < es.eigenvalues().size(); ++i)
    trace_sqrt += std::sqrt(es.eigenvalues()(i));
  return (ma - mb).squaredNorm() + ca.trace() + cb.trace() - 2.0 * trace_sqrt.real();
}

}  // namespace

TEST_CASE("mpjpe examples") {
  PointTrack truth(3);
  for (auto& f : truth) f = rng.gaussian(5, 3);

  SUBCASE("identical tracks score zero") { CHECK(mpjpe(truth, truth) == 0.0); }

  SUBCASE("a constant (3,4,0) offset scores exactly 5") {
    PointTrack pred = truth;
    for (auto& f : pred) f.rowwise() += Eigen::RowVector3d(3, 4, 0);
    CHECK(mpjpe(pred, truth) == doctest::Approx(5.0).epsilon(1e-12));
  }

  SUBCASE("random instance matches the triple loop oracle") {
    for (int trial = 0; trial < 30; ++trial) {
      PointTrack pred = truth;
      for (auto& f : pred) f += rng.gaussian(5, 3);
      Scalar sum = 0;
      for (std::size_t f = 0; f < truth.size(); ++f)
        for (Index j = 0; j < truth[f].rows(); ++j) {
          Scalar sq = 0;
          for (Index c = 0; c < 3; ++c) {
            const Scalar d = pred[f](j, c) - truth[f](j, c);
            sq += d * d;
          }
          sum += std::sqrt(sq);
        }
      const Scalar expected = sum / static_cast<Scalar>(truth.size() * 5);
      CHECK(mpjpe(pred, truth) == doctest::Approx(expected).epsilon(1e-12));
    }
  }

  SUBCASE("translation of an identical track scores the offset norm") {
    PointTrack pred = truth;
    const Eigen::RowVector3d v(0.2, -0.4, 1.1);
    for (auto& f : pred) f.rowwise() += v;
    CHECK(mpjpe(pred, truth) == doctest::Approx(v.norm()).epsilon(1e-12));
  }

  SUBCASE("shape mismatch throws") {
    PointTrack pred(2);
    CHECK_THROWS_AS(mpjpe(pred, truth), DimensionError);
  }
}

TEST_CASE("dtw examples and properties") {
  SUBCASE("identical sequences align at zero cost") {
    const Mat a = rng.gaussian(6, 3);
    CHECK(dtw(a, a) == 0.0);
  }

  SUBCASE("single frames reduce to their distance") {
    const Mat a = rng.gaussian(1, 4);
    const Mat b = rng.gaussian(1, 4);
    CHECK(dtw(a, b) == doctest::Approx((a - b).norm()).epsilon(1e-12));
  }

  SUBCASE("scalar example against exhaustive enumeration") {
    Mat a(3, 1), b(4, 1);
    a << 0, 1, 2;
    b << 0, 0, 1, 2;
    CHECK(dtw(a, b) == doctest::Approx(dtw_bruteforce(a, b)).epsilon(1e-12));
    CHECK(dtw(a, b) == doctest::Approx(0.0));
  }

  SUBCASE("random small instances match enumeration") {
    for (int trial = 0; trial < 50; ++trial) {
      const Index fa = 1 + static_cast<Index>(rng.uniform_index(5));
      const Index fb = 1 + static_cast<Index>(rng.uniform_index(5));
      const Mat a = rng.gaussian(fa, 2);
      const Mat b = rng.gaussian(fb, 2);
      CHECK(dtw(a, b) == doctest::Approx(dtw_bruteforce(a, b)).epsilon(1e-10));
    }
  }

  SUBCASE("symmetry and non-negativity") {
    for (int trial = 0; trial < 20; ++trial) {
      const Mat a = rng.gaussian(4, 3);
      const Mat b = rng.gaussian(6, 3);
      const Scalar ab = dtw(a, b);
      CHECK(ab >= 0.0);
      CHECK(ab == doctest::Approx(dtw(b, a)).epsilon(1e-12));
    }
  }

  SUBCASE("replacing a suffix of b with a's suffix never raises the cost") {
    const Mat a = rng.gaussian(6, 2);
    Mat b = rng.gaussian(6, 2);
    Scalar previous = dtw(a, b);
    for (Index cut = 5; cut >= 0; --cut) {
      b.bottomRows(6 - cut) = a.bottomRows(6 - cut);
      const Scalar now = dtw(a, b);
      CHECK(now <= previous + 1e-12);
      previous = now;
    }
  }

  SUBCASE("empty input throws") {
    CHECK_THROWS_AS(dtw(Mat(), rng.gaussian(2, 1)), DegenerateInputError);
  }
}

TEST_CASE("fid examples and properties") {
  SUBCASE("a set against itself scores ~0") {
    const Mat a = rng.gaussian(40, 4);
    CHECK(fid(a, a) < 1e-6);
  }

  SUBCASE("equal covariances with shifted means score the squared shift") {
    GaussianFit a, b;
    a.mean = rng.gaussian_vector(5);
    const Mat half = rng.gaussian(5, 5);
    a.cov = half * half.transpose();
    const Vec v = rng.gaussian_vector(5);
    b.mean = a.mean + v;
    b.cov = a.cov;
    CHECK(fid_from_stats(a, b) == doctest::Approx(v.squaredNorm()).epsilon(1e-9));
  }

  SUBCASE("random 2x2-covariance cases match the eigendecomposition oracle") {
    for (int trial = 0; trial < 30; ++trial) {
      const Mat a = rng.gaussian(30, 2);
      Mat b = rng.gaussian(30, 2) * rng.uniform(0.5, 2.0);
      b.rowwise() += rng.gaussian_vector(2).transpose();
      CHECK(fid(a, b) == doctest::Approx(fid_oracle(a, b)).epsilon(1e-7));
    }
  }

  SUBCASE("symmetric in its arguments") {
    const Mat a = rng.gaussian(25, 3);
    const Mat b = rng.gaussian(30, 3);
    CHECK(fid(a, b) == doctest::Approx(fid(b, a)).epsilon(1e-9));
  }

  SUBCASE("invariant under a common orthogonal transform") {
    const Mat a = rng.gaussian(25, 4);
    const Mat b = rng.gaussian(30, 4);
    const Eigen::HouseholderQR<Mat> qr(rng.gaussian(4, 4));
    const Mat q = qr.householderQ();
    CHECK(fid(Mat(a * q.transpose()), Mat(b * q.transpose())) ==
          doctest::Approx(fid(a, b)).epsilon(1e-5));
  }
}

TEST_CASE("frame pose statistics") {
  SUBCASE("all-zero sequences give zero means and deviations") {
    const std::vector<Mat> set{Mat::Zero(5, 3), Mat::Zero(5, 3)};
    const FrameStats stats = frame_pose_stats(set);
    CHECK(stats.mean.norm() == 0.0);
    CHECK(stats.stddev.norm() == 0.0);
  }

  SUBCASE("a single sequence with constant channels has zero deviation") {
    Mat seq(4, 3);
    seq.setConstant(0.7);
    const FrameStats stats = frame_pose_stats({seq});
    for (Index f = 0; f < 4; ++f) {
      CHECK(stats.mean(f) == doctest::Approx(0.7));
      CHECK(stats.stddev(f) == doctest::Approx(0.0));
    }
  }

  SUBCASE("random padded set matches the loop oracle") {
    std::vector<Mat> set{rng.gaussian(6, 4), rng.gaussian(3, 4), rng.gaussian(5, 4)};
    const FrameStats stats = frame_pose_stats(set);
    for (Index f = 0; f < 6; ++f) {
      Scalar sum = 0, sum_sq = 0;
      int n = 0;
      for (const Mat& s : set) {
        if (f >= s.rows()) continue;
        for (Index c = 0; c < 4; ++c) {
          const Scalar v = std::abs(s(f, c));
          sum += v;
          sum_sq += v * v;
          ++n;
        }
      }
      const Scalar mean = sum / n;
      CHECK(stats.mean(f) == doctest::Approx(mean).epsilon(1e-12));
      CHECK(stats.stddev(f) ==
            doctest::Approx(std::sqrt(std::max(sum_sq / n - mean * mean, 0.0)))
                .epsilon(1e-9));
    }
  }

  SUBCASE("empty set throws") {
    CHECK_THROWS_AS(frame_pose_stats({}), DegenerateInputError);
  }
}

TEST_CASE("report serialization carries the table structure") {
  EvalReport report;
  report.body = {1, 2, 3, 4};
  report.left_hand = {5, 6, 7, 8};
  report.right_hand = {9, 10, 11, 12};
  const auto j = report_to_json(report);
  CHECK(j["body"]["MPVPE"] == 1.0);
  CHECK(j["left_hand"]["FID"] == 7.0);
  CHECK(j["right_hand"]["DTW"] == 12.0);
}
