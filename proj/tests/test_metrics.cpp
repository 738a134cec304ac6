#include <gtest/gtest.h>

#include <cmath>

#include "spgd/metrics.hpp"
#include "spgd/rng.hpp"

using namespace spgd;

namespace {

/// Per-window SSIM written as a plain double loop over the 2-D Gaussian window.
double ssim_reference(const Vector& x, const Vector& ref, const ImageGeometry& g) {
  const int n = 11;
  double w[11][11];
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      w[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / 4.5);
      total += w[i][j];
    }
  }
  double acc = 0.0;
  for (int ch = 0; ch < g.channels; ++ch) {
    double sum = 0.0;
    int count = 0;
    for (int r = 0; r + n <= g.height; ++r) {
      for (int c = 0; c + n <= g.width; ++c) {
        double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            const double k = w[i][j] / total;
            const double a = x[g.index(ch, r + i, c + j)];
            const double b = ref[g.index(ch, r + i, c + j)];
            ma += k * a;
            mb += k * b;
            aa += k * a * a;
            bb += k * b * b;
            ab += k * a * b;
          }
        }
        const double c1 = 0.0001;
        const double c2 = 0.0009;
        sum += (2 * ma * mb + c1) * (2 * (ab - ma * mb) + c2) /
               ((ma * ma + mb * mb + c1) * (aa - ma * ma + bb - mb * mb + c2));
        ++count;
      }
    }
    acc += sum / count;
  }
  return acc / g.channels;
}

Vector random_image(const ImageGeometry& g, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return Vector::NullaryExpr(g.size(), [&]() { return u(rng); });
}

}  // namespace

TEST(Psnr, Cases) {
  const Vector x = Vector::LinSpaced(50, 0.0, 0.4);
  EXPECT_EQ(psnr(x, x), kPsnrCap);
  EXPECT_NEAR(psnr((x.array() + 0.1).matrix(), x), 20.0, 1e-10);
  EXPECT_NEAR(psnr((x.array() + 0.5).matrix(), x), 6.020599913279624, 1e-10);
  EXPECT_THROW(psnr(x, Vector::Zero(3)), DimensionMismatch);
}

TEST(Psnr, DecreasingInOffset) {
  const Vector x = Vector::LinSpaced(20, 0.0, 1.0);
  double prev = kPsnrCap + 1;
  for (double d : {1e-9, 1e-4, 0.01, 0.1, 0.3}) {
    const double p = psnr((x.array() + d).matrix(), x);
    EXPECT_LT(p, prev);
    EXPECT_NEAR(p, psnr((x.array() - d).matrix(), x), 1e-6);
    prev = p;
  }
}

TEST(Ssim, IdenticalImagesScoreExactlyOne) {
  const ImageGeometry g{13, 12, 3};
  const Vector x = random_image(g, 1);
  EXPECT_EQ(ssim(x, x, g), 1.0);
}

TEST(Ssim, SmallOffsetScoresBelowOne) {
  const ImageGeometry g{16, 16, 1};
  const Vector x = random_image(g, 2);
  const double v = ssim((x.array() + 0.05).matrix(), x, g);
  EXPECT_LT(v, 1.0);
  EXPECT_GT(v, 0.9);
}

TEST(Ssim, MatchesDirectSummation) {
  for (const ImageGeometry g : {ImageGeometry{11, 11, 1}, ImageGeometry{20, 14, 1}, ImageGeometry{16, 16, 3}}) {
    const Vector x = random_image(g, 3);
    const Vector y = random_image(g, 4);
    const double v = ssim(x, y, g);
    EXPECT_NEAR(v, ssim_reference(x, y, g), 1e-9);
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Ssim, AnticorrelatedIsNegative) {
  const ImageGeometry g{12, 12, 1};
  const Vector x = random_image(g, 5);
  const double v = ssim((1.0 - x.array()).matrix(), x, g);
  EXPECT_LT(v, 0.0);
  EXPECT_GE(v, -1.0);
}

TEST(Ssim, RejectsSmallImages) {
  const ImageGeometry g{8, 8, 1};
  const Vector x = Vector::Zero(64);
  EXPECT_THROW(ssim(x, x, g), InvalidArgument);
}
