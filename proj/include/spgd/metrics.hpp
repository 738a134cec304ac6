#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "spgd/error.hpp"
#include "spgd/image.hpp"
#include "spgd/types.hpp"

namespace spgd {

/// PSNR reported for identical signals, keeping outputs numeric.
inline constexpr double kPsnrCap = 200.0;

/// PSNR in dB for signals with data range [0, 1].
inline double psnr(const Vector& x, const Vector& ref) {
  detail::require_dim("psnr input", ref.size(), x.size());
  detail::require(x.size() > 0, "psnr of empty signals");
  const double mse = (x - ref).squaredNorm() / static_cast<double>(x.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

struct SsimParams {
  int window = 11;
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

namespace detail {

/// Valid-mode separable filtering of one channel plane with a 1-D window.
inline std::vector<double> filter_valid(const std::vector<double>& plane, int width, int height,
                                        const std::vector<double>& w) {
  const int n = static_cast<int>(w.size());
  const int ow = width - n + 1;
  const int oh = height - n + 1;
  std::vector<double> horiz(static_cast<std::size_t>(ow) * height);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += w[k] * plane[static_cast<std::size_t>(r) * width + c + k];
      horiz[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += w[k] * horiz[static_cast<std::size_t>(r + k) * ow + c];
      out[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Normalised 1-D Gaussian window; the 2-D window is its outer product.
inline std::vector<double> ssim_window(const SsimParams& p) {
  std::vector<double> w(static_cast<std::size_t>(p.window));
  const int h = p.window / 2;
  double sum = 0.0;
  for (int i = 0; i < p.window; ++i) {
    const double off = i - h;
    w[static_cast<std::size_t>(i)] = std::exp(-off * off / (2.0 * p.window_sigma * p.window_sigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= sum;
  return w;
}

/// Mean SSIM over all fully contained Gaussian windows, averaged across channels.
/// Stabilisers are C1 = k1^2 and C2 = k2^2 for unit data range.
inline double ssim(const Vector& x, const Vector& ref, const ImageGeometry& g,
                   const SsimParams& p = {}) {
  validate_geometry(g);
  detail::require_dim("ssim input", g.size(), x.size());
  detail::require_dim("ssim reference", g.size(), ref.size());
  detail::require(p.window >= 1 && p.window % 2 == 1, "ssim window must be odd");
  detail::require(g.width >= p.window && g.height >= p.window, "image smaller than ssim window");
  const std::vector<double> w = ssim_window(p);
  const double c1 = p.k1 * p.k1;
  const double c2 = p.k2 * p.k2;
  const auto n = static_cast<std::size_t>(g.pixels());

  double total = 0.0;
  for (int ch = 0; ch < g.channels; ++ch) {
    std::vector<double> a(n), b(n), aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = x[static_cast<Eigen::Index>(ch * n + i)];
      b[i] = ref[static_cast<Eigen::Index>(ch * n + i)];
      aa[i] = a[i] * a[i];
      bb[i] = b[i] * b[i];
      ab[i] = a[i] * b[i];
    }
    const auto mu_a = detail::filter_valid(a, g.width, g.height, w);
    const auto mu_b = detail::filter_valid(b, g.width, g.height, w);
    const auto e_aa = detail::filter_valid(aa, g.width, g.height, w);
    const auto e_bb = detail::filter_valid(bb, g.width, g.height, w);
    const auto e_ab = detail::filter_valid(ab, g.width, g.height, w);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
      const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
      sum += num / den;
    }
    total += sum / static_cast<double>(mu_a.size());
  }
  return total / g.channels;
}

}  // namespace spgd
