#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "spgd/error.hpp"
#include "spgd/image.hpp"
#include "spgd/rng.hpp"
#include "spgd/types.hpp"

namespace spgd {

enum class OperatorKind { identity, mask, conv_blur, downsample, dense };

inline std::string to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::identity: return "identity";
    case OperatorKind::mask: return "mask";
    case OperatorKind::conv_blur: return "conv_blur";
    case OperatorKind::downsample: return "downsample";
    case OperatorKind::dense: return "dense";
  }
  return "unknown";
}

namespace detail {

/// Half-sample symmetric extension (..., x1, x0 | x0, x1, ... | x_{n-1}, x_{n-1}, ...),
/// folded so that any integer offset maps into [0, n).
inline int reflect_index(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace detail

struct IdentityData {};

struct MaskData {
  ImageGeometry geometry;
  /// Sorted kept pixel indices within one channel plane.
  std::vector<Eigen::Index> kept;
};

/// 2-D convolution with a normalised kernel under symmetric boundary extension.
struct ConvData {
  ImageGeometry geometry;
  Matrix kernel;  // odd side length, entries >= 0 summing to 1
};

struct DownsampleData {
  ImageGeometry geometry;
  int factor = 1;
};

struct DenseData {
  Matrix matrix;
};

/// A linear degradation A : R^d -> R^m with its exact adjoint.
class LinearOperator {
 public:
  using Data = std::variant<IdentityData, MaskData, ConvData, DownsampleData, DenseData>;

  static LinearOperator identity(Eigen::Index dim) {
    detail::require(dim > 0, "identity dimension must be positive");
    return LinearOperator(OperatorKind::identity, dim, dim, IdentityData{});
  }

  static LinearOperator mask(const ImageGeometry& g, std::vector<Eigen::Index> kept) {
    validate_geometry(g);
    detail::require(!kept.empty(), "mask must keep at least one pixel");
    std::sort(kept.begin(), kept.end());
    detail::require(std::adjacent_find(kept.begin(), kept.end()) == kept.end(),
                    "mask indices must be distinct");
    detail::require(kept.front() >= 0 && kept.back() < g.pixels(), "mask index out of range");
    const Eigen::Index m = static_cast<Eigen::Index>(kept.size()) * g.channels;
    return LinearOperator(OperatorKind::mask, g.size(), m, MaskData{g, std::move(kept)});
  }

  static LinearOperator convolution(const ImageGeometry& g, Matrix kernel) {
    validate_geometry(g);
    detail::require(kernel.rows() == kernel.cols() && kernel.rows() % 2 == 1,
                    "blur kernel must be square with odd side length");
    detail::require(kernel.minCoeff() >= 0.0, "blur kernel entries must be non-negative");
    detail::require(std::abs(kernel.sum() - 1.0) <= 1e-12, "blur kernel must sum to 1");
    return LinearOperator(OperatorKind::conv_blur, g.size(), g.size(),
                          ConvData{g, std::move(kernel)});
  }

  static LinearOperator downsample(const ImageGeometry& g, int factor) {
    validate_geometry(g);
    detail::require(factor >= 1, "downsampling factor must be positive");
    detail::require(g.width % factor == 0 && g.height % factor == 0,
                    "downsampling factor must divide width and height");
    const Eigen::Index m =
        static_cast<Eigen::Index>(g.width / factor) * (g.height / factor) * g.channels;
    return LinearOperator(OperatorKind::downsample, g.size(), m, DownsampleData{g, factor});
  }

  static LinearOperator dense(Matrix a) {
    detail::require(a.rows() > 0 && a.cols() > 0, "dense operator must be non-empty");
    const Eigen::Index m = a.rows();
    const Eigen::Index d = a.cols();
    return LinearOperator(OperatorKind::dense, d, m, DenseData{std::move(a)});
  }

  OperatorKind kind() const { return kind_; }
  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index output_dim() const { return output_dim_; }
  const Data& data() const { return data_; }

  Vector apply(const Vector& x) const {
    detail::require_dim("operator input", input_dim_, x.size());
    return std::visit([&](const auto& d) { return apply_impl(d, x); }, data_);
  }

  Vector adjoint(const Vector& v) const {
    detail::require_dim("operator adjoint input", output_dim_, v.size());
    return std::visit([&](const auto& d) { return adjoint_impl(d, v); }, data_);
  }

  /// Materialises A as an m x d matrix by probing unit vectors.
  Matrix to_matrix() const {
    Matrix a(output_dim_, input_dim_);
    Vector e = Vector::Zero(input_dim_);
    for (Eigen::Index j = 0; j < input_dim_; ++j) {
      e[j] = 1.0;
      a.col(j) = apply(e);
      e[j] = 0.0;
    }
    return a;
  }

 private:
  LinearOperator(OperatorKind kind, Eigen::Index d, Eigen::Index m, Data data)
      : kind_(kind), input_dim_(d), output_dim_(m), data_(std::move(data)) {}

  static Vector apply_impl(const IdentityData&, const Vector& x) { return x; }
  static Vector adjoint_impl(const IdentityData&, const Vector& v) { return v; }

  static Vector apply_impl(const MaskData& m, const Vector& x) {
    const auto n = static_cast<Eigen::Index>(m.kept.size());
    Vector y(n * m.geometry.channels);
    for (int ch = 0; ch < m.geometry.channels; ++ch) {
      for (Eigen::Index i = 0; i < n; ++i) {
        y[ch * n + i] = x[ch * m.geometry.pixels() + m.kept[static_cast<std::size_t>(i)]];
      }
    }
    return y;
  }

  static Vector adjoint_impl(const MaskData& m, const Vector& v) {
    const auto n = static_cast<Eigen::Index>(m.kept.size());
    Vector x = Vector::Zero(m.geometry.size());
    for (int ch = 0; ch < m.geometry.channels; ++ch) {
      for (Eigen::Index i = 0; i < n; ++i) {
        x[ch * m.geometry.pixels() + m.kept[static_cast<std::size_t>(i)]] = v[ch * n + i];
      }
    }
    return x;
  }

  // y(r, c) = sum_{a,b} k(a, b) x(refl(r - a + h), refl(c - b + h)), h = radius.
  static Vector apply_impl(const ConvData& cd, const Vector& x) {
    const auto& g = cd.geometry;
    const int size = static_cast<int>(cd.kernel.rows());
    const int h = size / 2;
    Vector y = Vector::Zero(g.size());
    for (int ch = 0; ch < g.channels; ++ch) {
      for (int r = 0; r < g.height; ++r) {
        for (int c = 0; c < g.width; ++c) {
          double acc = 0.0;
          for (int a = 0; a < size; ++a) {
            const int rr = detail::reflect_index(r - a + h, g.height);
            for (int b = 0; b < size; ++b) {
              const double k = cd.kernel(a, b);
              if (k == 0.0) continue;
              acc += k * x[g.index(ch, rr, detail::reflect_index(c - b + h, g.width))];
            }
          }
          y[g.index(ch, r, c)] = acc;
        }
      }
    }
    return y;
  }

  static Vector adjoint_impl(const ConvData& cd, const Vector& v) {
    const auto& g = cd.geometry;
    const int size = static_cast<int>(cd.kernel.rows());
    const int h = size / 2;
    Vector x = Vector::Zero(g.size());
    for (int ch = 0; ch < g.channels; ++ch) {
      for (int r = 0; r < g.height; ++r) {
        for (int c = 0; c < g.width; ++c) {
          const double val = v[g.index(ch, r, c)];
          for (int a = 0; a < size; ++a) {
            const int rr = detail::reflect_index(r - a + h, g.height);
            for (int b = 0; b < size; ++b) {
              const double k = cd.kernel(a, b);
              if (k == 0.0) continue;
              x[g.index(ch, rr, detail::reflect_index(c - b + h, g.width))] += k * val;
            }
          }
        }
      }
    }
    return x;
  }

  static Vector apply_impl(const DownsampleData& dd, const Vector& x) {
    const auto& g = dd.geometry;
    const int f = dd.factor;
    const int ow = g.width / f;
    const int oh = g.height / f;
    Vector y = Vector::Zero(static_cast<Eigen::Index>(ow) * oh * g.channels);
    const double inv = 1.0 / (static_cast<double>(f) * f);
    for (int ch = 0; ch < g.channels; ++ch) {
      for (int r = 0; r < g.height; ++r) {
        for (int c = 0; c < g.width; ++c) {
          y[(static_cast<Eigen::Index>(ch) * oh + r / f) * ow + c / f] +=
              inv * x[g.index(ch, r, c)];
        }
      }
    }
    return y;
  }

  static Vector adjoint_impl(const DownsampleData& dd, const Vector& v) {
    const auto& g = dd.geometry;
    const int f = dd.factor;
    const int ow = g.width / f;
    const int oh = g.height / f;
    Vector x(g.size());
    const double inv = 1.0 / (static_cast<double>(f) * f);
    for (int ch = 0; ch < g.channels; ++ch) {
      for (int r = 0; r < g.height; ++r) {
        for (int c = 0; c < g.width; ++c) {
          x[g.index(ch, r, c)] = inv * v[(static_cast<Eigen::Index>(ch) * oh + r / f) * ow + c / f];
        }
      }
    }
    return x;
  }

  static Vector apply_impl(const DenseData& dd, const Vector& x) { return dd.matrix * x; }
  static Vector adjoint_impl(const DenseData& dd, const Vector& v) {
    return dd.matrix.transpose() * v;
  }

  OperatorKind kind_;
  Eigen::Index input_dim_;
  Eigen::Index output_dim_;
  Data data_;
};

/// Keeps round(keep_fraction * width * height) pixels chosen uniformly at
/// random; the same pixels are kept in every channel.
inline LinearOperator make_random_mask(const ImageGeometry& g, double keep_fraction,
                                       std::uint64_t seed) {
  validate_geometry(g);
  detail::require(keep_fraction > 0.0 && keep_fraction <= 1.0, "keep_fraction must lie in (0,1]");
  const auto total = g.pixels();
  const auto keep = static_cast<Eigen::Index>(std::llround(keep_fraction * static_cast<double>(total)));
  detail::require(keep >= 1, "keep_fraction keeps zero pixels");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng = make_rng(seed, 0x3a5c);
  // Partial Fisher-Yates: the first `keep` slots form a uniform subset.
  for (Eigen::Index i = 0; i < keep; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, total - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(keep));
  return LinearOperator::mask(g, std::move(idx));
}

/// Separable Gaussian sampled at integer offsets and normalised to unit sum.
inline Matrix gaussian_kernel(int kernel_size, double sigma) {
  detail::require(kernel_size >= 1 && kernel_size % 2 == 1, "kernel_size must be odd");
  detail::require(sigma > 0.0, "sigma must be positive");
  const int h = kernel_size / 2;
  Vector g(kernel_size);
  for (int i = 0; i < kernel_size; ++i) {
    const double off = i - h;
    g[i] = std::exp(-off * off / (2.0 * sigma * sigma));
  }
  Matrix k = g * g.transpose();
  return k / k.sum();
}

inline LinearOperator make_gaussian_blur(const ImageGeometry& g, int kernel_size, double sigma) {
  return LinearOperator::convolution(g, gaussian_kernel(kernel_size, sigma));
}

/// Anti-aliased line of the given length through the kernel centre.
///
/// ceil(length) points are spaced evenly over a span of (length - 1) pixels and
/// splatted bilinearly; angle 0 is horizontal and 90 degrees is vertical.
inline Matrix motion_kernel(int kernel_size, double angle_degrees, double length) {
  detail::require(kernel_size >= 1 && kernel_size % 2 == 1, "kernel_size must be odd");
  detail::require(length > 0.0 && length <= kernel_size, "motion length must lie in (0, kernel_size]");
  const int h = kernel_size / 2;
  const int points = std::max(1, static_cast<int>(std::ceil(length - 1e-12)));
  const double theta = angle_degrees * std::numbers::pi / 180.0;
  const double dx = std::cos(theta);
  const double dy = -std::sin(theta);
  Matrix k = Matrix::Zero(kernel_size, kernel_size);
  const double w = 1.0 / points;
  auto snap = [](double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
  };
  for (int p = 0; p < points; ++p) {
    const double s = points == 1 ? 0.0 : -(length - 1.0) / 2.0 + (length - 1.0) * p / (points - 1);
    const double col = snap(h + s * dx);
    const double row = snap(h + s * dy);
    const int c0 = static_cast<int>(std::floor(col));
    const int r0 = static_cast<int>(std::floor(row));
    const double fc = col - c0;
    const double fr = row - r0;
    auto splat = [&](int r, int c, double weight) {
      if (weight == 0.0) return;
      if (r >= 0 && r < kernel_size && c >= 0 && c < kernel_size) k(r, c) += weight;
    };
    splat(r0, c0, w * (1 - fr) * (1 - fc));
    splat(r0, c0 + 1, w * (1 - fr) * fc);
    splat(r0 + 1, c0, w * fr * (1 - fc));
    splat(r0 + 1, c0 + 1, w * fr * fc);
  }
  return k / k.sum();
}

inline LinearOperator make_motion_blur(const ImageGeometry& g, int kernel_size,
                                       double angle_degrees, double length) {
  return LinearOperator::convolution(g, motion_kernel(kernel_size, angle_degrees, length));
}

inline LinearOperator make_downsampler(const ImageGeometry& g, int factor) {
  return LinearOperator::downsample(g, factor);
}

/// Observation y = A x_0 + n with n ~ N(0, noise_std^2 I).
struct MeasurementModel {
  LinearOperator op;
  double noise_std = 0.0;
  Vector measurement;

  MeasurementModel(LinearOperator a, double sigma, Vector y)
      : op(std::move(a)), noise_std(sigma), measurement(std::move(y)) {
    detail::require(noise_std >= 0.0, "noise_std must be non-negative");
    detail::require_dim("measurement", op.output_dim(), measurement.size());
  }
};

inline MeasurementModel synthesize_measurement(const LinearOperator& op, const Vector& x0,
                                               double noise_std, std::uint64_t seed) {
  detail::require(noise_std >= 0.0, "noise_std must be non-negative");
  detail::require_dim("ground truth", op.input_dim(), x0.size());
  Vector y = op.apply(x0);
  if (noise_std > 0.0) {
    Rng rng = make_rng(seed, streams::kMeasurementNoise);
    y += noise_std * standard_normal(rng, y.size());
  }
  return MeasurementModel(op, noise_std, std::move(y));
}

}  // namespace spgd
