#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <string>
#include <vector>

#include "spgd/error.hpp"
#include "spgd/prior.hpp"
#include "spgd/rng.hpp"
#include "spgd/types.hpp"

namespace spgd {

/// Shape of an image stored as a planar vector: x[c * width * height + row * width + col].
struct ImageGeometry {
  int width = 0;
  int height = 0;
  int channels = 1;

  Eigen::Index pixels() const { return static_cast<Eigen::Index>(width) * height; }
  Eigen::Index size() const { return pixels() * channels; }
  Eigen::Index index(int channel, int row, int col) const {
    return static_cast<Eigen::Index>(channel) * pixels() + static_cast<Eigen::Index>(row) * width +
           col;
  }
  bool operator==(const ImageGeometry&) const = default;
};

inline void validate_geometry(const ImageGeometry& g) {
  detail::require(g.width > 0 && g.height > 0, "image width and height must be positive");
  detail::require(g.channels == 1 || g.channels == 3, "image channels must be 1 or 3");
}

struct Image {
  Vector pixels;
  ImageGeometry geometry;
};

/// Quantises a [0,1] value to 8 bits, rounding half up.
inline std::uint8_t quantize_unit(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

/// Writes binary PGM (P5) for one channel or PPM (P6) for three.
inline void write_image(const Vector& x, const ImageGeometry& g, const std::string& path) {
  validate_geometry(g);
  detail::require_dim("image vector", g.size(), x.size());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << (g.channels == 1 ? "P5" : "P6") << '\n' << g.width << ' ' << g.height << "\n255\n";
  std::vector<char> payload;
  payload.reserve(static_cast<std::size_t>(g.size()));
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      for (int ch = 0; ch < g.channels; ++ch) {
        payload.push_back(static_cast<char>(quantize_unit(x[g.index(ch, r, c)])));
      }
    }
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed: " + path);
}

namespace detail {

inline void skip_pnm_whitespace(std::istream& in) {
  while (true) {
    const int ch = in.peek();
    if (ch == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\v' || ch == '\f') {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_pnm_int(std::istream& in, const std::string& path, const char* field) {
  skip_pnm_whitespace(in);
  int value = -1;
  if (!(in >> value) || value <= 0) {
    throw IoError("malformed header in " + path + ": bad " + field);
  }
  return value;
}

}  // namespace detail

inline Image read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw IoError("malformed header in " + path + ": expected P5 or P6");
  }
  Image img;
  img.geometry.channels = magic[1] == '5' ? 1 : 3;
  img.geometry.width = detail::read_pnm_int(in, path, "width");
  img.geometry.height = detail::read_pnm_int(in, path, "height");
  const int maxval = detail::read_pnm_int(in, path, "maxval");
  if (maxval > 255) {
    throw IoError("unsupported bit depth in " + path + ": maxval " + std::to_string(maxval) +
                  " (only 8-bit images are supported)");
  }
  // Exactly one whitespace byte separates the header from the payload.
  in.get();
  const auto& g = img.geometry;
  std::vector<unsigned char> payload(static_cast<std::size_t>(g.size()));
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (in.gcount() != static_cast<std::streamsize>(payload.size())) {
    throw IoError("truncated payload in " + path);
  }
  img.pixels.resize(g.size());
  std::size_t pos = 0;
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      for (int ch = 0; ch < g.channels; ++ch) {
        img.pixels[g.index(ch, r, c)] = static_cast<double>(payload[pos++]) / maxval;
      }
    }
  }
  return img;
}

/// Smooth synthetic images in [0.1, 0.9]: a few random Gaussian blobs over a
/// random linear ramp. Used as pixel-field prior means.
inline std::vector<Vector> make_smooth_templates(const ImageGeometry& g, int count,
                                                 std::uint64_t seed) {
  validate_geometry(g);
  detail::require(count >= 1, "template count must be positive");
  Rng rng = make_rng(seed, 0x7e3a);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vector> out;
  for (int k = 0; k < count; ++k) {
    Vector img(g.size());
    for (int ch = 0; ch < g.channels; ++ch) {
      const double gx = unit(rng) - 0.5;
      const double gy = unit(rng) - 0.5;
      struct Blob {
        double cx, cy, radius, amp;
      };
      std::vector<Blob> blobs(3);
      for (auto& b : blobs) {
        b = {unit(rng) * g.width, unit(rng) * g.height, (0.15 + 0.25 * unit(rng)) * g.width,
             unit(rng) * 2.0 - 1.0};
      }
      for (int r = 0; r < g.height; ++r) {
        for (int c = 0; c < g.width; ++c) {
          const double u = (c + 0.5) / g.width - 0.5;
          const double v = (r + 0.5) / g.height - 0.5;
          double val = gx * u + gy * v;
          for (const auto& b : blobs) {
            const double dx = c - b.cx;
            const double dy = r - b.cy;
            val += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius));
          }
          img[g.index(ch, r, c)] = val;
        }
      }
    }
    const double lo = img.minCoeff();
    const double hi = img.maxCoeff();
    const double span = hi > lo ? hi - lo : 1.0;
    img = ((img.array() - lo) / span * 0.8 + 0.1).matrix();
    out.push_back(std::move(img));
  }
  return out;
}

/// Equal-weight isotropic mixture over vectorised template images.
inline ScorePrior make_image_prior(const std::vector<Vector>& templates, double cov_scalar) {
  detail::require(!templates.empty(), "image prior needs at least one template");
  std::vector<GaussianComponent> comps;
  const double w = 1.0 / static_cast<double>(templates.size());
  for (const auto& t : templates) comps.push_back(GaussianComponent::isotropic(w, t, cov_scalar));
  return ScorePrior(std::move(comps));
}

}  // namespace spgd
