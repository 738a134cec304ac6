#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spgd/error.hpp"
#include "spgd/guidance.hpp"
#include "spgd/image.hpp"
#include "spgd/operator.hpp"
#include "spgd/prior.hpp"
#include "spgd/sampler.hpp"
#include "spgd/schedule.hpp"

namespace spgd {

using Json = nlohmann::json;

struct ComponentSpec {
  double weight = 1.0;
  std::vector<double> mean;
  std::optional<double> cov_scalar;
  std::optional<Matrix> cov_matrix;
};

struct SyntheticTemplates {
  int count = 8;
  std::uint64_t seed = 0;
};

struct PriorSpec {
  std::string kind;  // "gmm" or "image_gmm"
  std::vector<ComponentSpec> components;
  std::vector<std::string> template_paths;
  std::optional<SyntheticTemplates> synthetic;
  double cov_scalar = 0.01;
};

struct OperatorSpec {
  std::string kind = "identity";  // identity, mask, gaussian_blur, motion_blur, downsample, dense
  double keep_fraction = 0.2;
  std::uint64_t seed = 0;
  int kernel_size = 9;
  double sigma = 1.5;
  double angle = 0.0;
  double length = 5.0;
  int factor = 4;
  Matrix matrix;
};

struct ScheduleSpec {
  int num_steps = 100;
  std::optional<double> beta_start;
  std::optional<double> beta_end;
};

struct GroundTruthSpec {
  std::string kind = "prior";  // "prior" samples per seed, "image" loads a file
  std::string path;
};

struct RunConfig {
  std::string task = "custom";
  Method method = Method::spgd;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";
  bool diagnostics = false;
  std::optional<ImageGeometry> image;
  PriorSpec prior;
  OperatorSpec op;
  double noise_std = 0.01;
  ScheduleSpec schedule;
  GuidanceConfig guidance;
  GroundTruthSpec ground_truth;
  /// Relative file paths in the config resolve against this directory.
  std::filesystem::path base_dir;
};

/// Default zeta for a task label; 1.0 when the label is not one of the image tasks.
inline double task_default_zeta(const std::string& task) {
  if (task == "inpainting") return default_zeta::kInpainting;
  if (task == "gaussian_deblur") return default_zeta::kGaussianDeblur;
  if (task == "motion_deblur") return default_zeta::kMotionDeblur;
  if (task == "super_resolution") return default_zeta::kSuperResolution;
  return 1.0;
}

inline Method parse_method(const std::string& s) {
  if (s == "spgd") return Method::spgd;
  if (s == "dps") return Method::dps;
  if (s == "ddim_unconditional" || s == "ddim") return Method::ddim_unconditional;
  throw ConfigError("config: unknown method '" + s + "' (spgd, dps, ddim_unconditional)");
}

namespace detail {

inline void reject_unknown(const Json& obj, const std::string& where,
                           std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("config: unknown key '" + key + "' in " + where);
  }
}

template <class T>
T get_as(const Json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: '" + where + "." + key + "' is missing or has the wrong type");
  }
}

template <class T>
T get_or(const Json& obj, const char* key, const std::string& where, T fallback) {
  return obj.contains(key) ? get_as<T>(obj, key, where) : fallback;
}

inline Matrix parse_matrix(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) {
    throw ConfigError("config: '" + where + "' must be a non-empty array of rows");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ConfigError("config: '" + where + "' rows must all have " + std::to_string(cols) +
                        " entries");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[static_cast<std::size_t>(c)].is_number()) {
        throw ConfigError("config: '" + where + "' entries must be numbers");
      }
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError("config: " + msg);
}

}  // namespace detail

/// Total dimension of the signal the prior describes.
inline Eigen::Index config_signal_dim(const RunConfig& c) {
  if (c.prior.kind == "gmm") return static_cast<Eigen::Index>(c.prior.components.front().mean.size());
  if (c.image) return c.image->size();
  return 0;
}

/// Cross-field checks. Everything that can be decided without touching files.
inline void validate_config(const RunConfig& c) {
  using detail::check;
  check(!c.seeds.empty(), "seeds must be non-empty");
  check(std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() == c.seeds.size(),
        "seeds must be distinct");
  check(!c.output_dir.empty(), "output_dir must be non-empty");
  check(c.noise_std >= 0.0, "noise_std must be non-negative");
  check(c.schedule.num_steps >= 1, "schedule.num_steps must be at least 1");
  check(c.schedule.beta_start.has_value() == c.schedule.beta_end.has_value(),
        "schedule.beta_start and schedule.beta_end must be given together");
  if (c.schedule.beta_start) {
    check(*c.schedule.beta_start > 0.0 && *c.schedule.beta_start <= *c.schedule.beta_end &&
              *c.schedule.beta_end < 1.0,
          "schedule betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  check(c.guidance.zeta >= 0.0, "guidance.zeta must be non-negative");
  check(c.guidance.warmup_steps >= 1, "guidance.warmup_steps must be at least 1");
  check(c.guidance.momentum_beta >= 0.0 && c.guidance.momentum_beta < 1.0,
        "guidance.momentum_beta must lie in [0, 1)");
  if (c.image) {
    check(c.image->width > 0 && c.image->height > 0, "image width and height must be positive");
    check(c.image->channels == 1 || c.image->channels == 3, "image.channels must be 1 or 3");
  }

  if (c.prior.kind == "gmm") {
    check(!c.prior.components.empty(), "prior.components must be non-empty");
    const std::size_t d = c.prior.components.front().mean.size();
    check(d > 0, "prior component means must be non-empty");
    double wsum = 0.0;
    for (std::size_t k = 0; k < c.prior.components.size(); ++k) {
      const auto& comp = c.prior.components[k];
      const std::string where = "prior.components[" + std::to_string(k) + "]";
      check(comp.mean.size() == d, where + ".mean has dimension " +
                                       std::to_string(comp.mean.size()) + ", expected " +
                                       std::to_string(d));
      check(comp.weight > 0.0, where + ".weight must be positive");
      check(comp.cov_scalar.has_value() != comp.cov_matrix.has_value(),
            where + " needs exactly one of cov_scalar or cov_matrix");
      if (comp.cov_scalar) check(*comp.cov_scalar > 0.0, where + ".cov_scalar must be positive");
      if (comp.cov_matrix) {
        check(comp.cov_matrix->rows() == static_cast<Eigen::Index>(d) &&
                  comp.cov_matrix->cols() == static_cast<Eigen::Index>(d),
              where + ".cov_matrix must be " + std::to_string(d) + "x" + std::to_string(d));
      }
      wsum += comp.weight;
    }
    check(std::abs(wsum - 1.0) <= 1e-12, "prior component weights must sum to 1 (within 1e-12)");
    if (c.image) {
      check(c.image->size() == static_cast<Eigen::Index>(d),
            "image geometry has " + std::to_string(c.image->size()) +
                " values but the prior dimension is " + std::to_string(d));
    }
  } else if (c.prior.kind == "image_gmm") {
    check(c.prior.cov_scalar > 0.0, "prior.cov_scalar must be positive");
    check(c.prior.synthetic.has_value() != !c.prior.template_paths.empty(),
          "image_gmm needs exactly one of templates or synthetic_templates");
    if (c.prior.synthetic) {
      check(c.prior.synthetic->count >= 1, "prior.synthetic_templates.count must be positive");
      check(c.image.has_value(), "image_gmm with synthetic_templates requires 'image' geometry");
    }
  } else {
    throw ConfigError("config: unknown prior.kind '" + c.prior.kind + "' (gmm, image_gmm)");
  }

  const auto& o = c.op;
  const bool image_op = o.kind == "mask" || o.kind == "gaussian_blur" ||
                        o.kind == "motion_blur" || o.kind == "downsample";
  if (image_op) {
    check(c.image.has_value() || c.prior.kind == "image_gmm",
          "operator '" + o.kind + "' requires 'image' geometry");
  }
  if (o.kind == "mask") {
    check(o.keep_fraction > 0.0 && o.keep_fraction <= 1.0,
          "operator.keep_fraction must lie in (0, 1]");
  } else if (o.kind == "gaussian_blur" || o.kind == "motion_blur") {
    check(o.kernel_size >= 1 && o.kernel_size % 2 == 1, "operator.kernel_size must be odd");
    if (o.kind == "gaussian_blur") check(o.sigma > 0.0, "operator.sigma must be positive");
    if (o.kind == "motion_blur") {
      check(o.length > 0.0 && o.length <= o.kernel_size,
            "operator.length must lie in (0, kernel_size]");
    }
  } else if (o.kind == "downsample") {
    check(o.factor >= 1, "operator.factor must be positive");
    if (c.image) {
      check(c.image->width % o.factor == 0 && c.image->height % o.factor == 0,
            "operator.factor must divide the image width and height");
    }
  } else if (o.kind == "dense") {
    check(o.matrix.size() > 0, "operator.matrix must be non-empty");
    const Eigen::Index d = config_signal_dim(c);
    if (d > 0) {
      check(o.matrix.cols() == d, "operator.matrix has " + std::to_string(o.matrix.cols()) +
                                      " columns, expected " + std::to_string(d));
    }
  } else if (o.kind != "identity") {
    throw ConfigError("config: unknown operator.kind '" + o.kind +
                      "' (identity, mask, gaussian_blur, motion_blur, downsample, dense)");
  }

  check(c.ground_truth.kind == "prior" || c.ground_truth.kind == "image",
        "ground_truth.kind must be 'prior' or 'image'");
  if (c.ground_truth.kind == "image") {
    check(!c.ground_truth.path.empty(), "ground_truth.path is required for kind 'image'");
  }
}

/// Builds a RunConfig from JSON. Unknown keys anywhere are rejected.
inline RunConfig config_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
  using detail::get_as;
  using detail::get_or;
  detail::reject_unknown(j, "config",
                         {"task", "method", "seeds", "output_dir", "diagnostics", "image", "prior",
                          "operator", "noise_std", "schedule", "guidance", "ground_truth"});
  RunConfig c;
  c.base_dir = base_dir;
  c.task = get_or<std::string>(j, "task", "config", "custom");
  c.method = parse_method(get_or<std::string>(j, "method", "config", "spgd"));
  if (!j.contains("seeds")) throw ConfigError("config: 'seeds' is required");
  c.seeds = get_as<std::vector<std::uint64_t>>(j, "seeds", "config");
  c.output_dir = get_or<std::string>(j, "output_dir", "config", "out");
  c.diagnostics = get_or<bool>(j, "diagnostics", "config", false);
  c.noise_std = get_or<double>(j, "noise_std", "config", 0.01);

  if (j.contains("image")) {
    const Json& im = j["image"];
    detail::reject_unknown(im, "image", {"width", "height", "channels"});
    c.image = ImageGeometry{get_as<int>(im, "width", "image"), get_as<int>(im, "height", "image"),
                            get_or<int>(im, "channels", "image", 1)};
  }

  if (!j.contains("prior")) throw ConfigError("config: 'prior' is required");
  const Json& p = j["prior"];
  detail::reject_unknown(p, "prior",
                         {"kind", "components", "templates", "synthetic_templates", "cov_scalar"});
  c.prior.kind = get_as<std::string>(p, "kind", "prior");
  if (c.prior.kind == "gmm") {
    if (!p.contains("components") || !p["components"].is_array()) {
      throw ConfigError("config: 'prior.components' must be an array");
    }
    for (std::size_t k = 0; k < p["components"].size(); ++k) {
      const Json& cj = p["components"][k];
      const std::string where = "prior.components[" + std::to_string(k) + "]";
      detail::reject_unknown(cj, where, {"weight", "mean", "cov_scalar", "cov_matrix"});
      ComponentSpec comp;
      comp.weight = get_or<double>(cj, "weight", where, 1.0);
      comp.mean = get_as<std::vector<double>>(cj, "mean", where);
      if (cj.contains("cov_scalar")) comp.cov_scalar = get_as<double>(cj, "cov_scalar", where);
      if (cj.contains("cov_matrix")) comp.cov_matrix = detail::parse_matrix(cj["cov_matrix"], where + ".cov_matrix");
      c.prior.components.push_back(std::move(comp));
    }
  } else {
    c.prior.template_paths = get_or<std::vector<std::string>>(p, "templates", "prior", {});
    c.prior.cov_scalar = get_or<double>(p, "cov_scalar", "prior", 0.01);
    if (p.contains("synthetic_templates")) {
      const Json& s = p["synthetic_templates"];
      detail::reject_unknown(s, "prior.synthetic_templates", {"count", "seed"});
      c.prior.synthetic = SyntheticTemplates{
          get_or<int>(s, "count", "prior.synthetic_templates", 8),
          get_or<std::uint64_t>(s, "seed", "prior.synthetic_templates", 0)};
    }
  }

  if (j.contains("operator")) {
    const Json& o = j["operator"];
    detail::reject_unknown(o, "operator",
                           {"kind", "keep_fraction", "seed", "kernel_size", "sigma", "angle",
                            "length", "factor", "matrix"});
    auto& op = c.op;
    op.kind = get_as<std::string>(o, "kind", "operator");
    op.keep_fraction = get_or<double>(o, "keep_fraction", "operator", op.keep_fraction);
    op.seed = get_or<std::uint64_t>(o, "seed", "operator", op.seed);
    op.kernel_size = get_or<int>(o, "kernel_size", "operator", op.kernel_size);
    op.sigma = get_or<double>(o, "sigma", "operator", op.sigma);
    op.angle = get_or<double>(o, "angle", "operator", op.angle);
    op.length = get_or<double>(o, "length", "operator", op.length);
    op.factor = get_or<int>(o, "factor", "operator", op.factor);
    if (o.contains("matrix")) op.matrix = detail::parse_matrix(o["matrix"], "operator.matrix");
  }

  if (j.contains("schedule")) {
    const Json& s = j["schedule"];
    detail::reject_unknown(s, "schedule", {"num_steps", "beta_start", "beta_end"});
    c.schedule.num_steps = get_or<int>(s, "num_steps", "schedule", 100);
    if (s.contains("beta_start")) c.schedule.beta_start = get_as<double>(s, "beta_start", "schedule");
    if (s.contains("beta_end")) c.schedule.beta_end = get_as<double>(s, "beta_end", "schedule");
  }

  c.guidance.zeta = task_default_zeta(c.task);
  if (j.contains("guidance")) {
    const Json& g = j["guidance"];
    detail::reject_unknown(g, "guidance", {"zeta", "warmup_steps", "momentum_beta"});
    c.guidance.zeta = get_or<double>(g, "zeta", "guidance", c.guidance.zeta);
    c.guidance.warmup_steps = get_or<int>(g, "warmup_steps", "guidance", 5);
    c.guidance.momentum_beta = get_or<double>(g, "momentum_beta", "guidance", 0.95);
  }

  if (j.contains("ground_truth")) {
    const Json& g = j["ground_truth"];
    detail::reject_unknown(g, "ground_truth", {"kind", "path"});
    c.ground_truth.kind = get_as<std::string>(g, "kind", "ground_truth");
    c.ground_truth.path = get_or<std::string>(g, "path", "ground_truth", "");
  }

  validate_config(c);
  return c;
}

/// Parses JSON text; syntax errors report the line and column.
inline RunConfig parse_config_text(const std::string& text,
                                   const std::filesystem::path& base_dir = {}) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("config: JSON syntax error at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }
  return config_from_json(j, base_dir);
}

inline RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.parent_path());
}

/// Normalised JSON with every default filled in; parses back to the same config.
inline Json config_to_json(const RunConfig& c) {
  Json j;
  j["task"] = c.task;
  j["method"] = to_string(c.method);
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["diagnostics"] = c.diagnostics;
  j["noise_std"] = c.noise_std;
  if (c.image) j["image"] = {{"width", c.image->width}, {"height", c.image->height}, {"channels", c.image->channels}};

  Json p;
  p["kind"] = c.prior.kind;
  if (c.prior.kind == "gmm") {
    Json comps = Json::array();
    for (const auto& comp : c.prior.components) {
      Json cj;
      cj["weight"] = comp.weight;
      cj["mean"] = comp.mean;
      if (comp.cov_scalar) cj["cov_scalar"] = *comp.cov_scalar;
      if (comp.cov_matrix) cj["cov_matrix"] = detail::matrix_to_json(*comp.cov_matrix);
      comps.push_back(std::move(cj));
    }
    p["components"] = std::move(comps);
  } else {
    p["cov_scalar"] = c.prior.cov_scalar;
    if (!c.prior.template_paths.empty()) p["templates"] = c.prior.template_paths;
    if (c.prior.synthetic) {
      p["synthetic_templates"] = {{"count", c.prior.synthetic->count},
                                  {"seed", c.prior.synthetic->seed}};
    }
  }
  j["prior"] = std::move(p);

  Json o;
  o["kind"] = c.op.kind;
  if (c.op.kind == "mask") {
    o["keep_fraction"] = c.op.keep_fraction;
    o["seed"] = c.op.seed;
  } else if (c.op.kind == "gaussian_blur") {
    o["kernel_size"] = c.op.kernel_size;
    o["sigma"] = c.op.sigma;
  } else if (c.op.kind == "motion_blur") {
    o["kernel_size"] = c.op.kernel_size;
    o["angle"] = c.op.angle;
    o["length"] = c.op.length;
  } else if (c.op.kind == "downsample") {
    o["factor"] = c.op.factor;
  } else if (c.op.kind == "dense") {
    o["matrix"] = detail::matrix_to_json(c.op.matrix);
  }
  j["operator"] = std::move(o);

  Json s;
  s["num_steps"] = c.schedule.num_steps;
  if (c.schedule.beta_start) {
    s["beta_start"] = *c.schedule.beta_start;
    s["beta_end"] = *c.schedule.beta_end;
  }
  j["schedule"] = std::move(s);
  j["guidance"] = {{"zeta", c.guidance.zeta},
                   {"warmup_steps", c.guidance.warmup_steps},
                   {"momentum_beta", c.guidance.momentum_beta}};
  Json gt = {{"kind", c.ground_truth.kind}};
  if (c.ground_truth.kind == "image") gt["path"] = c.ground_truth.path;
  j["ground_truth"] = std::move(gt);
  return j;
}

}  // namespace spgd
