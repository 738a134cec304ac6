#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spgd/config.hpp"
#include "spgd/error.hpp"
#include "spgd/image.hpp"
#include "spgd/metrics.hpp"
#include "spgd/operator.hpp"
#include "spgd/prior.hpp"
#include "spgd/sampler.hpp"
#include "spgd/schedule.hpp"
#include "spgd/trajectory.hpp"

namespace spgd {

// ---------------------------------------------------------------------------
// Building the experiment from a config

struct Experiment {
  ScorePrior prior;
  LinearOperator op;
  NoiseSchedule schedule;
  std::optional<ImageGeometry> geometry;
  std::optional<Vector> fixed_truth;  // set when the ground truth comes from a file
};

inline std::filesystem::path resolve_path(const RunConfig& c, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || c.base_dir.empty() ? path : c.base_dir / path;
}

inline NoiseSchedule build_schedule(const ScheduleSpec& s) {
  if (s.beta_start) return make_linear_schedule(s.num_steps, *s.beta_start, *s.beta_end);
  return make_default_schedule(s.num_steps);
}

inline Experiment build_experiment(const RunConfig& c) {
  std::optional<ImageGeometry> geom = c.image;
  std::vector<GaussianComponent> comps;
  if (c.prior.kind == "gmm") {
    for (const auto& spec : c.prior.components) {
      Vector mean = Eigen::Map<const Vector>(spec.mean.data(), static_cast<Eigen::Index>(spec.mean.size()));
      comps.push_back(spec.cov_scalar
                          ? GaussianComponent::isotropic(spec.weight, std::move(mean), *spec.cov_scalar)
                          : GaussianComponent::full(spec.weight, std::move(mean), *spec.cov_matrix));
    }
  } else {
    std::vector<Vector> templates;
    if (c.prior.synthetic) {
      templates = make_smooth_templates(*geom, c.prior.synthetic->count, c.prior.synthetic->seed);
    } else {
      for (const auto& p : c.prior.template_paths) {
        Image img = read_image(resolve_path(c, p).string());
        if (!geom) geom = img.geometry;
        if (!(img.geometry == *geom)) {
          throw ConfigError("config: template " + p + " is " + std::to_string(img.geometry.width) +
                            "x" + std::to_string(img.geometry.height) + "x" +
                            std::to_string(img.geometry.channels) +
                            ", which does not match the image geometry");
        }
        templates.push_back(std::move(img.pixels));
      }
    }
    ScorePrior tmp = make_image_prior(templates, c.prior.cov_scalar);
    comps = tmp.components();
  }
  ScorePrior prior(std::move(comps));
  const Eigen::Index d = prior.dim();

  const auto& o = c.op;
  auto need_geom = [&]() -> const ImageGeometry& {
    if (!geom) throw ConfigError("config: operator '" + o.kind + "' requires image geometry");
    return *geom;
  };
  std::optional<LinearOperator> op;
  if (o.kind == "identity") {
    op = LinearOperator::identity(d);
  } else if (o.kind == "mask") {
    op = make_random_mask(need_geom(), o.keep_fraction, o.seed);
  } else if (o.kind == "gaussian_blur") {
    op = make_gaussian_blur(need_geom(), o.kernel_size, o.sigma);
  } else if (o.kind == "motion_blur") {
    op = make_motion_blur(need_geom(), o.kernel_size, o.angle, o.length);
  } else if (o.kind == "downsample") {
    const auto& g = need_geom();
    if (g.width % o.factor != 0 || g.height % o.factor != 0) {
      throw ConfigError("config: operator.factor must divide the image width and height");
    }
    op = make_downsampler(g, o.factor);
  } else {
    op = LinearOperator::dense(o.matrix);
  }
  if (op->input_dim() != d) {
    throw ConfigError("config: operator expects dimension " + std::to_string(op->input_dim()) +
                      " but the prior has dimension " + std::to_string(d));
  }

  std::optional<Vector> truth;
  if (c.ground_truth.kind == "image") {
    Image img = read_image(resolve_path(c, c.ground_truth.path).string());
    if (img.pixels.size() != d || (geom && !(img.geometry == *geom))) {
      throw ConfigError("config: ground truth image does not match the prior dimension");
    }
    truth = std::move(img.pixels);
  }
  return Experiment{std::move(prior), std::move(*op), build_schedule(c.schedule), geom,
                    std::move(truth)};
}

// ---------------------------------------------------------------------------
// Trajectory CSV

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline constexpr const char* kTrajectoryCsvHeader =
    "t,j,L_t,alpha_j,angle_gl_gd_deg,angle_gl_prev_deg,angle_gd_prev_deg,gl_norm,gd_norm";

/// One row per (outer step, warm-up iteration). Outer-step columns (the three
/// angles and gd_norm) are filled on the j = 0 row only.
inline void write_trajectory_csv(const TrajectoryLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << kTrajectoryCsvHeader << '\n';
  for (const auto& step : log.steps) {
    const double gd_norm = step.g_d.size() > 0 ? step.g_d.norm() : kNaN;
    const std::size_t rows = std::max<std::size_t>(1, step.inner.size());
    for (std::size_t j = 0; j < rows; ++j) {
      const InnerRecord* rec = j < step.inner.size() ? &step.inner[j] : nullptr;
      const bool first = j == 0;
      double gl_norm = rec ? rec->raw_norm : (step.g_l.size() > 0 ? step.g_l.norm() : kNaN);
      out << step.outer_t << ',' << j << ',' << format_number(rec ? rec->objective : kNaN) << ','
          << format_number(rec && rec->alpha ? *rec->alpha : kNaN) << ','
          << format_number(first ? step.angle_gl_gd : kNaN) << ','
          << format_number(first ? step.angle_gl_prev : kNaN) << ','
          << format_number(first ? step.angle_gd_prev : kNaN) << ',' << format_number(gl_norm)
          << ',' << format_number(first ? gd_norm : kNaN) << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Running a batch

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double psnr_db = kNaN;
  double ssim = kNaN;  // NaN when the image is smaller than the SSIM window
  double residual = kNaN;
  double error_norm = kNaN;
  long nfe = 0;
  double wall_clock_seconds = 0.0;
};

struct RunSummary {
  std::vector<SeedOutcome> seeds;
  Json summary;  // deterministic: identical for identical (config, seeds)
  Json timing;   // wall-clock per trajectory, kept apart from the summary
  int succeeded() const {
    int n = 0;
    for (const auto& s : seeds) n += s.ok ? 1 : 0;
    return n;
  }
};

struct NfeAccounting {
  long t_times_n_plus_1 = 0;
  long t_times_n = 0;
};

inline NfeAccounting nfe_formula(Method m, int num_steps, int warmup_steps) {
  if (m == Method::spgd) {
    return {static_cast<long>(num_steps) * (warmup_steps + 1),
            static_cast<long>(num_steps) * warmup_steps};
  }
  return {num_steps, num_steps};
}

namespace detail {

inline Json number_or_null(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }

inline void write_vector_text(const Vector& x, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (Eigen::Index i = 0; i < x.size(); ++i) out << format_number(x[i]) << '\n';
}

inline void write_signal(const Vector& x, const std::optional<ImageGeometry>& g,
                         const std::filesystem::path& stem) {
  if (g) {
    write_image(x, *g, stem.string() + (g->channels == 1 ? ".pgm" : ".ppm"));
  } else {
    write_vector_text(x, stem.string() + ".txt");
  }
}

inline void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline Json aggregate(const std::vector<SeedOutcome>& seeds, double SeedOutcome::*field) {
  double sum = 0.0;
  long n = 0;
  for (const auto& s : seeds) {
    if (!s.ok || std::isnan(s.*field)) continue;
    sum += s.*field;
    ++n;
  }
  if (n == 0) return {{"mean", nullptr}, {"std", nullptr}, {"count", 0}};
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& s : seeds) {
    if (!s.ok || std::isnan(s.*field)) continue;
    ss += (s.*field - mean) * (s.*field - mean);
  }
  const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  return {{"mean", mean}, {"std", sd}, {"count", n}};
}

}  // namespace detail

/// Runs every seed of the config and writes outputs below config.output_dir:
///   seed_<s>/restored.*, seed_<s>/truth.*, seed_<s>/trajectory.csv (diagnostics only),
///   summary.json (deterministic) and timing.json (wall clock).
/// A seed that throws is recorded as failed; the other seeds are unaffected.
inline RunSummary run_experiment(const RunConfig& config, std::ostream* progress = nullptr) {
  validate_config(config);
  const Experiment ex = build_experiment(config);
  const std::filesystem::path root(config.output_dir);
  std::filesystem::create_directories(root);

  SamplerConfig sc{config.method, ex.schedule, config.guidance, 0, config.diagnostics};
  const bool use_ssim = ex.geometry && ex.geometry->width >= SsimParams{}.window &&
                        ex.geometry->height >= SsimParams{}.window;

  RunSummary out;
  for (std::uint64_t seed : config.seeds) {
    SeedOutcome r;
    r.seed = seed;
    const auto start = std::chrono::steady_clock::now();
    try {
      const std::filesystem::path dir = root / ("seed_" + std::to_string(seed));
      std::filesystem::create_directories(dir);
      const Vector truth = ex.fixed_truth ? *ex.fixed_truth : sample_prior(ex.prior, seed);
      const MeasurementModel meas = synthesize_measurement(ex.op, truth, config.noise_std, seed);
      sc.seed = seed;
      const SampleResult res = config.method == Method::ddim_unconditional
                                   ? run_sampler(ex.prior, sc)
                                   : run_sampler(ex.prior, meas, sc);
      r.nfe = res.log.nfe;
      r.psnr_db = psnr(res.x0, truth);
      if (use_ssim) r.ssim = ssim(res.x0, truth, *ex.geometry);
      r.residual = (meas.measurement - ex.op.apply(res.x0)).norm();
      r.error_norm = (res.x0 - truth).norm();
      detail::write_signal(res.x0, ex.geometry, dir / "restored");
      detail::write_signal(truth, ex.geometry, dir / "truth");
      if (config.diagnostics) write_trajectory_csv(res.log, (dir / "trajectory.csv").string());
      r.ok = true;
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    r.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (progress != nullptr) {
      *progress << "seed " << seed << ": "
                << (r.ok ? "psnr " + format_number(r.psnr_db) + " dB, residual " +
                               format_number(r.residual)
                         : "failed: " + r.error)
                << '\n';
    }
    out.seeds.push_back(std::move(r));
  }

  Json per_seed = Json::array();
  Json timing = Json::array();
  long counted_nfe = -1;
  for (const auto& r : out.seeds) {
    Json s = {{"seed", r.seed}, {"status", r.ok ? "ok" : "failed"}};
    if (r.ok) {
      s["psnr_db"] = detail::number_or_null(r.psnr_db);
      s["ssim"] = detail::number_or_null(r.ssim);
      s["measurement_residual"] = r.residual;
      s["error_norm"] = r.error_norm;
      s["nfe"] = r.nfe;
      if (counted_nfe < 0) counted_nfe = r.nfe;
    } else {
      s["error"] = r.error;
    }
    per_seed.push_back(std::move(s));
    timing.push_back({{"seed", r.seed}, {"wall_clock_seconds", r.wall_clock_seconds}});
  }

  const NfeAccounting f =
      nfe_formula(config.method, ex.schedule.num_steps(), config.guidance.warmup_steps);
  Json nfe = {{"t_times_n_plus_1", f.t_times_n_plus_1},
              {"t_times_n", f.t_times_n},
              {"comparison_convention", "t_times_n_plus_1"},
              {"counted", counted_nfe < 0 ? Json(nullptr) : Json(counted_nfe)},
              {"counted_matches_convention", counted_nfe == f.t_times_n_plus_1}};

  out.summary = {{"config", config_to_json(config)},
                 {"per_seed", std::move(per_seed)},
                 {"aggregate",
                  {{"psnr_db", detail::aggregate(out.seeds, &SeedOutcome::psnr_db)},
                   {"ssim", detail::aggregate(out.seeds, &SeedOutcome::ssim)},
                   {"measurement_residual", detail::aggregate(out.seeds, &SeedOutcome::residual)},
                   {"error_norm", detail::aggregate(out.seeds, &SeedOutcome::error_norm)}}},
                 {"seeds_succeeded", out.succeeded()},
                 {"seeds_failed", static_cast<int>(out.seeds.size()) - out.succeeded()},
                 {"nfe_per_trajectory", std::move(nfe)}};
  out.timing = {{"per_seed", std::move(timing)}};
  detail::write_json(out.summary, root / "summary.json");
  detail::write_json(out.timing, root / "timing.json");
  return out;
}

// ---------------------------------------------------------------------------
// Parameter sweeps

struct SweepGrid {
  std::vector<double> betas;
  std::vector<int> warmup_steps;
  std::vector<int> num_steps;
};

/// Runs the config once per (beta, N, T) combination in sub-directories of
/// output_dir and writes sweep.csv with the aggregate metrics of each run.
/// Empty grid axes keep the config's own value.
inline std::vector<RunSummary> run_sweep(const RunConfig& base, const SweepGrid& grid,
                                         std::ostream* progress = nullptr) {
  const std::vector<double> betas =
      grid.betas.empty() ? std::vector<double>{base.guidance.momentum_beta} : grid.betas;
  const std::vector<int> ns =
      grid.warmup_steps.empty() ? std::vector<int>{base.guidance.warmup_steps} : grid.warmup_steps;
  const std::vector<int> ts =
      grid.num_steps.empty() ? std::vector<int>{base.schedule.num_steps} : grid.num_steps;

  const std::filesystem::path root(base.output_dir);
  std::filesystem::create_directories(root);
  std::ofstream csv(root / "sweep.csv", std::ios::binary);
  if (!csv) throw IoError("cannot open for writing: " + (root / "sweep.csv").string());
  csv << "beta,N,T,nfe,seeds_ok,psnr_mean,psnr_std,ssim_mean,residual_mean,residual_std,"
         "error_mean\n";

  std::vector<RunSummary> out;
  for (double beta : betas) {
    for (int n : ns) {
      for (int t : ts) {
        RunConfig c = base;
        c.guidance.momentum_beta = beta;
        c.guidance.warmup_steps = n;
        c.schedule.num_steps = t;
        c.output_dir = (root / ("beta_" + format_number(beta) + "_N_" + std::to_string(n) +
                                "_T_" + std::to_string(t)))
                           .string();
        if (progress != nullptr) {
          *progress << "sweep beta=" << format_number(beta) << " N=" << n << " T=" << t << '\n';
        }
        RunSummary s = run_experiment(c, progress);
        const Json& agg = s.summary["aggregate"];
        auto num = [](const Json& v) { return v.is_null() ? kNaN : v.get<double>(); };
        csv << format_number(beta) << ',' << n << ',' << t << ','
            << nfe_formula(c.method, t, n).t_times_n_plus_1 << ',' << s.succeeded() << ','
            << format_number(num(agg["psnr_db"]["mean"])) << ','
            << format_number(num(agg["psnr_db"]["std"])) << ','
            << format_number(num(agg["ssim"]["mean"])) << ','
            << format_number(num(agg["measurement_residual"]["mean"])) << ','
            << format_number(num(agg["measurement_residual"]["std"])) << ','
            << format_number(num(agg["error_norm"]["mean"])) << '\n';
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

}  // namespace spgd
