#pragma once

// Acceptance suite shared by the test binary and `spgd_cli check`.
// Each criterion runs standalone, prints one PASS/FAIL line and reports its runtime
// against its budget; exceeding the budget counts as a failure.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "spgd/spgd.hpp"
#include "spgd/config.hpp"
#include "spgd/harness.hpp"

namespace spgd::selfcheck {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double budget_seconds = 0.0;
};

struct Outcome {
  bool passed = false;
  std::string detail;
};

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Random prior, operator and state for d <= 64. Cycles through every operator kind.
struct RandomInstance {
  ScorePrior prior;
  MeasurementModel meas;
  NoiseSchedule schedule;
  Vector x_t;
  Timestep t;
};

inline RandomInstance random_instance(int index, std::uint64_t seed) {
  Rng rng = make_rng(seed, 1000 + static_cast<std::uint64_t>(index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  static const ImageGeometry shapes[] = {{4, 4, 1}, {8, 8, 1}, {4, 4, 3}, {6, 6, 1}, {4, 2, 3}};
  const ImageGeometry g = shapes[index % 5];
  const Eigen::Index d = g.size();

  const int k_count = 1 + index % 3;
  std::vector<GaussianComponent> comps;
  for (int k = 0; k < k_count; ++k) {
    Vector mean = (0.5 + 0.3 * standard_normal(rng, d).array()).matrix();
    if ((index + k) % 2 == 0) {
      comps.push_back(GaussianComponent::isotropic(1.0 / k_count, std::move(mean), 0.01 + 0.2 * unit(rng)));
    } else {
      Matrix b = Matrix::NullaryExpr(d, d, [&]() { return std::normal_distribution<double>()(rng); });
      Matrix cov = 0.05 * b * b.transpose() / static_cast<double>(d);
      cov.diagonal().array() += 0.01;
      comps.push_back(GaussianComponent::full(1.0 / k_count, std::move(mean), cov));
    }
  }
  ScorePrior prior(std::move(comps));

  LinearOperator op = LinearOperator::identity(d);
  switch ((index / 3) % 6) {
    case 0: break;
    case 1: op = make_random_mask(g, 0.5, seed + index); break;
    case 2: op = make_gaussian_blur(g, 3, 1.0); break;
    case 3: op = make_motion_blur(g, 5, 180.0 * unit(rng), 3.0); break;
    case 4: op = make_downsampler(g, 2); break;
    default: {
      const Eigen::Index m = std::max<Eigen::Index>(1, d / 2);
      Matrix a = Matrix::NullaryExpr(m, d, [&]() { return std::normal_distribution<double>()(rng); });
      op = LinearOperator::dense(a / std::sqrt(static_cast<double>(d)));
    }
  }

  NoiseSchedule schedule = make_default_schedule(100);
  const Timestep t = 1 + static_cast<int>(unit(rng) * 100.0) % 100;
  const double ab = schedule.alpha_bar(t);
  const Vector x0 = prior.sample(rng);
  const Vector x_t = std::sqrt(ab) * prior.sample(rng) + std::sqrt(1.0 - ab) * standard_normal(rng, d);
  MeasurementModel meas = synthesize_measurement(op, x0, 0.01, seed + index);
  return RandomInstance{std::move(prior), std::move(meas), std::move(schedule), x_t, t};
}

/// The 16x16 image-GMM inpainting task used by the trend criteria.
struct InpaintingTask {
  ImageGeometry geometry{16, 16, 1};
  ScorePrior prior;
  LinearOperator op;
};

inline constexpr double kInpaintingZeta = 1.0;

inline InpaintingTask inpainting_task() {
  const ImageGeometry g{16, 16, 1};
  return InpaintingTask{g, make_image_prior(make_smooth_templates(g, 8, 11), 0.01),
                        make_random_mask(g, 0.2, 5)};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// 1. The DPS step equals scale * x_t - denoise_coeff * eps - zeta * g_l.

inline Outcome dps_decomposition() {
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto inst = detail::random_instance(i, 101);
    const double zeta = 0.1 + 0.029 * i;
    GuidanceConfig gc{zeta, 1, 0.0};
    const Vector step = dps_step(inst.prior, inst.schedule, inst.meas, gc, inst.x_t, inst.t);
    const DdimCoefficients c = ddim_coefficients(inst.schedule.alpha(inst.t),
                                                 inst.schedule.alpha_bar(inst.t),
                                                 inst.schedule.alpha_bar(inst.t - 1));
    const Vector eps = epsilon(inst.prior, inst.schedule, inst.x_t, inst.t);
    const Vector gl = likelihood_gradient(inst.prior, inst.schedule, inst.meas, inst.x_t, inst.t);
    const Vector three_term = c.scale * inst.x_t - c.denoise_coeff * eps - zeta * gl;
    worst = std::max(worst, (step - three_term).norm() / std::max(three_term.norm(), 1e-300));
  }
  return {worst <= 1e-10, "max relative difference " + detail::fmt("%.3g", worst) +
                              " over 100 instances (limit 1e-10)"};
}

// ---------------------------------------------------------------------------
// 2. Analytic likelihood gradient against central finite differences.

inline Outcome gradient_exactness() {
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto inst = detail::random_instance(i, 202);
    const Vector g = likelihood_gradient(inst.prior, inst.schedule, inst.meas, inst.x_t, inst.t);
    const double h = 1e-5 * std::max(1.0, inst.x_t.lpNorm<Eigen::Infinity>());
    const Vector fd = likelihood_gradient_fd(inst.prior, inst.schedule, inst.meas, inst.x_t, inst.t, h);
    worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), 1e-300));
  }
  return {worst < 1e-5, "max relative error " + detail::fmt("%.3g", worst) +
                            " over 100 instances (limit 1e-5)"};
}

// ---------------------------------------------------------------------------
// 3. Warm-up descent on exact quadratics, with an overstepped negative control.

inline Outcome quadratic_descent() {
  int good = 0;
  int rejected = 0;
  double worst_slack = 1e300;
  const int instances = 20;
  for (int i = 0; i < instances; ++i) {
    Rng rng = make_rng(303, static_cast<std::uint64_t>(i));
    auto normal = [&]() { return std::normal_distribution<double>()(rng); };
    const Eigen::Index d = 4 + i % 13;
    const Eigen::Index m = 2 + i % static_cast<int>(d - 1);
    Matrix b = Matrix::NullaryExpr(d, d, normal);
    Matrix cov = 0.1 * b * b.transpose() / static_cast<double>(d);
    cov.diagonal().array() += 0.02;
    const Vector mean = Vector::NullaryExpr(d, normal);
    ScorePrior prior({GaussianComponent::full(1.0, mean, cov)});
    const LinearOperator op = LinearOperator::dense(Matrix::NullaryExpr(m, d, normal));
    const MeasurementModel meas(op, 0.0, Vector::NullaryExpr(m, normal));
    const NoiseSchedule schedule = make_default_schedule(100);
    const Timestep t = 1 + (i * 37) % 100;
    const double ab = schedule.alpha_bar(t);
    const Vector x = Vector::NullaryExpr(d, normal);

    // Exact smoothness constant of g_l from the closed-form Jacobian of x0_hat.
    Matrix noised = ab * cov;
    noised.diagonal().array() += 1.0 - ab;
    Matrix jac = Matrix::Identity(d, d) - (1.0 - ab) * noised.inverse();
    jac /= std::sqrt(ab);
    const Matrix a = op.to_matrix();
    const Matrix curvature = jac.transpose() * a.transpose() * a * jac;
    const double lip = 2.0 * Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (curvature + curvature.transpose()))
                                 .eigenvalues()
                                 .maxCoeff();

    auto run = [&](double inner_step) {
      GuidanceConfig gc{5 * inner_step, 5, 0.0};
      const WarmupResult w = spgd_warmup(prior, schedule, meas, gc, x, t);
      const double final_obj = likelihood_objective(prior, schedule, meas, w.x, t);
      return std::pair{descent_check(make_descent_trace(w.inner, final_obj), inner_step, lip),
                       make_descent_trace(w.inner, final_obj)};
    };

    const auto [rep, trace] = run(0.5 / lip);
    bool strict = true;
    for (std::size_t j = 0; j + 1 < trace.objectives.size(); ++j) {
      strict = strict && trace.objectives[j + 1] < trace.objectives[j];
    }
    worst_slack = std::min(worst_slack, rep.telescoped_slack);
    if (rep.passed() && strict && rep.telescoped_slack >= -1e-8) ++good;

    const auto [neg, neg_trace] = run(3.0 / lip);
    if (!neg.passed() && !neg.monotone() && !neg.step_condition) ++rejected;
  }
  return {good == instances && rejected == instances,
          std::to_string(good) + "/" + std::to_string(instances) +
              " quadratics descend with telescoped slack >= " + detail::fmt("%.3g", worst_slack) +
              "; overstepped control rejected on " + std::to_string(rejected) + "/" +
              std::to_string(instances)};
}

// ---------------------------------------------------------------------------
// 4. Non-increase on mixtures with the step set from a local Lipschitz estimate.

inline Outcome mixture_descent() {
  long ok = 0;
  long total = 0;
  const ImageGeometry g{4, 4, 1};
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng = make_rng(s, 404);
    std::vector<GaussianComponent> comps;
    // Three modes about five component widths apart.
    for (int k = 0; k < 3; ++k) {
      Vector mean = (0.5 + 0.2 * standard_normal(rng, 16).array()).matrix();
      comps.push_back(GaussianComponent::isotropic(1.0 / 3.0, std::move(mean), 0.05));
    }
    ScorePrior prior(std::move(comps));
    const LinearOperator op = s % 3 == 0   ? make_random_mask(g, 0.5, s)
                              : s % 3 == 1 ? make_gaussian_blur(g, 3, 1.0)
                                           : LinearOperator::identity(16);
    const MeasurementModel meas = synthesize_measurement(op, prior.sample(rng), 0.01, s);
    const NoiseSchedule schedule = make_default_schedule(50);
    Vector x = initial_noise(16, s);
    for (Timestep t = 50; t >= 1; --t) {
      const double lip = estimate_lipschitz(prior, schedule, meas, x, t, kDefaultLipschitzProbes,
                                            std::nullopt, s);
      const GuidanceConfig gc{5 * 0.5 / lip, 5, 0.0};
      const WarmupResult w = spgd_warmup(prior, schedule, meas, gc, x, t);
      std::vector<double> obj;
      for (const auto& r : w.inner) obj.push_back(r.objective);
      obj.push_back(likelihood_objective(prior, schedule, meas, w.x, t));
      for (std::size_t j = 0; j + 1 < obj.size(); ++j) {
        ++total;
        if (obj[j + 1] <= obj[j] + 1e-10 * (1.0 + std::abs(obj[j]))) ++ok;
      }
      const DdimCoefficients c = ddim_coefficients(schedule, t);
      x = c.scale * w.x - c.denoise_coeff * epsilon(prior, schedule, w.x, t);
    }
  }
  const double frac = static_cast<double>(ok) / static_cast<double>(total);
  return {frac >= 0.99, std::to_string(ok) + "/" + std::to_string(total) + " inner steps non-increasing (" +
                            detail::fmt("%.2f", 100.0 * frac) + "%, need >= 99%)"};
}

// ---------------------------------------------------------------------------
// 5. Exact momentum behaviours.

inline Outcome adm_behaviours() {
  Rng rng = make_rng(505, 0);
  const Vector g = standard_normal(rng, 32);
  const double beta = 0.95;
  const double tol = 1e-12;
  std::vector<std::string> failures;

  const AdmUpdate first = adm_update(AdmState{}, g, beta);
  const AdmUpdate aligned = adm_update(first.state, g, beta);
  if (!(first.smoothed_gradient == g)) failures.push_back("first call not a pass-through");
  if (std::abs(*aligned.state.last_alpha - 1.0) > tol) failures.push_back("aligned alpha != 1");
  if ((aligned.smoothed_gradient - g).norm() > tol * g.norm()) failures.push_back("aligned not a fixed point");

  const AdmUpdate anti = adm_update(first.state, -g, beta);
  if (std::abs(*anti.state.last_alpha) > tol) failures.push_back("antiparallel alpha != 0");
  if ((anti.smoothed_gradient + g).norm() > tol * g.norm()) failures.push_back("antiparallel history kept");

  // Full runs on a small mixture with every inner record kept.
  const ImageGeometry geom{4, 4, 1};
  ScorePrior prior({GaussianComponent::isotropic(0.5, Vector::Constant(16, 0.3), 0.02),
                    GaussianComponent::isotropic(0.5, Vector::Constant(16, 0.7), 0.02)});
  const MeasurementModel meas =
      synthesize_measurement(make_random_mask(geom, 0.5, 1), sample_prior(prior, 1), 0.01, 1);
  SamplerConfig sc{Method::spgd, make_default_schedule(50), {1.0, 5, beta}, 7, true};
  long updates = 0;
  for (const auto& step : run_sampler(prior, meas, sc).log.steps) {
    for (const auto& rec : step.inner) {
      if (!rec.alpha) continue;
      ++updates;
      if (*rec.alpha < -tol || *rec.alpha > 1.0 + tol || *rec.alpha * beta > beta + tol) {
        failures.push_back("alpha*beta > beta at t=" + std::to_string(step.outer_t));
      }
    }
  }
  sc.guidance.momentum_beta = 0.0;
  long passthrough = 0;
  for (const auto& step : run_sampler(prior, meas, sc).log.steps) {
    for (const auto& rec : step.inner) {
      ++passthrough;
      if (!(rec.smoothed_gradient == rec.raw_gradient)) {
        failures.push_back("beta=0 changed the gradient at t=" + std::to_string(step.outer_t));
      }
    }
  }
  std::string detail = "aligned/antiparallel/pass-through exact; alpha*beta <= beta on " +
                       std::to_string(updates) + " updates; beta=0 identity on " +
                       std::to_string(passthrough) + " steps";
  if (!failures.empty()) detail = failures.front() + " (" + std::to_string(failures.size()) + " failures)";
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// 6. Convergence to the closed-form Gaussian posterior mean.

inline Outcome posterior_convergence() {
  const ImageGeometry g{4, 4, 1};
  const Vector mu = Vector::Constant(16, 0.5);
  const double sigma = 0.1;
  const double zeta = 5.0;
  const double noise_std = 0.01;
  ScorePrior prior({GaussianComponent::isotropic(1.0, mu, sigma * sigma)});
  const std::vector<std::pair<std::string, LinearOperator>> ops = {
      {"identity", LinearOperator::identity(16)},
      {"mask", make_random_mask(g, 0.875, 3)},
      {"blur", make_gaussian_blur(g, 3, 0.5)}};

  bool pass = true;
  std::ostringstream detail;
  for (const auto& [name, op] : ops) {
    double err_spgd = 0.0;
    double err_dps = 0.0;
    double worst_ratio = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      // Truth one unit of standard normal away from the prior mean: a measurement-dominated posterior.
      Rng rng = make_rng(s, streams::kGroundTruth);
      const Vector truth = mu + standard_normal(rng, 16);
      const MeasurementModel meas = synthesize_measurement(op, truth, noise_std, s);
      const Vector post = gaussian_posterior_mean(prior.components().front(), op, meas.measurement, noise_std);
      const SamplerConfig a{Method::spgd, make_default_schedule(100), {zeta, 5, 0.95}, s, false};
      const SamplerConfig b{Method::dps, make_default_schedule(500), {zeta / 5.0, 1, 0.95}, s, false};
      const double e = (run_sampler(prior, meas, a).x0 - post).norm();
      err_spgd += e;
      worst_ratio = std::max(worst_ratio, e / (post - mu).norm());
      err_dps += (run_sampler(prior, meas, b).x0 - post).norm();
    }
    err_spgd /= 20.0;
    err_dps /= 20.0;
    const bool ok = worst_ratio <= 0.1 && err_spgd <= err_dps;
    pass = pass && ok;
    if (!detail.str().empty()) detail << "; ";
    detail << name << ": worst ratio " << detail::fmt("%.3f", worst_ratio) << ", mean err spgd "
           << detail::fmt("%.4f", err_spgd) << " vs dps " << detail::fmt("%.4f", err_dps)
           << (ok ? "" : " [fail]");
  }
  return {pass, detail.str()};
}

// ---------------------------------------------------------------------------
// 7. More warm-up per step beats more outer steps at a matched budget.

inline Outcome warmup_allocation() {
  const auto task = detail::inpainting_task();
  const double zeta = detail::kInpaintingZeta;
  std::vector<double> diffs;
  double mean_n5 = 0.0;
  double mean_n1 = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const MeasurementModel meas = synthesize_measurement(task.op, sample_prior(task.prior, s), 0.01, s);
    // Same per-gradient step zeta / 5 in both allocations.
    const SamplerConfig a{Method::spgd, make_default_schedule(100), {zeta, 5, 0.95}, s, false};
    const SamplerConfig b{Method::spgd, make_default_schedule(500), {zeta / 5.0, 1, 0.95}, s, false};
    const double ra = (meas.measurement - task.op.apply(run_sampler(task.prior, meas, a).x0)).norm();
    const double rb = (meas.measurement - task.op.apply(run_sampler(task.prior, meas, b).x0)).norm();
    mean_n5 += ra / 20.0;
    mean_n1 += rb / 20.0;
    diffs.push_back(rb - ra);
  }
  double md = 0.0;
  for (double v : diffs) md += v / 20.0;
  double ss = 0.0;
  for (double v : diffs) ss += (v - md) * (v - md);
  const double se = std::sqrt(ss / 19.0) / std::sqrt(20.0);
  const double margin = md - 1.729 * se;  // one-sided 95% lower bound, t with 19 dof
  return {mean_n5 <= mean_n1 && margin >= 0.0,
          "mean residual T=100/N=5 " + detail::fmt("%.4g", mean_n5) + " vs T=500/N=1 " +
              detail::fmt("%.4g", mean_n1) + ", paired lower bound " + detail::fmt("%.3g", margin)};
}

// ---------------------------------------------------------------------------
// 8. Gradient-angle trends.

inline Outcome angle_trends() {
  const auto task = detail::inpainting_task();
  double gd = 0.0;
  double gl = 0.0;
  double raw = 0.0;
  double smooth = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const MeasurementModel meas = synthesize_measurement(task.op, sample_prior(task.prior, s), 0.01, s);
    const SamplerConfig sc{Method::spgd, make_default_schedule(100),
                           {detail::kInpaintingZeta, 5, 0.95}, s, true};
    const TrajectoryLog log = run_sampler(task.prior, meas, sc).log;
    const AngleSummary a = angle_summary(log);
    const WarmupAngleSummary w = warmup_angle_summary(log);
    gd += a.denoising_temporal.mean / 20.0;
    gl += a.likelihood_temporal.mean / 20.0;
    raw += w.raw_mean / 20.0;
    smooth += w.smoothed_mean / 20.0;
  }
  return {gd < gl && smooth < raw,
          "(a) consecutive angle g_d " + detail::fmt("%.3f", gd) + " deg < g_l " +
              detail::fmt("%.3f", gl) + " deg; (b) warm-up smoothed " + detail::fmt("%.3f", smooth) +
              " deg < raw " + detail::fmt("%.3f", raw) + " deg"};
}

// ---------------------------------------------------------------------------
// 9. Image metrics.

/// Direct-summation SSIM: each window's statistics summed with the full 2-D kernel.
inline double ssim_direct(const Vector& x, const Vector& ref, const ImageGeometry& g) {
  const int n = 11;
  const double sig = 1.5;
  std::vector<std::vector<double>> w(n, std::vector<double>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2.0 * sig * sig));
      total += w[i][j];
    }
  }
  const double c1 = 1e-4;
  const double c2 = 9e-4;
  double acc = 0.0;
  for (int ch = 0; ch < g.channels; ++ch) {
    double sum = 0.0;
    int count = 0;
    for (int r = 0; r + n <= g.height; ++r) {
      for (int c = 0; c + n <= g.width; ++c) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            const double wt = w[i][j] / total;
            const double a = x[g.index(ch, r + i, c + j)];
            const double b = ref[g.index(ch, r + i, c + j)];
            ma += wt * a;
            mb += wt * b;
            saa += wt * a * a;
            sbb += wt * b * b;
            sab += wt * a * b;
          }
        }
        const double va = saa - ma * ma;
        const double vb = sbb - mb * mb;
        const double cv = sab - ma * mb;
        sum += (2 * ma * mb + c1) * (2 * cv + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
    acc += sum / count;
  }
  return acc / g.channels;
}

inline Outcome metric_correctness() {
  Rng rng = make_rng(909, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const ImageGeometry g{24, 20, 3};
  const Vector x = Vector::NullaryExpr(g.size(), [&]() { return 0.8 * unit(rng); });
  const Vector y = Vector::NullaryExpr(g.size(), [&]() { return unit(rng); });
  const double p1 = psnr((x.array() + 0.1).matrix(), x);
  const double p2 = psnr((x.array() + 0.5).matrix(), x);
  const double self = ssim(x, x, g);
  const double fast = ssim(x, y, g);
  const double direct = ssim_direct(x, y, g);
  const bool ok = std::abs(p1 - 20.0) < 1e-10 && std::abs(p2 - 10.0 * std::log10(4.0)) < 1e-10 &&
                  self == 1.0 && std::abs(fast - direct) < 1e-9;
  return {ok, "psnr(+0.1) " + detail::fmt("%.12g", p1) + " dB, psnr(+0.5) " + detail::fmt("%.12g", p2) +
                  " dB, ssim(x,x) " + detail::fmt("%.17g", self) + ", ssim dual-impl diff " +
                  detail::fmt("%.3g", std::abs(fast - direct))};
}

// ---------------------------------------------------------------------------
// 10. Identical config and seeds give byte-identical outputs.

inline std::vector<std::pair<std::string, std::string>> read_tree(const std::filesystem::path& root) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "timing.json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    files.emplace_back(std::filesystem::relative(e.path(), root).string(),
                       std::string(std::istreambuf_iterator<char>(in), {}));
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline Outcome determinism() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "spgd_check_XXXXXX").string();
  if (mkdtemp(tmpl.data()) == nullptr) return {false, "cannot create a temporary directory"};
  const std::filesystem::path root(tmpl);
  const std::string text = R"({
    "task": "inpainting", "method": "spgd", "seeds": [0, 1, 2], "diagnostics": true,
    "image": {"width": 12, "height": 12, "channels": 1},
    "prior": {"kind": "image_gmm", "synthetic_templates": {"count": 4, "seed": 3}, "cov_scalar": 0.01},
    "operator": {"kind": "mask", "keep_fraction": 0.3, "seed": 2},
    "schedule": {"num_steps": 30}, "guidance": {"zeta": 1.0}
  })";
  // Same config, same output directory: the second run must rewrite every byte identically.
  std::vector<std::vector<std::pair<std::string, std::string>>> trees;
  for (int run = 0; run < 2; ++run) {
    RunConfig c = parse_config_text(text);
    c.output_dir = (root / "out").string();
    run_experiment(c);
    trees.push_back(read_tree(root / "out"));
  }
  std::error_code ec;
  std::filesystem::remove_all(root, ec);
  const bool same = !trees[0].empty() && trees[0] == trees[1];
  return {same, std::to_string(trees[0].size()) + " output files compared, " +
                    (same ? "all byte-identical" : "differences found")};
}

// ---------------------------------------------------------------------------

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

inline std::vector<Criterion> criteria() {
  return {
      {1, "DPS decomposition equivalence", 10, dps_decomposition},
      {2, "gradient exactness", 30, gradient_exactness},
      {3, "descent on quadratics", 5, quadratic_descent},
      {4, "descent on mixtures", 120, mixture_descent},
      {5, "ADM exact behaviours", 5, adm_behaviours},
      {6, "posterior oracle convergence", 120, posterior_convergence},
      {7, "warm-up allocation trend", 600, warmup_allocation},
      {8, "gradient-angle trends", 300, angle_trends},
      {9, "metric correctness", 5, metric_correctness},
      {10, "determinism", 60, determinism},
  };
}

inline CriterionResult run_criterion(const Criterion& c) {
  CriterionResult r{c.id, c.name, false, "", 0.0, c.budget_seconds};
  const auto start = std::chrono::steady_clock::now();
  try {
    const Outcome o = c.run();
    r.passed = o.passed;
    r.detail = o.detail;
  } catch (const std::exception& e) {
    r.detail = std::string("threw: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (r.seconds >= r.budget_seconds) {
    r.passed = false;
    r.detail += "; over time budget";
  }
  return r;
}

inline std::string format_result(const CriterionResult& r) {
  char head[160];
  std::snprintf(head, sizeof head, "[%s] %2d %s (%.2fs / %.0fs): ", r.passed ? "PASS" : "FAIL", r.id,
                r.name.c_str(), r.seconds, r.budget_seconds);
  return head + r.detail;
}

/// Runs the selected criteria (all when `ids` is empty), one line each.
inline bool run_all(std::ostream& out, const std::vector<int>& ids = {}) {
  bool all = true;
  for (const auto& c : criteria()) {
    if (!ids.empty() && std::find(ids.begin(), ids.end(), c.id) == ids.end()) continue;
    const CriterionResult r = run_criterion(c);
    out << format_result(r) << std::endl;
    all = all && r.passed;
  }
  return all;
}

}  // namespace spgd::selfcheck
