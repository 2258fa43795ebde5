#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "geokernel/irl.hpp"

namespace geokernel::gradcheck {

using geometry::KernelTemplate;
using geometry::TemplateKind;
using kernelnet::KernelParameters;
using numeric::Tape;
using numeric::Tensor;
using trace::Frame;

/// One finite-difference (or quadrature) verification suite outcome.
struct SuiteResult {
  std::string name;
  double max_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max(std::fabs(a) + std::fabs(b), 1e-8);
}

// ---------------------------------------------------------------------------
// Quadrature oracles over the truncated normal (test-side evaluation of the
// expectations the Monte-Carlo estimators target).

/// E[exp(X)] for X ~ truncated N(mu, sigma^2) on [-1, 1], by composite
/// Simpson in the standardized variable.
inline double truncnorm_exp_expectation(double mu, double sigma) {
  stats::TruncatedNormal d(mu, sigma);
  double zlo = std::max(d.z_lo, -12.0);
  double zhi = std::min(d.z_hi, 12.0);
  const int n = 4096;  // even
  double h = (zhi - zlo) / n;
  auto f = [&](double z) { return std::exp(mu + sigma * z) * stats::normal_pdf(z); };
  double acc = f(zlo) + f(zhi);
  for (int i = 1; i < n; ++i) acc += f(zlo + h * i) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0 / d.mass;
}

/// dZ/dmu by central difference of the quadrature (independent of the
/// score-function route).
inline double truncnorm_exp_expectation_dmu(double mu, double sigma, double eps = 1e-6) {
  return (truncnorm_exp_expectation(mu + eps, sigma) -
          truncnorm_exp_expectation(mu - eps, sigma)) /
         (2 * eps);
}

// ---------------------------------------------------------------------------

namespace detail {

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-2.0, 2.0);
  return t;
}

inline Frame random_point_frame(int frame_index, int n_points, int descriptor_dim, Rng& rng) {
  Frame fr;
  fr.frame_index = frame_index;
  for (int i = 0; i < n_points; ++i) {
    std::vector<double> desc(static_cast<std::size_t>(descriptor_dim));
    for (double& x : desc) x = rng.uniform(-1, 1);
    fr.features.push_back(
        geometry::make_point2d(i, rng.uniform(0, 300), rng.uniform(0, 300), std::move(desc)));
  }
  return fr;
}

inline std::vector<double> flatten(const std::vector<Tensor>& grads) {
  std::vector<double> out;
  for (const Tensor& t : grads)
    out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

inline void perturb(KernelParameters& params, const std::vector<double>& dir, double eps) {
  auto view = params.flat_view();
  for (std::size_t i = 0; i < view.size(); ++i) *view[i] += eps * dir[i];
}

}  // namespace detail

/// Per-primitive-op gradient check against central finite differences on
/// random inputs in [-2, 2].
inline std::vector<SuiteResult> check_primitive_ops(std::uint64_t seed, double tol = 1e-6) {
  Rng rng(mix_seed({seed, 0x6f707321ULL}));
  struct OpCase {
    std::string name;
    std::vector<Tensor> inputs;
    std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)> build;
  };
  std::vector<OpCase> cases;
  cases.push_back({"matmul",
                   {detail::random_tensor({3, 4}, rng), detail::random_tensor({4, 2}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.sum(t.matmul(in[0], in[1]));
                   }});
  cases.push_back({"add",
                   {detail::random_tensor({3, 2}, rng), detail::random_tensor({3, 2}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.l2norm(t.add(in[0], in[1]));
                   }});
  cases.push_back({"mul",
                   {detail::random_tensor({3, 2}, rng), detail::random_tensor({3, 2}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.sum(t.mul(in[0], in[1]));
                   }});
  cases.push_back({"scale", {detail::random_tensor({5, 1}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.l2norm(t.scale(in[0], 1.3));
                   }});
  cases.push_back({"sigmoid", {detail::random_tensor({5, 1}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.sum(t.sigmoid(in[0]));
                   }});
  cases.push_back({"tanh", {detail::random_tensor({5, 1}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.sum(t.tanh(in[0]));
                   }});
  cases.push_back({"softmax",
                   {detail::random_tensor({6, 1}, rng), detail::random_tensor({6, 1}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.sum(t.mul(t.softmax(in[0]), in[1]));
                   }});
  cases.push_back({"sum", {detail::random_tensor({3, 3}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.sum(t.mul(in[0], in[0]));
                   }});
  cases.push_back({"concat",
                   {detail::random_tensor({2, 1}, rng), detail::random_tensor({4, 1}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.l2norm(t.concat({in[0], in[1]}));
                   }});
  cases.push_back({"l2norm", {detail::random_tensor({6, 1}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.l2norm(in[0]);
                   }});
  cases.push_back({"clamp", {Tensor({4, 1}, {0.4, -0.8, 1.7, -1.96})},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.sum(t.clamp(in[0], -1.9, 1.9));
                   }});

  std::vector<SuiteResult> results;
  for (const OpCase& c : cases) {
    auto eval = [&](const std::vector<Tensor>& inputs) {
      Tape tape;
      std::vector<Tape::NodeId> nodes;
      for (const Tensor& t : inputs) nodes.push_back(tape.parameter(t));
      return tape.scalar_value(c.build(tape, nodes));
    };
    Tape tape;
    std::vector<Tape::NodeId> nodes;
    for (const Tensor& t : c.inputs) nodes.push_back(tape.parameter(t));
    tape.backward(c.build(tape, nodes));
    double worst = 0;
    for (std::size_t ti = 0; ti < c.inputs.size(); ++ti)
      for (std::size_t ei = 0; ei < c.inputs[ti].numel(); ++ei) {
        std::vector<Tensor> probe = c.inputs;
        double eps = 1e-5;
        probe[ti][ei] += eps;
        double hi = eval(probe);
        probe[ti][ei] -= 2 * eps;
        double lo = eval(probe);
        worst = std::max(worst, rel_err(tape.grad(nodes[ti])[ei], (hi - lo) / (2 * eps)));
      }
    results.push_back({"op " + c.name, worst, tol, worst < tol, ""});
  }
  return results;
}

/// Frame pipeline gradient check: d|Ec|/dtheta for a frozen random frame.
inline SuiteResult check_frame_gradient(std::uint64_t seed, double tol = 1e-5) {
  Rng rng(mix_seed({seed, 0x4563ULL}));
  KernelTemplate tmpl = KernelTemplate::of(TemplateKind::p2p);
  Frame frame = detail::random_point_frame(0, 5, 6, rng);
  KernelParameters params = KernelParameters::init(TemplateKind::p2p, 12, 3, 6, seed ^ 0x11);

  auto ec_norm = [&](const KernelParameters& p) {
    kernelnet::FrameEval ev = kernelnet::evaluate_frame(frame, tmpl, p, 2000, 10, 1);
    return numeric::l2_norm(ev.control_error);
  };

  // Analytic gradient: softmax/aggregate head over per-instance tapes.
  kernelnet::FrameRuns runs = kernelnet::run_frame_instances(frame, tmpl, params, 2000, 1);
  Tape head;
  auto s = head.parameter(Tensor::column(runs.scores));
  auto g = head.softmax(s);
  Tensor E(std::vector<std::size_t>{2, runs.instances.size()});
  for (std::size_t i = 0; i < runs.instances.size(); ++i)
    for (std::size_t r = 0; r < 2; ++r) E.at(r, i) = runs.instances[i].error[r];
  auto norm = head.l2norm(head.matmul(head.constant(E), g));
  head.backward(norm);
  for (std::size_t i = 0; i < runs.runs.size(); ++i)
    runs.runs[i].tape.backward(runs.runs[i].score_node, head.grad(s)[i]);
  std::vector<Tensor> grads = params.zero_grads();
  for (const auto& run : runs.runs) kernelnet::add_param_grads(run, grads);
  std::vector<double> flat = detail::flatten(grads);

  // Finite differences elementwise on a spread of parameters plus one
  // directional probe along the gradient itself.
  Rng pick(mix_seed({seed, 0x4564ULL}));
  double worst = 0;
  auto view = params.flat_view();
  for (int k = 0; k < 60; ++k) {
    std::size_t i = pick.index(view.size());
    double eps = 1e-6;
    double saved = *view[i];
    *view[i] = saved + eps;
    double hi = ec_norm(params);
    *view[i] = saved - eps;
    double lo = ec_norm(params);
    *view[i] = saved;
    worst = std::max(worst, rel_err(flat[i], (hi - lo) / (2 * eps)));
  }
  double gnorm = std::sqrt([&] {
    double acc = 0;
    for (double v : flat) acc += v * v;
    return acc;
  }());
  if (gnorm > 0) {
    std::vector<double> dir(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) dir[i] = flat[i] / gnorm;
    double eps = 1e-6;
    detail::perturb(params, dir, eps);
    double hi = ec_norm(params);
    detail::perturb(params, dir, -2 * eps);
    double lo = ec_norm(params);
    detail::perturb(params, dir, eps);
    worst = std::max(worst, rel_err(gnorm, (hi - lo) / (2 * eps)));
  }
  return {"frame |Ec| gradient", worst, tol, worst < tol, ""};
}

/// Truncated-normal score check: the analytic d/dmu log p against central
/// finite differences of an independently written log-density, over the
/// mu/sigma grid. `score_fn` is swappable so a corrupted formula is caught.
inline SuiteResult check_truncnorm_score(
    const std::function<double(double, double, double)>& score_fn =
        [](double x, double mu, double s) { return irl::grad_log_truncnorm(x, mu, s); },
    double tol = 1e-6) {
  auto oracle_logpdf = [](double x, double mu, double sigma) {
    double z = (x - mu) / sigma;
    double mass = stats::normal_cdf((1.0 - mu) / sigma) - stats::normal_cdf((-1.0 - mu) / sigma);
    return std::log(stats::normal_pdf(z) / (sigma * mass));
  };
  double worst = 0;
  std::string worst_at;
  for (double sigma : {0.2, 0.55, 1.0}) {
    for (double mu = -0.9; mu <= 0.9001; mu += 0.2) {
      for (double x : {-0.95, -0.5, 0.0, 0.3, 0.8}) {
        double eps = 1e-5;
        double fd = (oracle_logpdf(x, mu + eps, sigma) - oracle_logpdf(x, mu - eps, sigma)) /
                    (2 * eps);
        double err = std::fabs(score_fn(x, mu, sigma) - fd);
        if (err > worst) {
          worst = err;
          worst_at = "mu=" + std::to_string(mu) + " sigma=" + std::to_string(sigma) +
                     " x=" + std::to_string(x);
        }
      }
    }
  }
  return {"truncated-normal score", worst, tol, worst < tol, worst_at};
}

/// Full training-gradient check with frozen Monte-Carlo draws. The oracle
/// loss importance-weights the frozen draws, so its exact derivative at the
/// base point is the score-function gradient the implementation computes;
/// central differences of it must match the analytic gradient.
inline SuiteResult check_loss_gradient(int settings, int samples_per_setting, int directions,
                                       std::uint64_t seed, double tol = 1e-4) {
  double worst = 0;
  std::string worst_at;
  KernelTemplate tmpl = KernelTemplate::of(TemplateKind::p2p);
  for (int s = 0; s < settings; ++s) {
    Rng scene_rng(mix_seed({seed, 0x6c6f7373ULL, static_cast<std::uint64_t>(s)}));
    KernelParameters params =
        KernelParameters::init(TemplateKind::p2p, 16, 3, 8, mix_seed({seed, 7u, static_cast<std::uint64_t>(s)}));
    irl::ExpertModel model;
    model.sigma0 = 0.55;
    model.beta = 0.02 + 0.02 * (s % 3);
    model.lambda = (s % 2) ? 0.1 : 0.0;
    model.s1 = model.s2 = 64;

    for (int k = 0; k < samples_per_setting; ++k) {
      Frame a = detail::random_point_frame(0, 6, 8, scene_rng);
      Frame b = detail::random_point_frame(1, 6, 8, scene_rng);
      irl::SampleContext ctx;
      ctx.top_p = 4;
      ctx.cap = 2000;
      ctx.draw_seed = mix_seed({seed, 0x6477ULL, static_cast<std::uint64_t>(s),
                                static_cast<std::uint64_t>(k)});
      irl::SampleResult res = irl::sample_loss_grad(a, b, tmpl, params, model, ctx);
      if (res.skipped) continue;

      // Frozen draws at the base point.
      double mu0 = res.reward_reg;
      Rng draw_rng(ctx.draw_seed);
      irl::PartitionEstimate pe = irl::partition_estimate(mu0, model, draw_rng);
      auto oracle_logpdf = [](double x, double mu, double sigma) {
        double z = (x - mu) / sigma;
        double mass =
            stats::normal_cdf((1.0 - mu) / sigma) - stats::normal_cdf((-1.0 - mu) / sigma);
        return std::log(stats::normal_pdf(z) / (sigma * mass));
      };
      auto frozen_loss = [&](const KernelParameters& p) {
        irl::SampleForward f = irl::sample_reward(a, b, tmpl, p, model, ctx);
        double z = 0;
        for (int j = 0; j < model.s1; ++j) {
          double r = pe.samples[static_cast<std::size_t>(j)];
          z += std::exp(r) * std::exp(oracle_logpdf(r, f.reward_reg, model.sigma0) -
                                      oracle_logpdf(r, mu0, model.sigma0));
        }
        z /= model.s1;
        return f.reward_reg - std::log(z);
      };

      std::vector<double> flat = detail::flatten(res.grads);
      double gnorm = 0;
      for (double v : flat) gnorm += v * v;
      gnorm = std::sqrt(gnorm);
      if (gnorm == 0) continue;
      Rng dir_rng(mix_seed({seed, 0x646972ULL, static_cast<std::uint64_t>(s),
                            static_cast<std::uint64_t>(k)}));
      for (int d = 0; d < directions; ++d) {
        std::vector<double> dir(flat.size());
        if (d == 0) {
          for (std::size_t i = 0; i < flat.size(); ++i) dir[i] = flat[i] / gnorm;
        } else {
          double n = 0;
          for (double& x : dir) {
            x = dir_rng.normal();
            n += x * x;
          }
          n = std::sqrt(n);
          for (double& x : dir) x /= n;
        }
        double analytic = 0;
        for (std::size_t i = 0; i < flat.size(); ++i) analytic += flat[i] * dir[i];
        double eps = 1e-5;
        KernelParameters probe = params;
        detail::perturb(probe, dir, eps);
        double hi = frozen_loss(probe);
        detail::perturb(probe, dir, -2 * eps);
        double lo = frozen_loss(probe);
        double fd = (hi - lo) / (2 * eps);
        double err = rel_err(analytic, fd);
        if (err > worst) {
          worst = err;
          worst_at = "setting " + std::to_string(s) + " sample " + std::to_string(k) +
                     " direction " + std::to_string(d);
        }
      }
    }
  }
  return {"frozen-draw loss gradient", worst, tol, worst < tol, worst_at};
}

/// Degenerate-support check: with sigma0 -> 0 the partition multiplier
/// 1 - (dZ/dmu)/Z vanishes (the loss is constant on unrestricted support).
/// Evaluated on the quadrature expectations the estimators target.
inline SuiteResult check_degenerate_multiplier(double sigma0 = 1e-4, double tol = 1e-3) {
  double worst = 0;
  for (double mu : {-0.9, -0.5, 0.0, 0.4, 0.9}) {
    double z = truncnorm_exp_expectation(mu, sigma0);
    double dz = truncnorm_exp_expectation_dmu(mu, sigma0);
    worst = std::max(worst, std::fabs(1.0 - dz / z));
  }
  return {"degenerate-support multiplier", worst, tol, worst < tol,
          "sigma0=" + std::to_string(sigma0)};
}

struct Options {
  int settings = 20;
  int samples_per_setting = 5;
  int directions = 2;
  std::uint64_t seed = 42;
};

inline std::vector<SuiteResult> run_all(const Options& opt = {}) {
  std::vector<SuiteResult> results = check_primitive_ops(opt.seed);
  results.push_back(check_frame_gradient(opt.seed));
  results.push_back(check_truncnorm_score());
  results.push_back(
      check_loss_gradient(opt.settings, opt.samples_per_setting, opt.directions, opt.seed));
  results.push_back(check_degenerate_multiplier());
  return results;
}

inline bool all_pass(const std::vector<SuiteResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return true;
}

}  // namespace geokernel::gradcheck
