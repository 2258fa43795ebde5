#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geokernel/kernelnet.hpp"
#include "geokernel/stats.hpp"

namespace geokernel::irl {

using geometry::KernelTemplate;
using geometry::TemplateKind;
using kernelnet::FrameRuns;
using kernelnet::KernelParameters;
using kernelnet::SelectOutResult;
using numeric::Tensor;
using trace::DemonstrationTrace;
using trace::Frame;

/// Reward of one state change from the control-error trend:
/// r = 2 / (1 + exp(beta * delta)) - 1, with delta = |Ec_{t+1}| - |Ec_t|.
/// Odd in delta, strictly decreasing, bounded in (-1, 1).
inline double reward(double delta_ec, double beta) {
  if (!(beta > 0.0)) fail("reward: beta must be positive");
  if (!std::isfinite(delta_ec)) fail("reward: non-finite control-error delta");
  return 2.0 / (1.0 + std::exp(beta * delta_ec)) - 1.0;
}

/// Applies the residual-sum-of-weights penalty to a reward and clamps back
/// into [-1, 1] so the expert model's domain still holds.
inline double regularized_reward(double r, double rsw_t, double rsw_next, double lambda) {
  if (rsw_t < 0 || rsw_t > 1 || rsw_next < 0 || rsw_next > 1)
    fail("regularized_reward: RSW outside [0,1]");
  double out = r - lambda * 0.5 * (rsw_t + rsw_next);
  return std::min(1.0, std::max(-1.0, out));
}

/// Truncated-normal expert model of InMaxEnt IRL together with the training
/// hyperparameters that feed it. `alpha_label` records the demonstrator
/// confidence label from which sigma0 would be derived in the source
/// formulation; it is carried through untouched.
struct ExpertModel {
  double sigma0 = 0.55;
  double beta = 1.0;
  double lambda = 0.1;
  int s1 = 64;
  int s2 = 64;
  std::string alpha_label;

  void validate() const {
    if (!(sigma0 > 0)) fail("expert model: sigma0 must be positive");
    if (!(beta > 0)) fail("expert model: beta must be positive");
    if (lambda < 0) fail("expert model: lambda must be >= 0");
    if (s1 < 1 || s2 < 1) fail("expert model: s1 and s2 must be >= 1");
  }
};

/// One draw from the truncated normal N(mu, sigma0^2) restricted to [-1, 1].
inline double truncnorm_sample(double mu, double sigma0, Rng& rng) {
  if (mu < -1.0 || mu > 1.0) fail("truncnorm_sample: mu outside [-1,1]");
  return stats::TruncatedNormal(mu, sigma0).sample(rng.uniform());
}

/// d/dmu log p(x; mu, sigma0) of the truncated normal on [-1, 1].
inline double grad_log_truncnorm(double x, double mu, double sigma0) {
  return stats::TruncatedNormal(mu, sigma0).score_mu(x);
}

/// Monte-Carlo partition estimate Z ~= mean(exp(r_j)) over s1 draws from the
/// expert distribution around r_star. Draws are returned so the gradient
/// estimator can reuse them (one shared draw set per sample).
struct PartitionEstimate {
  double z = 0.0;
  std::vector<double> samples;
};

inline PartitionEstimate partition_estimate(double r_star, const ExpertModel& model, Rng& rng) {
  model.validate();
  stats::TruncatedNormal dist(r_star, model.sigma0);
  PartitionEstimate pe;
  int n = std::max(model.s1, model.s2);
  pe.samples.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pe.samples[static_cast<std::size_t>(i)] = dist.sample(rng.uniform());
  double total = 0;
  for (int i = 0; i < model.s1; ++i) total += std::exp(pe.samples[static_cast<std::size_t>(i)]);
  pe.z = total / model.s1;
  return pe;
}

/// Score-function (log-derivative) estimate of dZ/dr_star over s2 of the
/// shared draws: mean(exp(r_j) * d/dmu log p(r_j)).
inline double grad_partition(double r_star, const ExpertModel& model,
                             std::span<const double> samples) {
  model.validate();
  if (samples.empty()) fail("grad_partition: no samples");
  stats::TruncatedNormal dist(r_star, model.sigma0);
  std::size_t n = std::min(samples.size(), static_cast<std::size_t>(model.s2));
  double total = 0;
  for (std::size_t i = 0; i < n; ++i)
    total += std::exp(samples[i]) * dist.score_mu(samples[i]);
  return total / static_cast<double>(n);
}

/// A consecutive frame pair of one trace.
struct StateChangeSample {
  const Frame* frame_a = nullptr;
  const Frame* frame_b = nullptr;
  std::int64_t trace_id = 0;
  std::size_t step = 0;
};

struct SampleContext {
  std::size_t top_p = 10;
  std::size_t cap = 2000;
  std::uint64_t enum_seed_a = 0;
  std::uint64_t enum_seed_b = 0;
  std::uint64_t draw_seed = 0;
};

struct SampleResult {
  bool skipped = false;
  std::string skip_reason;
  double loss = 0.0;
  double reward_raw = 0.0;
  double reward_reg = 0.0;
  double rsw_a = 0.0, rsw_b = 0.0;
  double z = 0.0;
  double multiplier = 0.0;
  SelectOutResult sel_a, sel_b;
  std::vector<Tensor> grads;  // KernelParameters::named() order
};

namespace detail {

// d x m matrix whose columns are the per-instance control errors.
inline Tensor error_matrix(const FrameRuns& fr, int error_dim) {
  std::size_t d = static_cast<std::size_t>(error_dim);
  std::size_t m = fr.instances.size();
  Tensor E({d, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t r = 0; r < d; ++r) E.at(r, i) = fr.instances[i].error[r];
  return E;
}

inline Tensor top_indicator(const SelectOutResult& sel, std::size_t m) {
  Tensor ind({1, m});
  for (std::size_t i : sel.top) ind[i] = 1.0;
  return ind;
}

}  // namespace detail

/// Forward-only regularized reward of one state change (no tapes kept).
struct SampleForward {
  bool skipped = false;
  double reward_raw = 0.0;
  double reward_reg = 0.0;
  double rsw_a = 0.0, rsw_b = 0.0;
};

inline SampleForward sample_reward(const Frame& frame_a, const Frame& frame_b,
                                   const KernelTemplate& tmpl, const KernelParameters& params,
                                   const ExpertModel& model, const SampleContext& ctx) {
  SampleForward out;
  kernelnet::FrameEval a =
      kernelnet::evaluate_frame(frame_a, tmpl, params, ctx.cap, ctx.top_p, ctx.enum_seed_a);
  kernelnet::FrameEval b =
      kernelnet::evaluate_frame(frame_b, tmpl, params, ctx.cap, ctx.top_p, ctx.enum_seed_b);
  if (a.instances.empty() || b.instances.empty()) {
    out.skipped = true;
    return out;
  }
  out.rsw_a = a.selection.rsw;
  out.rsw_b = b.selection.rsw;
  double delta = numeric::l2_norm(b.control_error) - numeric::l2_norm(a.control_error);
  out.reward_raw = reward(delta, model.beta);
  out.reward_reg = regularized_reward(out.reward_raw, out.rsw_a, out.rsw_b, model.lambda);
  return out;
}

/// Loss term and parameter gradient of one observed state change.
///
/// The differentiable path runs reward -> |Ec| of both frames -> softmax ->
/// message passing on one tape per instance plus a small shared head; the
/// partition multiplier (1 - dZ/Z) from the Monte-Carlo estimators scales
/// the backward seed, which realizes the full chain-rule gradient of
/// (r* - log Z) w.r.t. every kernel weight.
inline SampleResult sample_loss_grad(const Frame& frame_a, const Frame& frame_b,
                                     const KernelTemplate& tmpl, const KernelParameters& params,
                                     const ExpertModel& model, const SampleContext& ctx) {
  using NodeId = numeric::Tape::NodeId;
  model.validate();
  SampleResult res;

  FrameRuns runs_a = kernelnet::run_frame_instances(frame_a, tmpl, params, ctx.cap, ctx.enum_seed_a);
  FrameRuns runs_b = kernelnet::run_frame_instances(frame_b, tmpl, params, ctx.cap, ctx.enum_seed_b);
  if (runs_a.instances.empty() || runs_b.instances.empty()) {
    res.skipped = true;
    res.skip_reason = runs_a.instances.empty() ? "no instances in first frame"
                                               : "no instances in second frame";
    return res;
  }

  res.sel_a = kernelnet::select_out(runs_a.scores, ctx.top_p);
  res.sel_b = kernelnet::select_out(runs_b.scores, ctx.top_p);
  res.rsw_a = res.sel_a.rsw;
  res.rsw_b = res.sel_b.rsw;

  // Shared head: scores enter as parameters so its backward yields the
  // per-instance seeds for the message-passing tapes.
  numeric::Tape head;
  NodeId s_a = head.parameter(Tensor::column(runs_a.scores));
  NodeId s_b = head.parameter(Tensor::column(runs_b.scores));
  NodeId g_a = head.softmax(s_a);
  NodeId g_b = head.softmax(s_b);
  NodeId ec_a = head.matmul(head.constant(detail::error_matrix(runs_a, tmpl.error_dim)), g_a);
  NodeId ec_b = head.matmul(head.constant(detail::error_matrix(runs_b, tmpl.error_dim)), g_b);
  NodeId delta = head.add(head.l2norm(ec_b), head.scale(head.l2norm(ec_a), -1.0));
  NodeId raw = head.add(head.scale(head.sigmoid(head.scale(delta, -model.beta)), 2.0),
                        head.constant(Tensor::scalar(-1.0)));
  NodeId rsw_a = head.add(
      head.constant(Tensor::scalar(1.0)),
      head.scale(head.matmul(head.constant(detail::top_indicator(res.sel_a, runs_a.scores.size())), g_a),
                 -1.0));
  NodeId rsw_b = head.add(
      head.constant(Tensor::scalar(1.0)),
      head.scale(head.matmul(head.constant(detail::top_indicator(res.sel_b, runs_b.scores.size())), g_b),
                 -1.0));
  NodeId reg = head.clamp(
      head.add(raw, head.scale(head.add(rsw_a, rsw_b), -model.lambda * 0.5)), -1.0, 1.0);

  res.reward_raw = head.scalar_value(raw);
  res.reward_reg = head.scalar_value(reg);

  Rng draw_rng(ctx.draw_seed);
  PartitionEstimate pe = partition_estimate(res.reward_reg, model, draw_rng);
  double grad_z = grad_partition(res.reward_reg, model, pe.samples);
  res.z = pe.z;
  res.multiplier = 1.0 - grad_z / pe.z;
  res.loss = res.reward_reg - std::log(pe.z);

  head.backward(reg, res.multiplier);
  const Tensor& seed_a = head.grad(s_a);
  const Tensor& seed_b = head.grad(s_b);

  parallel_for(runs_a.runs.size() + runs_b.runs.size(), [&](std::size_t i) {
    if (i < runs_a.runs.size()) {
      kernelnet::InstanceRun& run = runs_a.runs[i];
      run.tape.backward(run.score_node, seed_a[i]);
    } else {
      kernelnet::InstanceRun& run = runs_b.runs[i - runs_a.runs.size()];
      run.tape.backward(run.score_node, seed_b[i - runs_a.runs.size()]);
    }
  });

  res.grads = params.zero_grads();
  for (const auto& run : runs_a.runs) kernelnet::add_param_grads(run, res.grads);
  for (const auto& run : runs_b.runs) kernelnet::add_param_grads(run, res.grads);
  return res;
}

/// Adaptive-moment gradient ascent, stepped once per state-change sample.
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Tensor> m, v;
  std::size_t step = 0;

  void init_like(const KernelParameters& p) {
    m = p.zero_grads();
    v = p.zero_grads();
    step = 0;
  }

  void ascend(KernelParameters& p, const std::vector<Tensor>& grads) {
    ++step;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    auto named = p.named();
    for (std::size_t t = 0; t < named.size(); ++t) {
      Tensor& w = *named[t].second;
      for (std::size_t i = 0; i < w.numel(); ++i) {
        double g = grads[t][i];
        m[t][i] = beta1 * m[t][i] + (1.0 - beta1) * g;
        v[t][i] = beta2 * v[t][i] + (1.0 - beta2) * g * g;
        w[i] += lr * (m[t][i] / c1) / (std::sqrt(v[t][i] / c2) + eps);
      }
    }
  }
};

struct TrainConfig {
  int hidden_dim = 64;
  int layers = 5;
  std::size_t top_p = 10;
  std::size_t cap = 2000;
  double lambda = 0.1;
  double sigma0 = 0.55;
  bool beta_auto = true;
  double beta = 1.0;       // used when beta_auto is false
  int s1 = 64;
  int s2 = 64;
  double lr = 1e-3;
  int epochs = 60;
  std::uint64_t seed = 1;
  double plateau_tol = 0.0;  // 0 disables early stopping
  int plateau_patience = 5;
  std::string alpha_label;

  ExpertModel expert(double beta_value) const {
    ExpertModel m;
    m.sigma0 = sigma0;
    m.beta = beta_value;
    m.lambda = lambda;
    m.s1 = s1;
    m.s2 = s2;
    m.alpha_label = alpha_label;
    return m;
  }
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double mean_rsw = 0.0;
  std::optional<double> top1_accuracy;
  std::size_t skipped = 0;
};

struct TrainState {
  KernelParameters params;
  Adam optimizer;
  double beta = 1.0;
  int epoch = 0;  // epochs completed
  std::vector<EpochStats> history;
  bool diverged = false;
};

inline std::uint64_t frame_enum_seed(std::uint64_t seed, std::int64_t trace_id, int frame_index) {
  return mix_seed({seed, 0x66726d65ULL, static_cast<std::uint64_t>(trace_id),
                   static_cast<std::uint64_t>(frame_index)});
}

/// Reward scale calibration: beta = ln(3) / median(|delta |E_i||) over the
/// per-instance error norms of instances persisting across consecutive
/// frames, so the median moving step maps to reward +-0.5. Near-zero deltas
/// (static feature pairs) are excluded from the median; a trace with no
/// moving instances falls back to beta = 1.
inline double compute_beta(const DemonstrationTrace& tr, const KernelTemplate& tmpl,
                           std::size_t cap, std::uint64_t seed) {
  if (tr.frames.empty()) fail("compute_beta: empty trace");
  std::vector<double> deltas;
  std::map<std::vector<std::int64_t>, double> prev;
  for (const Frame& fr : tr.frames) {
    kernelnet::EnumerationResult en = kernelnet::enumerate_instances(
        fr, tmpl, cap, frame_enum_seed(seed, tr.trace_id, fr.frame_index));
    std::map<std::vector<std::int64_t>, double> norms;
    for (kernelnet::GraphInstance& inst : en.instances) {
      std::vector<const geometry::GeometricFeature*> feats;
      for (std::size_t p : inst.node_index) feats.push_back(&fr.features[p]);
      norms[inst.ids] = numeric::l2_norm(geometry::instance_error(tmpl, feats));
    }
    for (const auto& [ids, norm] : norms) {
      auto it = prev.find(ids);
      if (it != prev.end()) {
        double d = std::fabs(norm - it->second);
        if (d > 1e-9) deltas.push_back(d);
      }
    }
    prev = std::move(norms);
  }
  if (deltas.empty()) return 1.0;
  std::sort(deltas.begin(), deltas.end());
  std::size_t n = deltas.size();
  double median = n % 2 ? deltas[n / 2] : 0.5 * (deltas[n / 2 - 1] + deltas[n / 2]);
  if (median < 1e-12) return 1.0;
  return std::log(3.0) / median;
}

namespace detail {

inline std::vector<StateChangeSample> collect_samples(std::span<const DemonstrationTrace> traces) {
  std::vector<StateChangeSample> samples;
  for (const DemonstrationTrace& tr : traces)
    for (std::size_t t = 0; t + 1 < tr.frames.size(); ++t)
      samples.push_back({&tr.frames[t], &tr.frames[t + 1], tr.trace_id, t});
  return samples;
}

inline double labeled_top1_accuracy(std::span<const DemonstrationTrace> traces,
                                    const KernelTemplate& tmpl, const KernelParameters& params,
                                    std::size_t cap, std::size_t top_p, std::uint64_t seed,
                                    bool& any_labeled) {
  std::size_t evaluated = 0, correct = 0;
  for (const DemonstrationTrace& tr : traces) {
    for (const Frame& fr : tr.frames) {
      auto labels = kernelnet::compatible_labels(fr, tmpl);
      if (labels.empty()) continue;
      kernelnet::FrameEval ev = kernelnet::evaluate_frame(
          fr, tmpl, params, cap, top_p, frame_enum_seed(seed, tr.trace_id, fr.frame_index));
      if (ev.instances.empty()) continue;
      ++evaluated;
      const kernelnet::GraphInstance& top = ev.instances[ev.selection.top[0]];
      if (kernelnet::instance_matches_any_label(top, tmpl, labels)) ++correct;
    }
  }
  any_labeled = evaluated > 0;
  return evaluated ? static_cast<double>(correct) / static_cast<double>(evaluated) : 0.0;
}

}  // namespace detail

/// Optimizes one skill kernel on demonstration traces: per epoch, the
/// shuffled state-change samples each contribute one gradient-ascent step on
/// r* - log Z. Divergence aborts with the last finite state preserved.
inline TrainState train(std::span<const DemonstrationTrace> traces, TemplateKind kind,
                        const TrainConfig& config, const TrainState* resume_from = nullptr,
                        const std::function<void(const EpochStats&)>& on_epoch = {}) {
  KernelTemplate tmpl = KernelTemplate::of(kind);
  std::vector<StateChangeSample> samples = detail::collect_samples(traces);
  if (samples.empty()) fail("train: no samples");

  std::size_t descriptor_dim = 0;
  for (const auto& tr : traces)
    if (tr.descriptor_dim) descriptor_dim = tr.descriptor_dim;
  if (!descriptor_dim) fail("train: traces carry no descriptors");

  TrainState state;
  if (resume_from) {
    state = *resume_from;
    if (state.params.kind != kind) fail("train: resume checkpoint is for a different kernel");
  } else {
    state.params = KernelParameters::init(kind, config.hidden_dim, config.layers,
                                          static_cast<int>(descriptor_dim), config.seed);
    state.optimizer.lr = config.lr;
    state.optimizer.init_like(state.params);
    if (config.beta_auto) {
      std::vector<double> betas;
      for (const auto& tr : traces)
        betas.push_back(compute_beta(tr, tmpl, config.cap, config.seed));
      std::sort(betas.begin(), betas.end());
      state.beta = betas[betas.size() / 2];
    } else {
      state.beta = config.beta;
    }
  }
  state.optimizer.lr = config.lr;

  ExpertModel model = config.expert(state.beta);
  model.validate();

  KernelParameters last_finite_params = state.params;
  Adam last_finite_opt = state.optimizer;
  int plateau_run = 0;

  for (int epoch = state.epoch; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed({config.seed, 0x73687566ULL, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.index(i)]);

    double loss_sum = 0, rsw_sum = 0;
    std::size_t used = 0, skipped = 0;
    bool finite = true;
    for (std::size_t idx : order) {
      const StateChangeSample& s = samples[idx];
      SampleContext ctx;
      ctx.top_p = config.top_p;
      ctx.cap = config.cap;
      ctx.enum_seed_a = frame_enum_seed(config.seed, s.trace_id, s.frame_a->frame_index);
      ctx.enum_seed_b = frame_enum_seed(config.seed, s.trace_id, s.frame_b->frame_index);
      ctx.draw_seed = mix_seed({config.seed, 0x64726177ULL, static_cast<std::uint64_t>(s.trace_id),
                                static_cast<std::uint64_t>(s.step),
                                static_cast<std::uint64_t>(epoch)});
      SampleResult res = sample_loss_grad(*s.frame_a, *s.frame_b, tmpl, state.params, model, ctx);
      if (res.skipped) {
        ++skipped;
        continue;
      }
      if (!std::isfinite(res.loss)) {
        finite = false;
        break;
      }
      state.optimizer.ascend(state.params, res.grads);
      if (!state.params.all_finite()) {
        finite = false;
        break;
      }
      loss_sum += res.loss;
      rsw_sum += 0.5 * (res.rsw_a + res.rsw_b);
      ++used;
    }

    if (!finite) {
      state.params = last_finite_params;
      state.optimizer = last_finite_opt;
      state.diverged = true;
      return state;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = used ? loss_sum / static_cast<double>(used) : 0.0;
    stats.mean_rsw = used ? rsw_sum / static_cast<double>(used) : 0.0;
    stats.skipped = skipped;
    bool any_labeled = false;
    double acc = detail::labeled_top1_accuracy(traces, tmpl, state.params, config.cap,
                                               config.top_p, config.seed, any_labeled);
    if (any_labeled) stats.top1_accuracy = acc;
    state.history.push_back(stats);
    state.epoch = epoch + 1;
    last_finite_params = state.params;
    last_finite_opt = state.optimizer;
    if (on_epoch) on_epoch(stats);

    if (config.plateau_tol > 0 && state.history.size() >= 2) {
      double prev = state.history[state.history.size() - 2].loss;
      if (std::fabs(stats.loss - prev) < config.plateau_tol)
        ++plateau_run;
      else
        plateau_run = 0;
      if (plateau_run >= config.plateau_patience) break;
    }
  }
  return state;
}

}  // namespace geokernel::irl
