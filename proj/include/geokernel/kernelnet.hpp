#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geokernel/rng.hpp"
#include "geokernel/tape.hpp"
#include "geokernel/trace.hpp"

namespace geokernel::kernelnet {

using geometry::GeometricFeature;
using geometry::KernelTemplate;
using geometry::PrimitiveKind;
using geometry::TemplateKind;
using numeric::Tensor;
using trace::Frame;

/// One concrete assignment of frame features to a template's nodes.
/// Node order is canonical (ascending feature id) for symmetric templates
/// and role order for asymmetric ones.
struct GraphInstance {
  std::vector<std::size_t> node_index;  // positions in Frame::features
  std::vector<std::int64_t> ids;        // feature ids, template node order
  std::vector<double> error;            // control error E_k of this instance
  double relevance = 0.0;               // b in (0,1), filled by message passing
};

struct EnumerationResult {
  std::vector<GraphInstance> instances;
  bool capped = false;
};

namespace detail {

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  std::uint64_t c = 1;
  for (std::uint64_t i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

// Lexicographic unranking of a k-combination of [0, n).
inline void unrank_combination(std::uint64_t rank, std::size_t n, std::size_t k,
                               std::vector<std::size_t>& out) {
  out.clear();
  std::size_t start = 0;
  for (std::size_t slot = 0; slot < k; ++slot) {
    for (std::size_t v = start;; ++v) {
      std::uint64_t block = binomial(n - 1 - v, k - 1 - slot);
      if (rank < block) {
        out.push_back(v);
        start = v + 1;
        break;
      }
      rank -= block;
    }
  }
}

// Floyd's algorithm: `count` distinct ranks uniformly from [0, total).
inline std::vector<std::uint64_t> sample_ranks(std::uint64_t total, std::uint64_t count,
                                               Rng& rng) {
  std::set<std::uint64_t> chosen;
  for (std::uint64_t j = total - count; j < total; ++j) {
    std::uint64_t t = rng.next_u64() % (j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  return {chosen.begin(), chosen.end()};
}

}  // namespace detail

/// Enumerates all role-compatible feature assignments for a template.
/// Symmetric templates emit unordered combinations in ascending-feature-id
/// node order; asymmetric templates emit every ordered role assignment.
/// When the count exceeds `cap`, a seeded uniform subsample of size `cap`
/// is returned with the capped flag set.
inline EnumerationResult enumerate_instances(const Frame& frame, const KernelTemplate& tmpl,
                                             std::size_t cap, std::uint64_t subsample_seed = 0) {
  if (cap < 1) fail("enumerate_instances: cap must be >= 1");
  EnumerationResult result;

  // Candidate feature positions per role, ascending feature id.
  std::vector<std::size_t> order(frame.features.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return frame.features[a].id < frame.features[b].id;
  });

  auto of_kind = [&](PrimitiveKind k) {
    std::vector<std::size_t> v;
    for (std::size_t i : order)
      if (frame.features[i].kind == k) v.push_back(i);
    return v;
  };

  auto emit = [&](const std::vector<std::size_t>& positions) {
    GraphInstance inst;
    inst.node_index = positions;
    for (std::size_t p : positions) inst.ids.push_back(frame.features[p].id);
    result.instances.push_back(std::move(inst));
  };

  if (tmpl.symmetric) {
    // All nodes share one role for the symmetric templates.
    std::vector<std::size_t> pool = of_kind(tmpl.roles[0]);
    std::size_t n = pool.size();
    std::size_t k = static_cast<std::size_t>(tmpl.arity);
    if (n < k) return result;
    std::uint64_t total = detail::binomial(n, k);
    std::vector<std::size_t> combo;
    if (total <= cap) {
      combo.resize(k);
      for (std::size_t i = 0; i < k; ++i) combo[i] = i;
      bool more = true;
      while (more) {
        std::vector<std::size_t> positions(k);
        for (std::size_t i = 0; i < k; ++i) positions[i] = pool[combo[i]];
        emit(positions);
        more = false;
        for (std::size_t i = k; i-- > 0;) {
          if (combo[i] < n - k + i) {
            ++combo[i];
            for (std::size_t j = i + 1; j < k; ++j) combo[j] = combo[j - 1] + 1;
            more = true;
            break;
          }
        }
      }
    } else {
      result.capped = true;
      Rng rng(mix_seed({subsample_seed, 0x656e756dULL, total}));
      for (std::uint64_t rank : detail::sample_ranks(total, cap, rng)) {
        detail::unrank_combination(rank, n, k, combo);
        std::vector<std::size_t> positions(k);
        for (std::size_t i = 0; i < k; ++i) positions[i] = pool[combo[i]];
        emit(positions);
      }
    }
  } else {
    // Ordered role assignment; only arity-2 asymmetric templates exist.
    std::vector<std::size_t> first = of_kind(tmpl.roles[0]);
    std::vector<std::size_t> second = of_kind(tmpl.roles[1]);
    std::uint64_t total = static_cast<std::uint64_t>(first.size()) * second.size();
    if (total == 0) return result;
    if (total <= cap) {
      for (std::size_t a : first)
        for (std::size_t b : second) emit({a, b});
    } else {
      result.capped = true;
      Rng rng(mix_seed({subsample_seed, 0x656e756dULL, total}));
      for (std::uint64_t rank : detail::sample_ranks(total, cap, rng))
        emit({first[rank / second.size()], second[rank % second.size()]});
    }
  }
  return result;
}

/// All learnable weights of one skill kernel: descriptor embedding, shared
/// pairwise message map, gated recurrent update, and the readout.
struct KernelParameters {
  TemplateKind kind = TemplateKind::p2p;
  int hidden_dim = 64;
  int layers = 5;
  int descriptor_dim = 32;

  Tensor embed_w, embed_b;
  Tensor msg_w, msg_b;
  Tensor gru_reset_w, gru_reset_b;
  Tensor gru_update_w, gru_update_b;
  Tensor gru_cand_w, gru_cand_b;
  Tensor readout_w, readout_b;

  static KernelParameters init(TemplateKind kind, int hidden_dim, int layers,
                               int descriptor_dim, std::uint64_t seed) {
    if (hidden_dim < 1 || layers < 1 || descriptor_dim < 1)
      fail("kernel parameters: hidden_dim, layers and descriptor_dim must be >= 1");
    KernelParameters p;
    p.kind = kind;
    p.hidden_dim = hidden_dim;
    p.layers = layers;
    p.descriptor_dim = descriptor_dim;
    KernelTemplate tmpl = KernelTemplate::of(kind);
    std::size_t h = static_cast<std::size_t>(hidden_dim);
    std::size_t d = static_cast<std::size_t>(descriptor_dim);
    std::size_t pooled = tmpl.symmetric ? h : h * static_cast<std::size_t>(tmpl.arity);
    Rng rng(mix_seed({seed, 0x706172616dULL}));
    auto uniform_init = [&](Tensor& t, std::vector<std::size_t> shape, std::size_t fan_in) {
      t = Tensor(std::move(shape));
      double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    };
    uniform_init(p.embed_w, {h, d}, d);
    uniform_init(p.embed_b, {h, 1}, d);
    uniform_init(p.msg_w, {h, 2 * h}, 2 * h);
    uniform_init(p.msg_b, {h, 1}, 2 * h);
    uniform_init(p.gru_reset_w, {h, 2 * h}, 2 * h);
    uniform_init(p.gru_reset_b, {h, 1}, 2 * h);
    uniform_init(p.gru_update_w, {h, 2 * h}, 2 * h);
    uniform_init(p.gru_update_b, {h, 1}, 2 * h);
    uniform_init(p.gru_cand_w, {h, 2 * h}, 2 * h);
    uniform_init(p.gru_cand_b, {h, 1}, 2 * h);
    uniform_init(p.readout_w, {1, pooled}, pooled);
    uniform_init(p.readout_b, {1, 1}, pooled);
    return p;
  }

  static KernelParameters zeros(TemplateKind kind, int hidden_dim, int layers,
                                int descriptor_dim) {
    KernelParameters p = init(kind, hidden_dim, layers, descriptor_dim, 0);
    for (auto& [name, t] : p.named()) t->fill(0.0);
    return p;
  }

  std::vector<std::pair<std::string, Tensor*>> named() {
    return {{"embed_w", &embed_w},         {"embed_b", &embed_b},
            {"msg_w", &msg_w},             {"msg_b", &msg_b},
            {"gru_reset_w", &gru_reset_w}, {"gru_reset_b", &gru_reset_b},
            {"gru_update_w", &gru_update_w}, {"gru_update_b", &gru_update_b},
            {"gru_cand_w", &gru_cand_w},   {"gru_cand_b", &gru_cand_b},
            {"readout_w", &readout_w},     {"readout_b", &readout_b}};
  }

  std::vector<std::pair<std::string, const Tensor*>> named() const {
    auto mutable_list = const_cast<KernelParameters*>(this)->named();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mutable_list.size());
    for (auto& [n, t] : mutable_list) out.emplace_back(n, t);
    return out;
  }

  /// Flat element pointers in tensor order; the finite-difference suites
  /// perturb parameters through this view.
  std::vector<double*> flat_view() {
    std::vector<double*> out;
    for (auto& [name, t] : named())
      for (std::size_t i = 0; i < t->numel(); ++i) out.push_back(&(*t)[i]);
    return out;
  }

  std::size_t flat_size() const {
    std::size_t n = 0;
    for (auto& [name, t] : named()) n += t->numel();
    return n;
  }

  std::vector<Tensor> zero_grads() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(Tensor::zeros_like(*t));
    return out;
  }

  bool all_finite() const {
    for (auto& [name, t] : named())
      if (!t->all_finite()) return false;
    return true;
  }
};

/// Softmax ranking over per-instance scores with top-p extraction.
struct SelectOutResult {
  std::vector<double> weights;      // g_i, sums to 1
  std::vector<std::size_t> top;     // top-p indices by descending g; ties -> lower index
  double rsw = 0.0;                 // residual mass outside the top-p
};

inline SelectOutResult select_out(std::span<const double> scores, std::size_t p) {
  if (scores.empty()) fail("select_out: no instances");
  if (p < 1) fail("select_out: p must be >= 1");
  SelectOutResult r;
  r.weights.resize(scores.size());
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double total = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    r.weights[i] = std::exp(scores[i] - mx);
    total += r.weights[i];
  }
  for (double& w : r.weights) w /= total;
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (r.weights[a] != r.weights[b]) return r.weights[a] > r.weights[b];
    return a < b;
  });
  std::size_t take = std::min(p, idx.size());
  r.top.assign(idx.begin(), idx.begin() + take);
  double covered = 0;
  for (std::size_t i : r.top) covered += r.weights[i];
  r.rsw = std::min(1.0, std::max(0.0, 1.0 - covered));
  return r;
}

/// Forward (and backward, when needed) record of one instance's relevance
/// computation. The tape holds every intermediate of the T message-passing
/// rounds; parameter nodes appear in KernelParameters::named() order.
struct InstanceRun {
  numeric::Tape tape;
  std::vector<numeric::Tape::NodeId> param_nodes;
  numeric::Tape::NodeId score_node = 0;
  numeric::Tape::NodeId relevance_node = 0;
  double score = 0.0;      // pre-sigmoid readout; select_out ranks these
  double relevance = 0.0;  // b = sigmoid(score), in (0,1)
};

inline InstanceRun run_instance(const KernelTemplate& tmpl, const Frame& frame,
                                const GraphInstance& instance, const KernelParameters& params) {
  using NodeId = numeric::Tape::NodeId;
  if (instance.node_index.size() != static_cast<std::size_t>(tmpl.arity))
    fail("message_pass: instance arity does not match template");

  // Canonical node order makes symmetric-template relevance independent of
  // how the caller ordered the nodes (bitwise, not just mathematically).
  std::vector<std::size_t> nodes = instance.node_index;
  if (tmpl.symmetric)
    std::sort(nodes.begin(), nodes.end(), [&](std::size_t a, std::size_t b) {
      return frame.features[a].id < frame.features[b].id;
    });

  for (int i = 0; i < tmpl.arity; ++i) {
    const GeometricFeature& f = frame.features.at(nodes[i]);
    if (f.kind != tmpl.roles[i])
      fail(std::string("message_pass: node ") + std::to_string(i) + " wants " +
           geometry::kind_name(tmpl.roles[i]) + ", got " + geometry::kind_name(f.kind));
    if (f.descriptor.size() != static_cast<std::size_t>(params.descriptor_dim))
      fail("message_pass: descriptor length " + std::to_string(f.descriptor.size()) +
           " does not match configured dimension " + std::to_string(params.descriptor_dim));
  }

  InstanceRun run;
  numeric::Tape& tape = run.tape;
  auto named = params.named();
  for (auto& [name, t] : named) run.param_nodes.push_back(tape.parameter(*t));
  NodeId embed_w = run.param_nodes[0], embed_b = run.param_nodes[1];
  NodeId msg_w = run.param_nodes[2], msg_b = run.param_nodes[3];
  NodeId gru_r_w = run.param_nodes[4], gru_r_b = run.param_nodes[5];
  NodeId gru_z_w = run.param_nodes[6], gru_z_b = run.param_nodes[7];
  NodeId gru_n_w = run.param_nodes[8], gru_n_b = run.param_nodes[9];
  NodeId read_w = run.param_nodes[10], read_b = run.param_nodes[11];

  std::size_t n = nodes.size();
  std::vector<std::vector<std::size_t>> senders(n);
  for (auto [a, b] : tmpl.edges) {
    senders[b].push_back(a);
    senders[a].push_back(b);
  }
  for (auto& s : senders) std::sort(s.begin(), s.end());

  std::vector<NodeId> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    NodeId f = tape.constant(Tensor::column(frame.features[nodes[i]].descriptor));
    h[i] = tape.tanh(tape.add(tape.matmul(embed_w, f), embed_b));
  }

  Tensor ones_h(std::vector<std::size_t>{static_cast<std::size_t>(params.hidden_dim), 1});
  ones_h.fill(1.0);
  NodeId ones = tape.constant(ones_h);

  for (int layer = 0; layer < params.layers; ++layer) {
    try {
      std::vector<NodeId> next(n);
      for (std::size_t i = 0; i < n; ++i) {
        // Pairwise messages from every connected sender, summed.
        NodeId agg = 0;
        bool first = true;
        for (std::size_t j : senders[i]) {
          NodeId m = tape.tanh(tape.add(tape.matmul(msg_w, tape.concat({h[j], h[i]})), msg_b));
          agg = first ? m : tape.add(agg, m);
          first = false;
        }
        // Gated recurrent update of the node state.
        NodeId hm = tape.concat({h[i], agg});
        NodeId reset = tape.sigmoid(tape.add(tape.matmul(gru_r_w, hm), gru_r_b));
        NodeId update = tape.sigmoid(tape.add(tape.matmul(gru_z_w, hm), gru_z_b));
        NodeId cand = tape.tanh(tape.add(
            tape.matmul(gru_n_w, tape.concat({tape.mul(reset, h[i]), agg})), gru_n_b));
        NodeId keep = tape.add(ones, tape.scale(update, -1.0));
        next[i] = tape.add(tape.mul(keep, h[i]), tape.mul(update, cand));
      }
      h = std::move(next);
    } catch (const Error& e) {
      fail(std::string("message passing layer ") + std::to_string(layer) + ": " + e.what());
    }
  }

  NodeId pooled;
  if (tmpl.symmetric) {
    pooled = h[0];
    for (std::size_t i = 1; i < n; ++i) pooled = tape.add(pooled, h[i]);
  } else {
    pooled = tape.concat(std::span<const NodeId>(h.data(), h.size()));
  }
  run.score_node = tape.add(tape.matmul(read_w, pooled), read_b);
  run.relevance_node = tape.sigmoid(run.score_node);
  run.score = tape.scalar_value(run.score_node);
  run.relevance = tape.scalar_value(run.relevance_node);
  return run;
}

/// Relevance of a single instance (forward only).
inline double message_pass(const KernelTemplate& tmpl, const Frame& frame,
                           const GraphInstance& instance, const KernelParameters& params) {
  return run_instance(tmpl, frame, instance, params).relevance;
}

/// Forward pass over every enumerated instance of one frame. Instances run
/// in parallel against the shared read-only parameters; outputs are stored
/// by instance index so the result does not depend on scheduling.
struct FrameRuns {
  std::vector<GraphInstance> instances;
  bool capped = false;
  std::vector<InstanceRun> runs;
  std::vector<double> scores;
};

inline FrameRuns run_frame_instances(const Frame& frame, const KernelTemplate& tmpl,
                                     const KernelParameters& params, std::size_t cap,
                                     std::uint64_t enum_seed) {
  FrameRuns fr;
  EnumerationResult en = enumerate_instances(frame, tmpl, cap, enum_seed);
  fr.instances = std::move(en.instances);
  fr.capped = en.capped;
  fr.runs.resize(fr.instances.size());
  fr.scores.resize(fr.instances.size());
  parallel_for(fr.instances.size(), [&](std::size_t i) {
    GraphInstance& inst = fr.instances[i];
    std::vector<const GeometricFeature*> feats;
    for (std::size_t p : inst.node_index) feats.push_back(&frame.features[p]);
    inst.error = geometry::instance_error(tmpl, feats);
    fr.runs[i] = run_instance(tmpl, frame, inst, params);
    inst.relevance = fr.runs[i].relevance;
    fr.scores[i] = fr.runs[i].score;
  });
  return fr;
}

/// Full frame pipeline: enumerate, rank, aggregate. `control_error` is the
/// relevance-weighted sum over all instances (empty when none exist).
struct FrameEval {
  std::vector<GraphInstance> instances;
  bool capped = false;
  std::vector<double> scores;
  SelectOutResult selection;
  std::vector<double> control_error;
};

inline FrameEval evaluate_frame(const Frame& frame, const KernelTemplate& tmpl,
                                const KernelParameters& params, std::size_t cap, std::size_t p,
                                std::uint64_t enum_seed) {
  FrameRuns runs = run_frame_instances(frame, tmpl, params, cap, enum_seed);
  FrameEval ev;
  ev.instances = std::move(runs.instances);
  ev.capped = runs.capped;
  ev.scores = std::move(runs.scores);
  if (ev.instances.empty()) return ev;
  ev.selection = select_out(ev.scores, p);
  std::vector<std::pair<double, std::vector<double>>> weighted;
  weighted.reserve(ev.instances.size());
  for (std::size_t i = 0; i < ev.instances.size(); ++i)
    weighted.emplace_back(ev.selection.weights[i], ev.instances[i].error);
  ev.control_error = geometry::aggregate_error(weighted);
  return ev;
}

/// Spec-facing alias: (Ec, selection, instances) for one frame.
inline FrameEval frame_control_error(const Frame& frame, const KernelTemplate& tmpl,
                                     const KernelParameters& params, std::size_t cap,
                                     std::size_t p, std::uint64_t enum_seed) {
  return evaluate_frame(frame, tmpl, params, cap, p, enum_seed);
}

/// Adds one instance's parameter gradients into `acc` (named() order).
/// Callers loop instances in ascending index order so merged gradients are
/// reproducible.
inline void add_param_grads(const InstanceRun& run, std::vector<Tensor>& acc) {
  for (std::size_t t = 0; t < run.param_nodes.size(); ++t)
    acc[t].accumulate(run.tape.grad(run.param_nodes[t]));
}

/// Ground-truth tuples of a frame usable by this template: arity matches,
/// every id is visible with the right primitive kind, and symmetric tuples
/// are reduced to ascending id order.
inline std::vector<std::vector<std::int64_t>> compatible_labels(const Frame& frame,
                                                                const KernelTemplate& tmpl) {
  std::vector<std::vector<std::int64_t>> out;
  for (const auto& tuple : frame.labels) {
    if (tuple.size() != static_cast<std::size_t>(tmpl.arity)) continue;
    bool ok = true;
    std::vector<std::int64_t> canon = tuple;
    if (tmpl.symmetric) std::sort(canon.begin(), canon.end());
    for (int i = 0; i < tmpl.arity && ok; ++i) {
      const GeometricFeature* f = frame.find(canon[static_cast<std::size_t>(i)]);
      ok = f != nullptr && f->kind == tmpl.roles[static_cast<std::size_t>(i)];
    }
    if (ok) out.push_back(std::move(canon));
  }
  return out;
}

inline bool instance_matches_any_label(const GraphInstance& inst, const KernelTemplate& tmpl,
                                       const std::vector<std::vector<std::int64_t>>& labels) {
  std::vector<std::int64_t> ids = inst.ids;
  if (tmpl.symmetric) std::sort(ids.begin(), ids.end());
  for (const auto& label : labels)
    if (ids == label) return true;
  return false;
}

}  // namespace geokernel::kernelnet
