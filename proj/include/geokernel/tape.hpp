#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "geokernel/tensor.hpp"

namespace geokernel::numeric {

enum class OpKind {
  constant,
  parameter,
  matmul,
  add,
  mul,      // elementwise
  scale,    // multiply by fixed scalar
  sigmoid,
  tanh,
  softmax,  // flat, max-subtracted
  sum,      // reduce all elements to 1x1
  concat,   // flatten inputs into one column
  l2norm,
  clamp,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::softmax: return "softmax";
    case OpKind::sum: return "sum";
    case OpKind::concat: return "concat";
    case OpKind::l2norm: return "l2norm";
    case OpKind::clamp: return "clamp";
  }
  return "?";
}

/// Reverse-mode tape over a fixed primitive op set. Forward results are
/// computed and recorded when an op is appended; backward() replays the
/// record in reverse, accumulating gradients for every node that depends on
/// a parameter. Constants always carry zero gradient.
///
/// A tape is single-threaded. Distinct tapes may run concurrently against
/// shared read-only parameter values; callers merge their gradients in a
/// fixed order.
class Tape {
 public:
  using NodeId = std::size_t;

  NodeId constant(Tensor v) { return leaf(OpKind::constant, std::move(v), false); }
  NodeId parameter(Tensor v) { return leaf(OpKind::parameter, std::move(v), true); }

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.shape().size() != 2 || B.shape().size() != 2 || A.cols() != B.rows())
      fail(std::string("matmul: incompatible shapes ") + A.shape_string() + " and " +
           B.shape_string());
    Tensor C({A.rows(), B.cols()});
    matmul_into(A, B, C, false, false);
    return record(OpKind::matmul, {a, b}, std::move(C));
  }

  NodeId add(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B))
      fail(std::string("add: shape mismatch ") + A.shape_string() + " vs " + B.shape_string());
    Tensor C = A;
    for (std::size_t i = 0; i < C.numel(); ++i) C[i] += B[i];
    return record(OpKind::add, {a, b}, std::move(C));
  }

  NodeId mul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B))
      fail(std::string("mul: shape mismatch ") + A.shape_string() + " vs " + B.shape_string());
    Tensor C = A;
    for (std::size_t i = 0; i < C.numel(); ++i) C[i] *= B[i];
    return record(OpKind::mul, {a, b}, std::move(C));
  }

  NodeId scale(NodeId a, double factor) {
    Tensor C = value(a);
    for (std::size_t i = 0; i < C.numel(); ++i) C[i] *= factor;
    NodeId id = record(OpKind::scale, {a}, std::move(C));
    nodes_[id].aux0 = factor;
    return id;
  }

  NodeId sigmoid(NodeId a) {
    Tensor C = value(a);
    for (std::size_t i = 0; i < C.numel(); ++i) C[i] = 1.0 / (1.0 + std::exp(-C[i]));
    return record(OpKind::sigmoid, {a}, std::move(C));
  }

  NodeId tanh(NodeId a) {
    Tensor C = value(a);
    for (std::size_t i = 0; i < C.numel(); ++i) C[i] = std::tanh(C[i]);
    return record(OpKind::tanh, {a}, std::move(C));
  }

  NodeId softmax(NodeId a) {
    const Tensor& A = value(a);
    if (A.numel() == 0) fail("softmax: empty input");
    Tensor C = A;
    double mx = C[0];
    for (std::size_t i = 1; i < C.numel(); ++i) mx = std::max(mx, C[i]);
    double total = 0;
    for (std::size_t i = 0; i < C.numel(); ++i) {
      C[i] = std::exp(C[i] - mx);
      total += C[i];
    }
    for (std::size_t i = 0; i < C.numel(); ++i) C[i] /= total;
    return record(OpKind::softmax, {a}, std::move(C));
  }

  NodeId sum(NodeId a) {
    const Tensor& A = value(a);
    double s = 0;
    for (std::size_t i = 0; i < A.numel(); ++i) s += A[i];
    return record(OpKind::sum, {a}, Tensor::scalar(s));
  }

  NodeId concat(std::span<const NodeId> parts) {
    if (parts.empty()) fail("concat: no inputs");
    std::vector<double> out;
    for (NodeId p : parts) {
      const Tensor& t = value(p);
      out.insert(out.end(), t.data().begin(), t.data().end());
    }
    return record(OpKind::concat, std::vector<NodeId>(parts.begin(), parts.end()),
                  Tensor::column(std::move(out)));
  }

  NodeId concat(std::initializer_list<NodeId> parts) {
    return concat(std::span<const NodeId>(parts.begin(), parts.size()));
  }

  NodeId l2norm(NodeId a) {
    const Tensor& A = value(a);
    double s = 0;
    for (std::size_t i = 0; i < A.numel(); ++i) s += A[i] * A[i];
    return record(OpKind::l2norm, {a}, Tensor::scalar(std::sqrt(s)));
  }

  NodeId clamp(NodeId a, double lo, double hi) {
    Tensor C = value(a);
    for (std::size_t i = 0; i < C.numel(); ++i) C[i] = std::min(hi, std::max(lo, C[i]));
    NodeId id = record(OpKind::clamp, {a}, std::move(C));
    nodes_[id].aux0 = lo;
    nodes_[id].aux1 = hi;
    return id;
  }

  /// Generic dispatch (used by the gradcheck suites to sweep the op set).
  NodeId apply(OpKind op, std::span<const NodeId> inputs, double aux0 = 0, double aux1 = 0) {
    switch (op) {
      case OpKind::matmul: need(inputs, 2, op); return matmul(inputs[0], inputs[1]);
      case OpKind::add: need(inputs, 2, op); return add(inputs[0], inputs[1]);
      case OpKind::mul: need(inputs, 2, op); return mul(inputs[0], inputs[1]);
      case OpKind::scale: need(inputs, 1, op); return scale(inputs[0], aux0);
      case OpKind::sigmoid: need(inputs, 1, op); return sigmoid(inputs[0]);
      case OpKind::tanh: need(inputs, 1, op); return tanh(inputs[0]);
      case OpKind::softmax: need(inputs, 1, op); return softmax(inputs[0]);
      case OpKind::sum: need(inputs, 1, op); return sum(inputs[0]);
      case OpKind::concat: return concat(inputs);
      case OpKind::l2norm: need(inputs, 1, op); return l2norm(inputs[0]);
      case OpKind::clamp: need(inputs, 1, op); return clamp(inputs[0], aux0, aux1);
      default: fail(std::string("apply: ") + op_name(op) + " is not a derived op");
    }
  }

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }

  double scalar_value(NodeId id) const {
    const Tensor& t = value(id);
    if (t.numel() != 1) fail("scalar_value: node is " + t.shape_string());
    return t[0];
  }

  /// Gradient of the last backward() seed w.r.t. this node. Zero for
  /// constants and for nodes outside the differentiated subgraph.
  const Tensor& grad(NodeId id) const {
    const Node& n = nodes_.at(id);
    if (n.grad.numel() != n.value.numel()) fail("grad: backward() has not run");
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from `output` (a scalar node), seeding d(output)=seed.
  /// Gradients accumulate additively across paths and across repeated calls
  /// unless zero_grad() is used.
  void backward(NodeId output, double seed = 1.0) {
    if (nodes_.empty()) fail("backward: tape is empty");
    if (output >= nodes_.size()) fail("backward: unknown node");
    if (value(output).numel() != 1) fail("backward: output must be scalar");
    for (Node& n : nodes_)
      if (n.grad.numel() != n.value.numel()) n.grad = Tensor::zeros_like(n.value);
    nodes_[output].grad[0] += seed;
    for (std::size_t i = output + 1; i-- > 0;) propagate(i);
  }

  void zero_grad() {
    for (Node& n : nodes_)
      if (n.grad.numel()) n.grad.fill(0.0);
  }

 private:
  struct Node {
    OpKind op;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    double aux0 = 0, aux1 = 0;
    bool requires_grad = false;
  };

  static void need(std::span<const Tape::NodeId> inputs, std::size_t n, OpKind op) {
    if (inputs.size() != n)
      fail(std::string(op_name(op)) + ": expected " + std::to_string(n) + " inputs, got " +
           std::to_string(inputs.size()));
  }

  NodeId leaf(OpKind op, Tensor v, bool requires_grad) {
    if (!v.all_finite()) fail(std::string(op_name(op)) + ": non-finite input tensor");
    Node n;
    n.op = op;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  NodeId record(OpKind op, std::vector<NodeId> inputs, Tensor v) {
    if (!v.all_finite())
      fail(std::string(op_name(op)) + ": produced non-finite values");
    Node n;
    n.op = op;
    n.requires_grad = false;
    for (NodeId i : inputs) n.requires_grad = n.requires_grad || nodes_.at(i).requires_grad;
    n.inputs = std::move(inputs);
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  // C (+)= op(A, B); transA/transB read the operands transposed. The three
  // layouts below keep every inner loop contiguous.
  static void matmul_into(const Tensor& A, const Tensor& B, Tensor& C, bool transA, bool transB,
                          bool accumulate = false) {
    std::size_t m = transA ? A.cols() : A.rows();
    std::size_t k = transA ? A.rows() : A.cols();
    std::size_t n = transB ? B.rows() : B.cols();
    const double* a = A.data().data();
    const double* b = B.data().data();
    double* c = C.data().data();
    if (!accumulate) C.fill(0.0);
    if (!transA && !transB) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          double av = arow[p];
          const double* brow = b + p * n;
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    } else if (!transA && transB) {  // B stored n x k
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
          const double* brow = b + j * k;
          double acc = 0;
          for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
          crow[j] += acc;
        }
      }
    } else if (transA && !transB) {  // A stored k x m
      for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
          double av = arow[i];
          double* crow = c + i * n;
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    } else {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double av = a[p * m + i];
          for (std::size_t j = 0; j < n; ++j) c[i * n + j] += av * b[j * k + p];
        }
    }
  }

  void propagate(NodeId id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    bool any = false;
    for (double g : n.grad.data())
      if (g != 0.0) { any = true; break; }
    if (!any) return;
    switch (n.op) {
      case OpKind::constant:
      case OpKind::parameter:
        break;
      case OpKind::matmul: {
        Node& a = nodes_[n.inputs[0]];
        Node& b = nodes_[n.inputs[1]];
        if (a.requires_grad) matmul_into(n.grad, b.value, a.grad, false, true, true);
        if (b.requires_grad) matmul_into(a.value, n.grad, b.grad, true, false, true);
        break;
      }
      case OpKind::add: {
        for (int s = 0; s < 2; ++s) {
          Node& in = nodes_[n.inputs[s]];
          if (!in.requires_grad) continue;
          for (std::size_t i = 0; i < n.grad.numel(); ++i) in.grad[i] += n.grad[i];
        }
        break;
      }
      case OpKind::mul: {
        Node& a = nodes_[n.inputs[0]];
        Node& b = nodes_[n.inputs[1]];
        if (a.requires_grad)
          for (std::size_t i = 0; i < n.grad.numel(); ++i) a.grad[i] += n.grad[i] * b.value[i];
        if (b.requires_grad)
          for (std::size_t i = 0; i < n.grad.numel(); ++i) b.grad[i] += n.grad[i] * a.value[i];
        break;
      }
      case OpKind::scale: {
        Node& a = nodes_[n.inputs[0]];
        if (a.requires_grad)
          for (std::size_t i = 0; i < n.grad.numel(); ++i) a.grad[i] += n.grad[i] * n.aux0;
        break;
      }
      case OpKind::sigmoid: {
        Node& a = nodes_[n.inputs[0]];
        if (a.requires_grad)
          for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            double y = n.value[i];
            a.grad[i] += n.grad[i] * y * (1.0 - y);
          }
        break;
      }
      case OpKind::tanh: {
        Node& a = nodes_[n.inputs[0]];
        if (a.requires_grad)
          for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            double y = n.value[i];
            a.grad[i] += n.grad[i] * (1.0 - y * y);
          }
        break;
      }
      case OpKind::softmax: {
        Node& a = nodes_[n.inputs[0]];
        if (a.requires_grad) {
          double dot = 0;
          for (std::size_t i = 0; i < n.grad.numel(); ++i) dot += n.grad[i] * n.value[i];
          for (std::size_t i = 0; i < n.grad.numel(); ++i)
            a.grad[i] += n.value[i] * (n.grad[i] - dot);
        }
        break;
      }
      case OpKind::sum: {
        Node& a = nodes_[n.inputs[0]];
        if (a.requires_grad)
          for (std::size_t i = 0; i < a.grad.numel(); ++i) a.grad[i] += n.grad[0];
        break;
      }
      case OpKind::concat: {
        std::size_t off = 0;
        for (NodeId src : n.inputs) {
          Node& a = nodes_[src];
          if (a.requires_grad)
            for (std::size_t i = 0; i < a.value.numel(); ++i) a.grad[i] += n.grad[off + i];
          off += a.value.numel();
        }
        break;
      }
      case OpKind::l2norm: {
        Node& a = nodes_[n.inputs[0]];
        if (a.requires_grad && n.value[0] > 0.0) {
          double g = n.grad[0] / n.value[0];
          for (std::size_t i = 0; i < a.value.numel(); ++i) a.grad[i] += g * a.value[i];
        }
        break;
      }
      case OpKind::clamp: {
        Node& a = nodes_[n.inputs[0]];
        if (a.requires_grad)
          for (std::size_t i = 0; i < n.grad.numel(); ++i)
            if (a.value[i] > n.aux0 && a.value[i] < n.aux1) a.grad[i] += n.grad[i];
        break;
      }
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace geokernel::numeric
