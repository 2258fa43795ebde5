#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "geokernel/rng.hpp"
#include "geokernel/tape.hpp"

using geokernel::Error;
using geokernel::Rng;
using geokernel::numeric::OpKind;
using geokernel::numeric::Tape;
using geokernel::numeric::Tensor;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-2.0, 2.0);
  return t;
}

}  // namespace

TEST_CASE("matmul computes shapes and values") {
  Tape tape;
  auto a = tape.constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  auto b = tape.constant(Tensor({3, 1}, {1, 0, -1}));
  auto c = tape.matmul(a, b);
  REQUIRE(tape.value(c).shape() == std::vector<std::size_t>{2, 1});
  CHECK(tape.value(c)[0] == Catch::Approx(-2.0));
  CHECK(tape.value(c)[1] == Catch::Approx(-2.0));
}

TEST_CASE("sigmoid at zero is one half") {
  Tape tape;
  auto x = tape.constant(Tensor::scalar(0.0));
  CHECK(tape.scalar_value(tape.sigmoid(x)) == 0.5);
}

TEST_CASE("softmax of equal inputs is uniform") {
  Tape tape;
  auto x = tape.constant(Tensor::column({0.7, 0.7, 0.7}));
  auto y = tape.softmax(x);
  for (int i = 0; i < 3; ++i) CHECK(tape.value(y)[i] == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("softmax is stable for large magnitudes") {
  Tape tape;
  auto x = tape.constant(Tensor::column({5000.0, 4999.0, -5000.0}));
  auto y = tape.softmax(x);
  CHECK(tape.value(y).all_finite());
  CHECK(tape.value(y)[0] > tape.value(y)[1]);
}

TEST_CASE("shape mismatch raises a structured error") {
  Tape tape;
  auto a = tape.constant(Tensor({2, 3}));
  auto b = tape.constant(Tensor({4, 1}));
  try {
    tape.matmul(a, b);
    FAIL("expected an error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x1") != std::string::npos);
  }
  REQUIRE_THROWS_AS(tape.add(a, b), Error);
}

TEST_CASE("backward of x squared") {
  Tape tape;
  auto x = tape.parameter(Tensor::scalar(3.0));
  auto y = tape.mul(x, x);
  tape.backward(y);
  CHECK(tape.grad(x)[0] == Catch::Approx(6.0));
}

TEST_CASE("backward of sigmoid at zero") {
  Tape tape;
  auto x = tape.parameter(Tensor::scalar(0.0));
  auto y = tape.sigmoid(x);
  tape.backward(y);
  CHECK(tape.grad(x)[0] == Catch::Approx(0.25));
}

TEST_CASE("gradient accumulation is additive over parameter reuse") {
  Tape tape;
  auto a = tape.parameter(Tensor::scalar(1.5));
  auto b = tape.constant(Tensor::scalar(2.0));
  auto c = tape.constant(Tensor::scalar(-0.5));
  // f = a*b + a*c  =>  df/da = b + c
  auto y = tape.add(tape.mul(a, b), tape.mul(a, c));
  tape.backward(y);
  CHECK(tape.grad(a)[0] == Catch::Approx(1.5));
}

TEST_CASE("constants carry zero gradient") {
  Tape tape;
  auto x = tape.parameter(Tensor::scalar(2.0));
  auto c = tape.constant(Tensor::scalar(4.0));
  auto y = tape.mul(x, c);
  tape.backward(y);
  CHECK(tape.grad(c)[0] == 0.0);
}

TEST_CASE("backward before any forward is an error") {
  Tape tape;
  REQUIRE_THROWS_AS(tape.backward(0), Error);
}

TEST_CASE("backward requires a scalar output") {
  Tape tape;
  auto x = tape.parameter(Tensor::column({1.0, 2.0}));
  REQUIRE_THROWS_AS(tape.backward(x), Error);
}

TEST_CASE("forward results are bitwise reproducible") {
  auto build = [] {
    Tape tape;
    Rng rng(99);
    auto w = tape.parameter(random_tensor({4, 4}, rng));
    auto x = tape.constant(random_tensor({4, 1}, rng));
    auto y = tape.l2norm(tape.tanh(tape.matmul(w, x)));
    return tape.scalar_value(y);
  };
  double first = build();
  double second = build();
  CHECK(std::memcmp(&first, &second, sizeof(double)) == 0);
}

namespace {

// Central finite difference of a scalar-valued tape program w.r.t. one
// element of one input tensor.
double fd_gradient(const std::function<double(const std::vector<Tensor>&)>& f,
                   std::vector<Tensor> inputs, std::size_t tensor_idx, std::size_t elem_idx,
                   double eps = 1e-5) {
  inputs[tensor_idx][elem_idx] += eps;
  double hi = f(inputs);
  inputs[tensor_idx][elem_idx] -= 2 * eps;
  double lo = f(inputs);
  return (hi - lo) / (2 * eps);
}

double rel_err(double a, double b) {
  double scale = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / scale;
}

}  // namespace

TEST_CASE("every primitive op matches central finite differences") {
  Rng rng(2024);

  struct Case {
    const char* name;
    std::vector<Tensor> inputs;
    std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)> build;
  };

  std::vector<Case> cases;
  cases.push_back({"matmul", {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.sum(t.matmul(in[0], in[1]));
                   }});
  cases.push_back({"add", {random_tensor({3, 2}, rng), random_tensor({3, 2}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.l2norm(t.add(in[0], in[1]));
                   }});
  cases.push_back({"mul", {random_tensor({3, 2}, rng), random_tensor({3, 2}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.sum(t.mul(in[0], in[1]));
                   }});
  cases.push_back({"scale", {random_tensor({4, 1}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.l2norm(t.scale(in[0], -1.7));
                   }});
  cases.push_back({"sigmoid", {random_tensor({4, 1}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.sum(t.sigmoid(in[0]));
                   }});
  cases.push_back({"tanh", {random_tensor({4, 1}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.sum(t.tanh(in[0]));
                   }});
  cases.push_back({"softmax", {random_tensor({5, 1}, rng), random_tensor({5, 1}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.sum(t.mul(t.softmax(in[0]), in[1]));
                   }});
  cases.push_back({"sum", {random_tensor({3, 3}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.sum(t.mul(in[0], in[0]));
                   }});
  cases.push_back({"concat", {random_tensor({2, 1}, rng), random_tensor({3, 1}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.l2norm(t.concat({in[0], in[1]}));
                   }});
  cases.push_back({"l2norm", {random_tensor({6, 1}, rng)},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.l2norm(in[0]);
                   }});
  // clamp: keep inputs away from the clamp boundary so FD stays valid
  Tensor clamp_in({4, 1}, {0.3, -0.9, 1.8, -1.95});
  cases.push_back({"clamp", {clamp_in},
                   [](Tape& t, const std::vector<Tape::NodeId>& in) {
                     return t.sum(t.clamp(in[0], -1.9, 1.9));
                   }});

  for (const Case& c : cases) {
    INFO("op: " << c.name);
    auto eval = [&](const std::vector<Tensor>& inputs) {
      Tape tape;
      std::vector<Tape::NodeId> nodes;
      for (const Tensor& t : inputs) nodes.push_back(tape.parameter(t));
      return tape.scalar_value(c.build(tape, nodes));
    };
    Tape tape;
    std::vector<Tape::NodeId> nodes;
    for (const Tensor& t : c.inputs) nodes.push_back(tape.parameter(t));
    auto out = c.build(tape, nodes);
    tape.backward(out);
    for (std::size_t ti = 0; ti < c.inputs.size(); ++ti) {
      for (std::size_t ei = 0; ei < c.inputs[ti].numel(); ++ei) {
        double analytic = tape.grad(nodes[ti])[ei];
        double numeric = fd_gradient(eval, c.inputs, ti, ei);
        CHECK(rel_err(analytic, numeric) < 1e-6);
      }
    }
  }
}

TEST_CASE("random three-layer composite matches finite differences") {
  Rng rng(7);
  std::vector<Tensor> inputs = {random_tensor({4, 3}, rng), random_tensor({4, 1}, rng),
                                random_tensor({4, 4}, rng), random_tensor({4, 1}, rng),
                                random_tensor({1, 4}, rng), random_tensor({3, 1}, rng)};
  auto build = [](Tape& t, const std::vector<Tape::NodeId>& in) {
    auto h1 = t.tanh(t.add(t.matmul(in[0], in[5]), in[1]));
    auto h2 = t.sigmoid(t.add(t.matmul(in[2], h1), in[3]));
    return t.l2norm(t.matmul(in[4], h2));
  };
  auto eval = [&](const std::vector<Tensor>& ins) {
    Tape tape;
    std::vector<Tape::NodeId> nodes;
    for (const Tensor& t : ins) nodes.push_back(tape.parameter(t));
    return tape.scalar_value(build(tape, nodes));
  };
  Tape tape;
  std::vector<Tape::NodeId> nodes;
  for (const Tensor& t : inputs) nodes.push_back(tape.parameter(t));
  auto out = build(tape, nodes);
  tape.backward(out);
  for (std::size_t ti = 0; ti < inputs.size(); ++ti)
    for (std::size_t ei = 0; ei < inputs[ti].numel(); ++ei) {
      double analytic = tape.grad(nodes[ti])[ei];
      double numeric = fd_gradient(eval, inputs, ti, ei);
      CHECK(rel_err(analytic, numeric) < 1e-6);
    }
}

TEST_CASE("non-finite results are rejected with the op name") {
  Tape tape;
  auto big = tape.constant(Tensor::scalar(1e308));
  try {
    tape.mul(big, big);
    FAIL("expected overflow error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("mul") != std::string::npos);
  }
}

TEST_CASE("apply dispatches by op kind") {
  Tape tape;
  std::vector<Tape::NodeId> in = {tape.constant(Tensor::scalar(0.0))};
  auto y = tape.apply(OpKind::sigmoid, in);
  CHECK(tape.scalar_value(y) == 0.5);
  REQUIRE_THROWS_AS(tape.apply(OpKind::matmul, in), Error);
}
