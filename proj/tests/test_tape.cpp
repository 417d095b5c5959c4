#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "support/testutil.hpp"
#include "vmb/errors.hpp"
#include "vmb/tape.hpp"

using namespace vmb;

namespace {

using GraphFn = std::function<Var(Tape&, const std::map<std::string, Mat>&)>;

// Central finite differences against the tape's analytic gradients for every
// coordinate of every named input.
void check_gradients(const GraphFn& build, std::map<std::string, Mat> inputs,
                     double h = 1e-6, double tol = 1e-6) {
  Tape tape;
  Var loss = build(tape, inputs);
  Gradients grads = tape.backward(loss);

  for (auto& [name, m] : inputs) {
    REQUIRE(grads.count(name) == 1);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        double orig = m(i, j);
        m(i, j) = orig + h;
        Tape tp;
        double up = tp.value(build(tp, inputs))(0, 0);
        m(i, j) = orig - h;
        Tape tm;
        double dn = tm.value(build(tm, inputs))(0, 0);
        m(i, j) = orig;
        double fd = (up - dn) / (2.0 * h);
        double an = grads.at(name)(i, j);
        double denom = std::max({1.0, std::abs(fd), std::abs(an)});
        CHECK_MESSAGE(std::abs(fd - an) / denom < tol,
                      name << "(" << i << "," << j << "): fd=" << fd << " analytic=" << an);
      }
    }
  }
}

std::map<std::string, Mat> random_inputs(std::initializer_list<std::pair<std::string, std::pair<int, int>>> spec,
                                         uint64_t seed) {
  SeededRng rng(seed);
  std::map<std::string, Mat> out;
  for (const auto& [name, shape] : spec) {
    out[name] = vmbtest::random_mat(rng, shape.first, shape.second);
  }
  return out;
}

Var params_on_tape(Tape& tape, const std::map<std::string, Mat>& inputs, const std::string& name) {
  return tape.param(name, inputs.at(name));
}

}  // namespace

TEST_CASE("gradcheck: matmul with bias row") {
  check_gradients(
      [](Tape& t, const std::map<std::string, Mat>& in) {
        Var a = params_on_tape(t, in, "a");
        Var w = params_on_tape(t, in, "w");
        Var b = params_on_tape(t, in, "b");
        Var y = t.add_rowvec(t.matmul(a, w), b);
        return t.mean_square(y, Mat::Constant(3, 4, 0.25));
      },
      random_inputs({{"a", {3, 5}}, {"w", {5, 4}}, {"b", {1, 4}}}, 1));
}

TEST_CASE("gradcheck: layer norm") {
  check_gradients(
      [](Tape& t, const std::map<std::string, Mat>& in) {
        Var x = params_on_tape(t, in, "x");
        Var g = params_on_tape(t, in, "g");
        Var b = params_on_tape(t, in, "b");
        return t.mean_square(t.layer_norm(x, g, b), Mat::Zero(4, 6));
      },
      random_inputs({{"x", {4, 6}}, {"g", {1, 6}}, {"b", {1, 6}}}, 2));
}

TEST_CASE("gradcheck: softmax rows") {
  check_gradients(
      [](Tape& t, const std::map<std::string, Mat>& in) {
        Var x = params_on_tape(t, in, "x");
        return t.mean_square(t.softmax_rows(x), Mat::Constant(3, 5, 0.2));
      },
      random_inputs({{"x", {3, 5}}}, 3));
}

TEST_CASE("gradcheck: gelu") {
  check_gradients(
      [](Tape& t, const std::map<std::string, Mat>& in) {
        Var x = params_on_tape(t, in, "x");
        return t.mean_square(t.gelu(x), Mat::Zero(4, 4));
      },
      random_inputs({{"x", {4, 4}}}, 4));
}

TEST_CASE("gradcheck: transpose, scale, slices and concats") {
  check_gradients(
      [](Tape& t, const std::map<std::string, Mat>& in) {
        Var x = params_on_tape(t, in, "x");
        Var y = params_on_tape(t, in, "y");
        Var xt = t.transpose(x);                       // [6x3]
        Var left = t.slice_cols(xt, 0, 2);             // [6x2]
        Var right = t.slice_cols(xt, 1, 2);            // [6x2]
        Var cat = t.concat_cols({left, right});        // [6x4]
        Var rows = t.concat_rows({cat, y});            // [8x4]
        Var top = t.slice_rows(rows, 2, 4);            // [4x4]
        return t.mean_square(t.scale(top, -1.75), Mat::Constant(4, 4, 0.1));
      },
      random_inputs({{"x", {3, 6}}, {"y", {2, 4}}}, 5));
}

TEST_CASE("gradcheck: attention-shaped composite") {
  check_gradients(
      [](Tape& t, const std::map<std::string, Mat>& in) {
        Var q = params_on_tape(t, in, "q");
        Var k = params_on_tape(t, in, "k");
        Var v = params_on_tape(t, in, "v");
        Var scores = t.scale(t.matmul(q, t.transpose(k)), 0.5);
        Var attn = t.softmax_rows(scores);
        return t.mean_square(t.matmul(attn, v), Mat::Zero(3, 4));
      },
      random_inputs({{"q", {3, 4}}, {"k", {5, 4}}, {"v", {5, 4}}}, 6));
}

TEST_CASE("tape: gradients are linear in the loss") {
  SeededRng rng(7);
  std::map<std::string, Mat> inputs;
  inputs["x"] = vmbtest::random_mat(rng, 3, 3);
  Mat target = vmbtest::random_mat(rng, 3, 3);

  auto run = [&](double factor) {
    Tape t;
    Var x = t.param("x", inputs.at("x"));
    Var y = t.gelu(x);
    Var loss = t.scale(t.mean_square(y, target), factor);
    return t.backward(loss).at("x");
  };
  Mat g1 = run(1.0);
  Mat g2 = run(2.0);
  CHECK((g2 - 2.0 * g1).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("tape: unused parameters get zero gradients") {
  Tape t;
  Var x = t.param("x", Mat::Ones(2, 2));
  Var unused = t.param("unused", Mat::Ones(3, 3));
  (void)unused;
  Var loss = t.mean_square(x, Mat::Zero(2, 2));
  Gradients g = t.backward(loss);
  CHECK(g.at("unused").isZero(0.0));
  CHECK(g.at("unused").rows() == 3);
  CHECK(!g.at("x").isZero(0.0));
}

TEST_CASE("tape: state errors") {
  SUBCASE("backward on an empty tape") {
    Tape t;
    CHECK_THROWS_AS(t.backward(Var{}), StateError);
  }
  SUBCASE("backward on a non-scalar node") {
    Tape t;
    Var x = t.leaf(Mat::Ones(2, 2));
    CHECK_THROWS_AS(t.backward(x), StateError);
  }
  SUBCASE("backward twice") {
    Tape t;
    Var x = t.param("x", Mat::Ones(2, 2));
    Var loss = t.mean_square(x, Mat::Zero(2, 2));
    t.backward(loss);
    CHECK_THROWS_AS(t.backward(loss), StateError);
  }
  SUBCASE("duplicate parameter registration") {
    Tape t;
    t.param("x", Mat::Ones(1, 1));
    CHECK_THROWS_AS(t.param("x", Mat::Ones(1, 1)), StateError);
  }
  SUBCASE("shape errors") {
    Tape t;
    Var a = t.leaf(Mat::Ones(2, 3));
    Var b = t.leaf(Mat::Ones(2, 3));
    CHECK_THROWS_AS(t.matmul(a, b), ShapeError);
    CHECK_THROWS_AS(t.slice_cols(a, 2, 2), ShapeError);
    CHECK_THROWS_AS(t.mean_square(a, Mat::Zero(3, 2)), ShapeError);
  }
}
