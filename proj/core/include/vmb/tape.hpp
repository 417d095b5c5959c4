#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vmb/latent.hpp"

namespace vmb {

class Tape;

// Handle to a node recorded on a Tape.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

using Gradients = std::map<std::string, Mat>;

// Reverse-mode autodiff over dense double matrices. A Tape records one
// forward computation; backward() walks the record once, in reverse, and
// returns the gradient for every parameter registered on the tape
// (zero-shaped gradients for registered-but-unreached parameters).
//
// Tapes are single-use: record a forward pass, call backward at most once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Constant input; no gradient tracked.
  Var leaf(Mat value);
  // Named trainable leaf. A name may be registered once per tape.
  Var param(const std::string& name, Mat value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var add_rowvec(Var a, Var row);
  Var scale(Var a, double k);
  Var transpose(Var a);
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index n);
  Var slice_rows(Var a, Eigen::Index start, Eigen::Index n);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var softmax_rows(Var a);
  Var layer_norm(Var x, Var gain, Var bias);
  Var gelu(Var a);
  // Scalar [1x1] node: mean((a - target)^2) over all entries.
  Var mean_square(Var a, const Mat& target);

  const Mat& value(Var v) const;
  size_t size() const { return nodes_.size(); }

  // Gradients of the scalar loss node w.r.t. every registered parameter.
  // Throws StateError if nothing was recorded, the handle is invalid, the
  // loss is not scalar, or backward already ran on this tape.
  Gradients backward(Var loss);

 private:
  struct Node {
    Mat value;
    std::string param_name;
    std::function<void(Tape&, const Mat&)> backprop;
  };

  Var push(Mat value, std::function<void(Tape&, const Mat&)> backprop);
  const Mat& val(int idx) const { return nodes_[static_cast<size_t>(idx)].value; }
  void accumulate(int idx, const Mat& g);
  int check(Var v, const char* op) const;

  std::vector<Node> nodes_;
  std::vector<Mat> grads_;
  std::map<std::string, int> param_nodes_;
  bool backward_done_ = false;

  static constexpr double kLayerNormEps = 1e-5;
};

}  // namespace vmb
