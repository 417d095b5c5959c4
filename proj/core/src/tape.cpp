#include "vmb/tape.hpp"

#include <cmath>

#include "vmb/errors.hpp"

namespace vmb {

namespace {

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad_scalar(double x) {
  double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  return cdf + x * phi;
}

}  // namespace

Var Tape::push(Mat value, std::function<void(Tape&, const Mat&)> backprop) {
  nodes_.push_back(Node{std::move(value), {}, std::move(backprop)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

int Tape::check(Var v, const char* op) const {
  if (!v.valid() || v.idx >= static_cast<int>(nodes_.size())) {
    throw StateError(std::string(op) + ": invalid tape handle");
  }
  return v.idx;
}

void Tape::accumulate(int idx, const Mat& g) {
  Mat& slot = grads_[static_cast<size_t>(idx)];
  if (slot.size() == 0) {
    slot = g;
  } else {
    slot += g;
  }
}

Var Tape::leaf(Mat value) { return push(std::move(value), nullptr); }

Var Tape::param(const std::string& name, Mat value) {
  if (name.empty()) throw StateError("param: empty name");
  if (param_nodes_.count(name)) {
    throw StateError("param: \"" + name + "\" registered twice on one tape");
  }
  Var v = push(std::move(value), nullptr);
  nodes_.back().param_name = name;
  param_nodes_[name] = v.idx;
  return v;
}

const Mat& Tape::value(Var v) const { return val(check(v, "value")); }

Var Tape::matmul(Var a, Var b) {
  int ia = check(a, "matmul"), ib = check(b, "matmul");
  if (val(ia).cols() != val(ib).rows()) {
    throw ShapeError("matmul: inner dimensions disagree (" + std::to_string(val(ia).cols()) +
                     " vs " + std::to_string(val(ib).rows()) + ")");
  }
  Mat out = val(ia) * val(ib);
  return push(std::move(out), [ia, ib](Tape& t, const Mat& g) {
    t.accumulate(ia, g * t.val(ib).transpose());
    t.accumulate(ib, t.val(ia).transpose() * g);
  });
}

Var Tape::add(Var a, Var b) {
  int ia = check(a, "add"), ib = check(b, "add");
  if (val(ia).rows() != val(ib).rows() || val(ia).cols() != val(ib).cols()) {
    throw ShapeError("add: shape mismatch");
  }
  Mat out = val(ia) + val(ib);
  return push(std::move(out), [ia, ib](Tape& t, const Mat& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var Tape::add_rowvec(Var a, Var row) {
  int ia = check(a, "add_rowvec"), ir = check(row, "add_rowvec");
  if (val(ir).rows() != 1 || val(ir).cols() != val(ia).cols()) {
    throw ShapeError("add_rowvec: row vector shape mismatch");
  }
  Mat out = val(ia).rowwise() + val(ir).row(0);
  return push(std::move(out), [ia, ir](Tape& t, const Mat& g) {
    t.accumulate(ia, g);
    t.accumulate(ir, g.colwise().sum());
  });
}

Var Tape::scale(Var a, double k) {
  int ia = check(a, "scale");
  Mat out = k * val(ia);
  return push(std::move(out), [ia, k](Tape& t, const Mat& g) { t.accumulate(ia, k * g); });
}

Var Tape::transpose(Var a) {
  int ia = check(a, "transpose");
  Mat out = val(ia).transpose();
  return push(std::move(out), [ia](Tape& t, const Mat& g) { t.accumulate(ia, g.transpose()); });
}

Var Tape::slice_cols(Var a, Eigen::Index start, Eigen::Index n) {
  int ia = check(a, "slice_cols");
  if (start < 0 || n < 1 || start + n > val(ia).cols()) {
    throw ShapeError("slice_cols: range outside matrix");
  }
  Mat out = val(ia).middleCols(start, n);
  return push(std::move(out), [ia, start, n](Tape& t, const Mat& g) {
    Mat full = Mat::Zero(t.val(ia).rows(), t.val(ia).cols());
    full.middleCols(start, n) = g;
    t.accumulate(ia, full);
  });
}

Var Tape::slice_rows(Var a, Eigen::Index start, Eigen::Index n) {
  int ia = check(a, "slice_rows");
  if (start < 0 || n < 1 || start + n > val(ia).rows()) {
    throw ShapeError("slice_rows: range outside matrix");
  }
  Mat out = val(ia).middleRows(start, n);
  return push(std::move(out), [ia, start, n](Tape& t, const Mat& g) {
    Mat full = Mat::Zero(t.val(ia).rows(), t.val(ia).cols());
    full.middleRows(start, n) = g;
    t.accumulate(ia, full);
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  std::vector<int> idx;
  Eigen::Index rows = 0, cols = 0;
  for (Var p : parts) {
    int i = check(p, "concat_cols");
    idx.push_back(i);
    if (rows == 0) rows = val(i).rows();
    if (val(i).rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += val(i).cols();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (int i : idx) {
    out.middleCols(at, val(i).cols()) = val(i);
    at += val(i).cols();
  }
  return push(std::move(out), [idx](Tape& t, const Mat& g) {
    Eigen::Index at = 0;
    for (int i : idx) {
      Eigen::Index n = t.val(i).cols();
      t.accumulate(i, g.middleCols(at, n));
      at += n;
    }
  });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  std::vector<int> idx;
  Eigen::Index rows = 0, cols = 0;
  for (Var p : parts) {
    int i = check(p, "concat_rows");
    idx.push_back(i);
    if (cols == 0) cols = val(i).cols();
    if (val(i).cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += val(i).rows();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (int i : idx) {
    out.middleRows(at, val(i).rows()) = val(i);
    at += val(i).rows();
  }
  return push(std::move(out), [idx](Tape& t, const Mat& g) {
    Eigen::Index at = 0;
    for (int i : idx) {
      Eigen::Index n = t.val(i).rows();
      t.accumulate(i, g.middleRows(at, n));
      at += n;
    }
  });
}

Var Tape::softmax_rows(Var a) {
  int ia = check(a, "softmax_rows");
  Mat out = val(ia);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    double mx = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  int iy = push(std::move(out), nullptr).idx;
  nodes_[static_cast<size_t>(iy)].backprop = [ia, iy](Tape& t, const Mat& g) {
    const Mat& y = t.val(iy);
    Mat gx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      double dot = g.row(r).cwiseProduct(y.row(r)).sum();
      gx.row(r) = (y.row(r).array() * (g.row(r).array() - dot)).matrix();
    }
    t.accumulate(ia, gx);
  };
  return Var{iy};
}

Var Tape::layer_norm(Var x, Var gain, Var bias) {
  int ix = check(x, "layer_norm"), ig = check(gain, "layer_norm"), ib = check(bias, "layer_norm");
  Eigen::Index n = val(ix).cols();
  if (val(ig).rows() != 1 || val(ig).cols() != n || val(ib).rows() != 1 || val(ib).cols() != n) {
    throw ShapeError("layer_norm: gain/bias must be [1 x cols]");
  }
  Mat xhat(val(ix).rows(), n);
  Eigen::VectorXd inv_std(val(ix).rows());
  for (Eigen::Index r = 0; r < val(ix).rows(); ++r) {
    double mean = val(ix).row(r).mean();
    double var = (val(ix).row(r).array() - mean).square().mean();
    double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std(r) = is;
    xhat.row(r) = (val(ix).row(r).array() - mean) * is;
  }
  Mat out = (xhat.array().rowwise() * val(ig).row(0).array()).rowwise() + val(ib).row(0).array();
  return push(std::move(out), [ix, ig, ib, xhat, inv_std, n](Tape& t, const Mat& g) {
    const Mat& gain_row = t.val(ig);
    Mat gxhat = g.array().rowwise() * gain_row.row(0).array();
    Mat gx(g.rows(), n);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      double mean_g = gxhat.row(r).mean();
      double mean_gx = gxhat.row(r).cwiseProduct(xhat.row(r)).mean();
      gx.row(r) =
          (gxhat.row(r).array() - mean_g - xhat.row(r).array() * mean_gx) * inv_std(r);
    }
    t.accumulate(ix, gx);
    t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
    t.accumulate(ib, g.colwise().sum());
  });
}

Var Tape::gelu(Var a) {
  int ia = check(a, "gelu");
  Mat out = val(ia).unaryExpr([](double x) { return gelu_scalar(x); });
  return push(std::move(out), [ia](Tape& t, const Mat& g) {
    Mat dgelu = t.val(ia).unaryExpr([](double x) { return gelu_grad_scalar(x); });
    t.accumulate(ia, g.cwiseProduct(dgelu));
  });
}

Var Tape::mean_square(Var a, const Mat& target) {
  int ia = check(a, "mean_square");
  if (val(ia).rows() != target.rows() || val(ia).cols() != target.cols()) {
    throw ShapeError("mean_square: target shape mismatch");
  }
  Mat diff = val(ia) - target;
  double n = static_cast<double>(diff.size());
  Mat out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return push(std::move(out), [ia, diff, n](Tape& t, const Mat& g) {
    t.accumulate(ia, (2.0 * g(0, 0) / n) * diff);
  });
}

Gradients Tape::backward(Var loss) {
  if (nodes_.empty()) throw StateError("backward: no forward pass recorded");
  if (backward_done_) throw StateError("backward: tape already consumed");
  int il = check(loss, "backward");
  if (val(il).rows() != 1 || val(il).cols() != 1) {
    throw StateError("backward: loss node must be scalar");
  }
  backward_done_ = true;
  grads_.assign(nodes_.size(), Mat());
  grads_[static_cast<size_t>(il)] = Mat::Ones(1, 1);
  for (int i = il; i >= 0; --i) {
    const Node& node = nodes_[static_cast<size_t>(i)];
    if (grads_[static_cast<size_t>(i)].size() == 0 || !node.backprop) continue;
    node.backprop(*this, grads_[static_cast<size_t>(i)]);
  }
  Gradients out;
  for (const auto& [name, idx] : param_nodes_) {
    const Mat& g = grads_[static_cast<size_t>(idx)];
    out[name] = g.size() ? g : Mat::Zero(val(idx).rows(), val(idx).cols());
  }
  grads_.clear();
  return out;
}

}  // namespace vmb
