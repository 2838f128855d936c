// Copyright 2026 The lgdumap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lgdumap/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace lgdumap::ad {

namespace {
void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(std::string("autodiff: ") + what);
}
}  // namespace

int Tape::check(Var v) const {
  if (v.idx < 0 || v.idx >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("autodiff: invalid Var handle");
  return v.idx;
}

Var Tape::make(Matrix value, bool requires_grad, std::function<void(Tape&)> fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Matrix value, bool requires_grad) {
  return make(std::move(value), requires_grad, nullptr);
}

Var Tape::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return input(std::move(m), false);
}

const Matrix& Tape::grad(Var v) const {
  const Node& n = nodes_[check(v)];
  if (!n.grad_ready)
    throw std::logic_error("autodiff: gradient not computed for this node");
  return n.grad;
}

Matrix& Tape::grad_ref(int idx) { return nodes_[static_cast<std::size_t>(idx)].grad; }

void Tape::accum(int idx, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(idx)];
  if (!n.requires_grad) return;
  if (!n.grad_ready) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad_ready = true;
  }
  n.grad += g;
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.cols() == B.rows(), "matmul dimension mismatch");
  bool rg = requires_grad(a) || requires_grad(b);
  int ai = a.idx, bi = b.idx;
  Var out = make(A * B, rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, bi, oi](Tape& t) {
      const Matrix& G = t.grad_ref(oi);
      t.accum(ai, G * t.nodes_[static_cast<std::size_t>(bi)].value.transpose());
      t.accum(bi, t.nodes_[static_cast<std::size_t>(ai)].value.transpose() * G);
    };
  return out;
}

Var Tape::add(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "add shape mismatch");
  bool rg = requires_grad(a) || requires_grad(b);
  int ai = a.idx, bi = b.idx;
  Var out = make(A + B, rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, bi, oi](Tape& t) {
      const Matrix& G = t.grad_ref(oi);
      t.accum(ai, G);
      t.accum(bi, G);
    };
  return out;
}

Var Tape::sub(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "sub shape mismatch");
  bool rg = requires_grad(a) || requires_grad(b);
  int ai = a.idx, bi = b.idx;
  Var out = make(A - B, rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, bi, oi](Tape& t) {
      const Matrix& G = t.grad_ref(oi);
      t.accum(ai, G);
      t.accum(bi, -G);
    };
  return out;
}

Var Tape::mul(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "mul shape mismatch");
  bool rg = requires_grad(a) || requires_grad(b);
  int ai = a.idx, bi = b.idx;
  Var out = make(A.cwiseProduct(B), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, bi, oi](Tape& t) {
      const Matrix& G = t.grad_ref(oi);
      t.accum(ai, G.cwiseProduct(t.nodes_[static_cast<std::size_t>(bi)].value));
      t.accum(bi, G.cwiseProduct(t.nodes_[static_cast<std::size_t>(ai)].value));
    };
  return out;
}

Var Tape::div(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "div shape mismatch");
  bool rg = requires_grad(a) || requires_grad(b);
  int ai = a.idx, bi = b.idx;
  Var out = make(A.cwiseQuotient(B), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, bi, oi](Tape& t) {
      const Matrix& G = t.grad_ref(oi);
      const Matrix& Bv = t.nodes_[static_cast<std::size_t>(bi)].value;
      const Matrix& Ov = t.nodes_[static_cast<std::size_t>(oi)].value;
      t.accum(ai, G.cwiseQuotient(Bv));
      t.accum(bi, -G.cwiseProduct(Ov).cwiseQuotient(Bv));
    };
  return out;
}

Var Tape::add_rowvec(Var a, Var row) {
  const Matrix& A = value(a);
  const Matrix& R = value(row);
  require(R.rows() == 1 && R.cols() == A.cols(), "add_rowvec shape mismatch");
  bool rg = requires_grad(a) || requires_grad(row);
  int ai = a.idx, ri = row.idx;
  Var out = make(A.rowwise() + R.row(0), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, ri, oi](Tape& t) {
      const Matrix& G = t.grad_ref(oi);
      t.accum(ai, G);
      t.accum(ri, G.colwise().sum());
    };
  return out;
}

Var Tape::sub_colvec(Var a, Var col) {
  const Matrix& A = value(a);
  const Matrix& C = value(col);
  require(C.cols() == 1 && C.rows() == A.rows(), "sub_colvec shape mismatch");
  bool rg = requires_grad(a) || requires_grad(col);
  int ai = a.idx, ci = col.idx;
  Var out = make(A.colwise() - C.col(0), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, ci, oi](Tape& t) {
      const Matrix& G = t.grad_ref(oi);
      t.accum(ai, G);
      t.accum(ci, -G.rowwise().sum());
    };
  return out;
}

Var Tape::scale(Var a, double s) {
  bool rg = requires_grad(a);
  int ai = a.idx;
  Var out = make(value(a) * s, rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi, s](Tape& t) {
      t.accum(ai, t.grad_ref(oi) * s);
    };
  return out;
}

Var Tape::add_const(Var a, double c) {
  bool rg = requires_grad(a);
  int ai = a.idx;
  Var out = make(value(a).array() + c, rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi](Tape& t) {
      t.accum(ai, t.grad_ref(oi));
    };
  return out;
}

Var Tape::tanh_(Var a) {
  bool rg = requires_grad(a);
  int ai = a.idx;
  Var out = make(value(a).array().tanh(), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi](Tape& t) {
      const Matrix& O = t.nodes_[static_cast<std::size_t>(oi)].value;
      t.accum(ai, (t.grad_ref(oi).array() * (1.0 - O.array().square())).matrix());
    };
  return out;
}

Var Tape::exp_(Var a) {
  bool rg = requires_grad(a);
  int ai = a.idx;
  Var out = make(value(a).array().exp(), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi](Tape& t) {
      t.accum(ai, t.grad_ref(oi).cwiseProduct(t.nodes_[static_cast<std::size_t>(oi)].value));
    };
  return out;
}

Var Tape::log_(Var a) {
  bool rg = requires_grad(a);
  int ai = a.idx;
  Var out = make(value(a).array().log(), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi](Tape& t) {
      t.accum(ai, t.grad_ref(oi).cwiseQuotient(t.nodes_[static_cast<std::size_t>(ai)].value));
    };
  return out;
}

Var Tape::sqrt_(Var a) {
  bool rg = requires_grad(a);
  int ai = a.idx;
  Var out = make(value(a).array().sqrt(), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi](Tape& t) {
      const Matrix& O = t.nodes_[static_cast<std::size_t>(oi)].value;
      t.accum(ai, (t.grad_ref(oi).array() * 0.5 / O.array()).matrix());
    };
  return out;
}

Var Tape::square(Var a) {
  bool rg = requires_grad(a);
  int ai = a.idx;
  Var out = make(value(a).array().square(), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi](Tape& t) {
      t.accum(ai, 2.0 * t.grad_ref(oi).cwiseProduct(t.nodes_[static_cast<std::size_t>(ai)].value));
    };
  return out;
}

Var Tape::pow_const(Var a, double p) {
  require((value(a).array() > 0.0).all(), "pow_const requires positive base");
  bool rg = requires_grad(a);
  int ai = a.idx;
  Var out = make(value(a).array().pow(p), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi, p](Tape& t) {
      const Matrix& A = t.nodes_[static_cast<std::size_t>(ai)].value;
      t.accum(ai, (t.grad_ref(oi).array() * p * A.array().pow(p - 1.0)).matrix());
    };
  return out;
}

Var Tape::sigmoid(Var a) {
  bool rg = requires_grad(a);
  int ai = a.idx;
  Matrix v = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
  Var out = make(std::move(v), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi](Tape& t) {
      const Matrix& O = t.nodes_[static_cast<std::size_t>(oi)].value;
      t.accum(ai, (t.grad_ref(oi).array() * O.array() * (1.0 - O.array())).matrix());
    };
  return out;
}

Var Tape::relu(Var a) {
  bool rg = requires_grad(a);
  int ai = a.idx;
  Var out = make(value(a).cwiseMax(0.0), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi](Tape& t) {
      const Matrix& A = t.nodes_[static_cast<std::size_t>(ai)].value;
      t.accum(ai, (t.grad_ref(oi).array() * (A.array() > 0.0).cast<double>()).matrix());
    };
  return out;
}

Var Tape::clamp(Var a, double lo, double hi) {
  bool rg = requires_grad(a);
  int ai = a.idx;
  Var out = make(value(a).cwiseMax(lo).cwiseMin(hi), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi, lo, hi](Tape& t) {
      const Matrix& A = t.nodes_[static_cast<std::size_t>(ai)].value;
      Matrix mask = ((A.array() > lo) && (A.array() < hi)).cast<double>();
      t.accum(ai, t.grad_ref(oi).cwiseProduct(mask));
    };
  return out;
}

Var Tape::sum(Var a) {
  bool rg = requires_grad(a);
  int ai = a.idx;
  Matrix v(1, 1);
  v(0, 0) = value(a).sum();
  Var out = make(std::move(v), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi](Tape& t) {
      const Matrix& A = t.nodes_[static_cast<std::size_t>(ai)].value;
      t.accum(ai, Matrix::Constant(A.rows(), A.cols(), t.grad_ref(oi)(0, 0)));
    };
  return out;
}

Var Tape::mean(Var a) {
  double n = static_cast<double>(value(a).size());
  require(n > 0, "mean of empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var Tape::row_sum(Var a) {
  bool rg = requires_grad(a);
  int ai = a.idx;
  Var out = make(value(a).rowwise().sum(), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi](Tape& t) {
      const Matrix& A = t.nodes_[static_cast<std::size_t>(ai)].value;
      t.accum(ai, t.grad_ref(oi).replicate(1, A.cols()));
    };
  return out;
}

Var Tape::row_dot(Var a, Var b) { return row_sum(mul(a, b)); }

Var Tape::concat_cols(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.rows() == B.rows(), "concat_cols row mismatch");
  bool rg = requires_grad(a) || requires_grad(b);
  Matrix v(A.rows(), A.cols() + B.cols());
  v << A, B;
  int ai = a.idx, bi = b.idx;
  Eigen::Index ac = A.cols(), bc = B.cols();
  Var out = make(std::move(v), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, bi, oi, ac, bc](Tape& t) {
      const Matrix& G = t.grad_ref(oi);
      t.accum(ai, G.leftCols(ac));
      t.accum(bi, G.rightCols(bc));
    };
  return out;
}

Var Tape::reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  const Matrix& A = value(a);
  require(A.size() == rows * cols, "reshape size mismatch");
  bool rg = requires_grad(a);
  Matrix v = Eigen::Map<const Matrix>(A.data(), rows, cols);
  int ai = a.idx;
  Var out = make(std::move(v), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi](Tape& t) {
      const Matrix& G = t.grad_ref(oi);
      const Matrix& A = t.nodes_[static_cast<std::size_t>(ai)].value;
      t.accum(ai, Eigen::Map<const Matrix>(G.data(), A.rows(), A.cols()));
    };
  return out;
}

Var Tape::gather_rows(Var a, std::vector<int> rows) {
  const Matrix& A = value(a);
  for (int r : rows) require(r >= 0 && r < A.rows(), "gather_rows index out of range");
  bool rg = requires_grad(a);
  Matrix v(static_cast<Eigen::Index>(rows.size()), A.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = A.row(rows[i]);
  int ai = a.idx;
  Var out = make(std::move(v), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi, rows = std::move(rows)](Tape& t) {
      const Matrix& G = t.grad_ref(oi);
      const Matrix& A = t.nodes_[static_cast<std::size_t>(ai)].value;
      Matrix g = Matrix::Zero(A.rows(), A.cols());
      for (std::size_t i = 0; i < rows.size(); ++i)
        g.row(rows[i]) += G.row(static_cast<Eigen::Index>(i));
      t.accum(ai, g);
    };
  return out;
}

Var Tape::gather_cols(Var a, std::vector<int> cols) {
  const Matrix& A = value(a);
  for (int c : cols) require(c >= 0 && c < A.cols(), "gather_cols index out of range");
  bool rg = requires_grad(a);
  Matrix v(A.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) v.col(static_cast<Eigen::Index>(i)) = A.col(cols[i]);
  int ai = a.idx;
  Var out = make(std::move(v), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi, cols = std::move(cols)](Tape& t) {
      const Matrix& G = t.grad_ref(oi);
      const Matrix& A = t.nodes_[static_cast<std::size_t>(ai)].value;
      Matrix g = Matrix::Zero(A.rows(), A.cols());
      for (std::size_t i = 0; i < cols.size(); ++i)
        g.col(cols[i]) += G.col(static_cast<Eigen::Index>(i));
      t.accum(ai, g);
    };
  return out;
}

Var Tape::row_pick(Var a, std::vector<int> col_of_row) {
  const Matrix& A = value(a);
  require(static_cast<Eigen::Index>(col_of_row.size()) == A.rows(), "row_pick size mismatch");
  for (int c : col_of_row) require(c >= 0 && c < A.cols(), "row_pick column out of range");
  bool rg = requires_grad(a);
  Matrix v(A.rows(), 1);
  for (Eigen::Index i = 0; i < A.rows(); ++i) v(i, 0) = A(i, col_of_row[static_cast<std::size_t>(i)]);
  int ai = a.idx;
  Var out = make(std::move(v), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi, col_of_row = std::move(col_of_row)](Tape& t) {
      const Matrix& G = t.grad_ref(oi);
      const Matrix& A = t.nodes_[static_cast<std::size_t>(ai)].value;
      Matrix g = Matrix::Zero(A.rows(), A.cols());
      for (Eigen::Index i = 0; i < A.rows(); ++i)
        g(i, col_of_row[static_cast<std::size_t>(i)]) += G(i, 0);
      t.accum(ai, g);
    };
  return out;
}

Var Tape::outer_diff(Var col, Var row) {
  const Matrix& C = value(col);
  const Matrix& R = value(row);
  require(C.cols() == 1 && R.rows() == 1, "outer_diff expects nx1 and 1xm");
  bool rg = requires_grad(col) || requires_grad(row);
  Matrix v = C.col(0).replicate(1, R.cols());
  v.array().rowwise() -= R.row(0).array();
  int ci = col.idx, ri = row.idx;
  Var out = make(std::move(v), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ci, ri, oi](Tape& t) {
      const Matrix& G = t.grad_ref(oi);
      t.accum(ci, G.rowwise().sum());
      t.accum(ri, -G.colwise().sum());
    };
  return out;
}

Var Tape::logsumexp_rows(Var a) {
  const Matrix& A = value(a);
  require(A.cols() >= 1, "logsumexp_rows of empty matrix");
  bool rg = requires_grad(a);
  Matrix v(A.rows(), 1);
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    double m = A.row(i).maxCoeff();
    v(i, 0) = m + std::log((A.row(i).array() - m).exp().sum());
  }
  int ai = a.idx;
  Var out = make(std::move(v), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[static_cast<std::size_t>(oi)].backprop = [ai, oi](Tape& t) {
      const Matrix& A = t.nodes_[static_cast<std::size_t>(ai)].value;
      const Matrix& O = t.nodes_[static_cast<std::size_t>(oi)].value;
      const Matrix& G = t.grad_ref(oi);
      Matrix soft = (A.colwise() - O.col(0)).array().exp();
      t.accum(ai, soft.array().colwise() * G.col(0).array());
    };
  return out;
}

void Tape::backward(Var root) {
  int ri = check(root);
  const Node& r = nodes_[static_cast<std::size_t>(ri)];
  require(r.value.rows() == 1 && r.value.cols() == 1, "backward root must be scalar");
  require(r.requires_grad, "backward root does not require grad");
  for (auto& n : nodes_) {
    n.grad_ready = false;
    n.grad.resize(0, 0);
  }
  accum(ri, Matrix::Constant(1, 1, 1.0));
  for (int i = ri; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad && n.grad_ready && n.backprop) n.backprop(*this);
  }
  // Leaves that never received a contribution still expose a zero grad.
  for (auto& n : nodes_) {
    if (n.requires_grad && !n.grad_ready) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
      n.grad_ready = true;
    }
  }
}

}  // namespace lgdumap::ad
