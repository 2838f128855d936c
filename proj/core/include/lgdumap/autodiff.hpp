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

#ifndef LGDUMAP_AUTODIFF_HPP
#define LGDUMAP_AUTODIFF_HPP

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace lgdumap::ad {

using Matrix = Eigen::MatrixXd;

struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over dense matrices. Scalars are 1x1. One tape per
// optimization step; nodes are appended in topological order and walked
// backwards once. Gradients accumulate, so a value may feed several ops.
class Tape {
 public:
  Var input(Matrix value, bool requires_grad = false);
  Var scalar(double v);

  const Matrix& value(Var v) const { return nodes_[check(v)].value; }
  const Matrix& grad(Var v) const;
  double scalar_value(Var v) const { return value(v)(0, 0); }
  bool requires_grad(Var v) const { return nodes_[check(v)].requires_grad; }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var div(Var a, Var b);  // elementwise
  Var add_rowvec(Var a, Var row);  // broadcast 1xc over nxc
  Var sub_colvec(Var a, Var col);  // broadcast nx1 over nxm
  Var scale(Var a, double s);
  Var add_const(Var a, double c);
  Var neg(Var a) { return scale(a, -1.0); }

  Var tanh_(Var a);
  Var exp_(Var a);
  Var log_(Var a);
  Var sqrt_(Var a);
  Var square(Var a);
  Var pow_const(Var a, double p);  // requires positive entries
  Var sigmoid(Var a);
  Var relu(Var a);
  Var clamp(Var a, double lo, double hi);  // zero gradient where clamped

  Var sum(Var a);        // -> 1x1
  Var mean(Var a);       // -> 1x1
  Var row_sum(Var a);    // nxm -> nx1
  Var row_dot(Var a, Var b);  // nxm . nxm -> nx1

  Var concat_cols(Var a, Var b);
  Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);  // column-major
  Var gather_rows(Var a, std::vector<int> rows);
  Var gather_cols(Var a, std::vector<int> cols);
  Var row_pick(Var a, std::vector<int> col_of_row);  // nxm -> nx1
  Var outer_diff(Var col, Var row);  // nx1, 1xm -> nxm of col_i - row_j
  Var logsumexp_rows(Var a);         // nxm -> nx1, max-stabilized

  // Seeds d(root)/d(root) = 1 and propagates to every requires_grad node.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&)> backprop;
    bool requires_grad = false;
    bool grad_ready = false;
  };

  int check(Var v) const;
  Var make(Matrix value, bool requires_grad, std::function<void(Tape&)> fn);
  Matrix& grad_ref(int idx);
  void accum(int idx, const Matrix& g);

  std::vector<Node> nodes_;
};

}  // namespace lgdumap::ad

#endif  // LGDUMAP_AUTODIFF_HPP
