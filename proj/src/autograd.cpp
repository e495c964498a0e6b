// Copyright 2026  The phonokws authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "phonokws/autograd.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace phonokws {

struct TensorNode {
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  std::vector<int> shape;
  bool requires_grad = false;
  bool grad_alloc = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (!grad_alloc) {
      grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
      grad_alloc = true;
    }
  }
};

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

// Storage rule: rank 0 -> 1x1, rank 1 {n} -> n x 1, rank 2 {m,n} -> m x n,
// rank 3 {a,b,c} -> a x (b*c).
std::pair<int, int> storage_dims(const std::vector<int>& shape) {
  switch (shape.size()) {
    case 0:
      return {1, 1};
    case 1:
      return {shape[0], 1};
    case 2:
      return {shape[0], shape[1]};
    case 3:
      return {shape[0], shape[1] * shape[2]};
    default:
      throw ShapeMismatch("tensors of rank > 3 are not supported");
  }
}

void check_finite(const Eigen::MatrixXd& m, const char* op) {
  if (!m.allFinite()) {
    throw NonFiniteValue(std::string("non-finite values produced by ") + op);
  }
}

NodePtr make_leaf(Eigen::MatrixXd value, std::vector<int> shape,
                  bool requires_grad) {
  check_finite(value, "leaf construction");
  auto n = std::make_shared<TensorNode>();
  n->value = std::move(value);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return n;
}

Tensor make_op(Eigen::MatrixXd value, std::vector<int> shape, const char* op,
               std::vector<NodePtr> parents,
               std::function<void(TensorNode&)> backward_fn) {
  check_finite(value, op);
  auto n = std::make_shared<TensorNode>();
  n->value = std::move(value);
  n->shape = std::move(shape);
  for (const auto& p : parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(n);
}

const char* shape_str(const std::vector<int>& s, std::string& buf) {
  buf = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) buf += ",";
    buf += std::to_string(s[i]);
  }
  buf += ")";
  return buf.c_str();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  std::string sa, sb;
  throw ShapeMismatch(std::string(op) + ": incompatible shapes " +
                      shape_str(a.shape(), sa) + " and " +
                      shape_str(b.shape(), sb));
}

void require_rank1(const Tensor& t, const char* op, int len) {
  if (t.shape().size() != 1 || t.shape()[0] != len) {
    std::string s;
    throw ShapeMismatch(std::string(op) + ": expected rank-1 tensor of length " +
                        std::to_string(len) + ", got " +
                        shape_str(t.shape(), s));
  }
}

}  // namespace

// --- Tensor handle ---

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m, bool requires_grad) {
  return Tensor(make_leaf(m, {static_cast<int>(m.rows()),
                              static_cast<int>(m.cols())},
                          requires_grad));
}

Tensor Tensor::from_vector(const Eigen::VectorXd& v, bool requires_grad) {
  return Tensor(make_leaf(v, {static_cast<int>(v.size())}, requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = v;
  return Tensor(make_leaf(std::move(m), {}, requires_grad));
}

Tensor Tensor::zeros(const std::vector<int>& shape, bool requires_grad) {
  auto [r, c] = storage_dims(shape);
  return Tensor(make_leaf(Eigen::MatrixXd::Zero(r, c), shape, requires_grad));
}

Tensor Tensor::fill(const std::vector<int>& shape, double value,
                    bool requires_grad) {
  auto [r, c] = storage_dims(shape);
  return Tensor(
      make_leaf(Eigen::MatrixXd::Constant(r, c, value), shape, requires_grad));
}

Tensor Tensor::randn(const std::vector<int>& shape, std::mt19937& rng,
                     double stddev, bool requires_grad) {
  auto [r, c] = storage_dims(shape);
  Eigen::MatrixXd m(r, c);
  std::normal_distribution<double> dist(0.0, stddev);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = dist(rng);
  }
  return Tensor(make_leaf(std::move(m), shape, requires_grad));
}

const Eigen::MatrixXd& Tensor::value() const { return node_->value; }
Eigen::MatrixXd& Tensor::mutable_value() { return node_->value; }
const Eigen::MatrixXd& Tensor::grad() const {
  if (!node_->grad_alloc) {
    throw std::logic_error("gradient not computed for this tensor");
  }
  return node_->grad;
}
Eigen::MatrixXd& Tensor::mutable_grad() {
  if (!node_->grad_alloc) {
    throw std::logic_error("gradient not computed for this tensor");
  }
  return node_->grad;
}
bool Tensor::has_grad() const { return node_ && node_->grad_alloc; }
const std::vector<int>& Tensor::shape() const { return node_->shape; }
int Tensor::rows() const { return static_cast<int>(node_->value.rows()); }
int Tensor::cols() const { return static_cast<int>(node_->value.cols()); }
bool Tensor::requires_grad() const { return node_->requires_grad; }
double Tensor::item() const {
  if (node_->value.size() != 1) {
    throw ShapeMismatch("item() requires a scalar tensor");
  }
  return node_->value(0, 0);
}
void Tensor::zero_grad() { node_->grad_alloc = false; }

// --- primitives ---

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Eigen::MatrixXd v = a.value() * b.value();
  auto na = a.node(), nb = b.node();
  return make_op(std::move(v),
                 {static_cast<int>(a.rows()), static_cast<int>(b.cols())},
                 "matmul", {na, nb}, [na, nb](TensorNode& self) {
                   if (na->requires_grad) {
                     na->ensure_grad();
                     na->grad.noalias() += self.grad * nb->value.transpose();
                   }
                   if (nb->requires_grad) {
                     nb->ensure_grad();
                     nb->grad.noalias() += na->value.transpose() * self.grad;
                   }
                 });
}

Tensor transpose(const Tensor& a) {
  auto na = a.node();
  return make_op(a.value().transpose(), {a.cols(), a.rows()}, "transpose",
                 {na}, [na](TensorNode& self) {
                   na->ensure_grad();
                   na->grad += self.grad.transpose();
                 });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a, b);
  auto na = a.node(), nb = b.node();
  return make_op(a.value() + b.value(), a.shape(), "add", {na, nb},
                 [na, nb](TensorNode& self) {
                   if (na->requires_grad) {
                     na->ensure_grad();
                     na->grad += self.grad;
                   }
                   if (nb->requires_grad) {
                     nb->ensure_grad();
                     nb->grad += self.grad;
                   }
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a, b);
  auto na = a.node(), nb = b.node();
  return make_op(a.value() - b.value(), a.shape(), "sub", {na, nb},
                 [na, nb](TensorNode& self) {
                   if (na->requires_grad) {
                     na->ensure_grad();
                     na->grad += self.grad;
                   }
                   if (nb->requires_grad) {
                     nb->ensure_grad();
                     nb->grad -= self.grad;
                   }
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a, b);
  auto na = a.node(), nb = b.node();
  return make_op(a.value().cwiseProduct(b.value()), a.shape(), "mul", {na, nb},
                 [na, nb](TensorNode& self) {
                   if (na->requires_grad) {
                     na->ensure_grad();
                     na->grad += self.grad.cwiseProduct(nb->value);
                   }
                   if (nb->requires_grad) {
                     nb->ensure_grad();
                     nb->grad += self.grad.cwiseProduct(na->value);
                   }
                 });
}

Tensor scale(const Tensor& a, double c) {
  auto na = a.node();
  return make_op(a.value() * c, a.shape(), "scale", {na},
                 [na, c](TensorNode& self) {
                   na->ensure_grad();
                   na->grad += self.grad * c;
                 });
}

Tensor add_row_broadcast(const Tensor& a, const Tensor& bias) {
  require_rank1(bias, "add_row_broadcast", a.cols());
  Eigen::MatrixXd v = a.value();
  v.rowwise() += bias.value().col(0).transpose();
  auto na = a.node(), nb = bias.node();
  return make_op(std::move(v), a.shape(), "add_row_broadcast", {na, nb},
                 [na, nb](TensorNode& self) {
                   if (na->requires_grad) {
                     na->ensure_grad();
                     na->grad += self.grad;
                   }
                   if (nb->requires_grad) {
                     nb->ensure_grad();
                     nb->grad.col(0) += self.grad.colwise().sum().transpose();
                   }
                 });
}

Tensor mul_scalar_t(const Tensor& a, const Tensor& s) {
  if (s.value().size() != 1) shape_error("mul_scalar_t", a, s);
  const double sv = s.value()(0, 0);
  auto na = a.node(), ns = s.node();
  return make_op(a.value() * sv, a.shape(), "mul_scalar_t", {na, ns},
                 [na, ns, sv](TensorNode& self) {
                   if (na->requires_grad) {
                     na->ensure_grad();
                     na->grad += self.grad * sv;
                   }
                   if (ns->requires_grad) {
                     ns->ensure_grad();
                     ns->grad(0, 0) += self.grad.cwiseProduct(na->value).sum();
                   }
                 });
}

Tensor add_scalar_t(const Tensor& a, const Tensor& s) {
  if (s.value().size() != 1) shape_error("add_scalar_t", a, s);
  auto na = a.node(), ns = s.node();
  return make_op(a.value().array() + s.value()(0, 0), a.shape(),
                 "add_scalar_t", {na, ns}, [na, ns](TensorNode& self) {
                   if (na->requires_grad) {
                     na->ensure_grad();
                     na->grad += self.grad;
                   }
                   if (ns->requires_grad) {
                     ns->ensure_grad();
                     ns->grad(0, 0) += self.grad.sum();
                   }
                 });
}

Tensor exp_t(const Tensor& a) {
  Eigen::MatrixXd v = a.value().array().exp();
  auto na = a.node();
  return make_op(v, a.shape(), "exp", {na}, [na](TensorNode& self) {
    na->ensure_grad();
    na->grad += self.grad.cwiseProduct(self.value);
  });
}

Tensor gelu(const Tensor& a) {
  const Eigen::ArrayXXd x = a.value().array();
  const Eigen::ArrayXXd cdf = x.unaryExpr(
      [](double v) { return 0.5 * (1.0 + std::erf(v / std::sqrt(2.0))); });
  auto na = a.node();
  Eigen::MatrixXd cdf_m = cdf.matrix();
  return make_op((x * cdf).matrix(), a.shape(), "gelu", {na},
                 [na, cdf_m](TensorNode& self) {
                   na->ensure_grad();
                   const Eigen::ArrayXXd x2 = na->value.array();
                   const Eigen::ArrayXXd pdf =
                       (-0.5 * x2.square()).exp() / std::sqrt(2.0 * M_PI);
                   na->grad.array() +=
                       self.grad.array() * (cdf_m.array() + x2 * pdf);
                 });
}

Tensor log_sigmoid(const Tensor& a) {
  const Eigen::ArrayXXd x = a.value().array();
  // -softplus(-x), branch-stable on both tails.
  Eigen::ArrayXXd v(x.rows(), x.cols());
  const double* xd = x.data();
  double* vd = v.data();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = xd[i];
    vd[i] = xi >= 0.0 ? -std::log1p(std::exp(-xi))
                      : xi - std::log1p(std::exp(xi));
  }
  auto na = a.node();
  return make_op(v.matrix(), a.shape(), "log_sigmoid", {na},
                 [na](TensorNode& self) {
                   na->ensure_grad();
                   const Eigen::ArrayXXd x2 = na->value.array();
                   // d/dx log sigmoid(x) = sigmoid(-x)
                   na->grad.array() +=
                       self.grad.array() * (1.0 / (1.0 + x2.exp()));
                 });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  if (stride != 1 && stride != 2) {
    throw ShapeMismatch("conv1d: stride must be 1 or 2");
  }
  if (x.shape().size() != 2 || w.shape().size() != 3 || w.shape()[2] != 3 ||
      w.shape()[1] != x.shape()[1]) {
    shape_error("conv1d", x, w);
  }
  const int t_in = x.shape()[0], c_in = x.shape()[1];
  const int c_out = w.shape()[0];
  require_rank1(b, "conv1d bias", c_out);
  const int t_out = (t_in - 1) / stride + 1;  // kernel 3, zero padding 1

  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(t_out, 3 * c_in);
  for (int t = 0; t < t_out; ++t) {
    const int s = t * stride - 1;
    for (int j = 0; j < 3; ++j) {
      const int src = s + j;
      if (src < 0 || src >= t_in) continue;
      for (int c = 0; c < c_in; ++c) cols(t, c * 3 + j) = x.value()(src, c);
    }
  }
  Eigen::MatrixXd v = cols * w.value().transpose();
  v.rowwise() += b.value().col(0).transpose();

  auto nx = x.node(), nw = w.node(), nb = b.node();
  return make_op(
      std::move(v), {t_out, c_out}, "conv1d", {nx, nw, nb},
      [nx, nw, nb, cols, stride, t_in, c_in](TensorNode& self) {
        if (nw->requires_grad) {
          nw->ensure_grad();
          nw->grad.noalias() += self.grad.transpose() * cols;
        }
        if (nb->requires_grad) {
          nb->ensure_grad();
          nb->grad.col(0) += self.grad.colwise().sum().transpose();
        }
        if (nx->requires_grad) {
          nx->ensure_grad();
          const Eigen::MatrixXd dcols = self.grad * nw->value;
          const int t_out2 = static_cast<int>(dcols.rows());
          for (int t = 0; t < t_out2; ++t) {
            const int s = t * stride - 1;
            for (int j = 0; j < 3; ++j) {
              const int src = s + j;
              if (src < 0 || src >= t_in) continue;
              for (int c = 0; c < c_in; ++c) {
                nx->grad(src, c) += dcols(t, c * 3 + j);
              }
            }
          }
        }
      });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.shape().size() != 2) {
    throw ShapeMismatch("embedding_lookup: table must be rank 2");
  }
  const int v_size = table.shape()[0], dim = table.shape()[1];
  Eigen::MatrixXd v(static_cast<int>(ids.size()), dim);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= v_size) {
      throw ShapeMismatch("embedding_lookup: id " + std::to_string(ids[i]) +
                          " outside vocabulary of " + std::to_string(v_size));
    }
    v.row(static_cast<int>(i)) = table.value().row(ids[i]);
  }
  auto nt = table.node();
  auto ids_copy = ids;
  return make_op(std::move(v), {static_cast<int>(ids.size()), dim},
                 "embedding_lookup", {nt}, [nt, ids_copy](TensorNode& self) {
                   nt->ensure_grad();
                   for (size_t i = 0; i < ids_copy.size(); ++i) {
                     nt->grad.row(ids_copy[i]) +=
                         self.grad.row(static_cast<int>(i));
                   }
                 });
}

Tensor masked_softmax(const Tensor& scores, const std::vector<int>& mask) {
  if (static_cast<int>(mask.size()) != scores.cols()) {
    throw ShapeMismatch("masked_softmax: mask length " +
                        std::to_string(mask.size()) + " vs " +
                        std::to_string(scores.cols()) + " columns");
  }
  const int m = scores.rows(), n = scores.cols();
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(m, n);
  for (int i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (mask[j]) mx = std::max(mx, scores.value()(i, j));
    }
    if (!std::isfinite(mx)) continue;  // fully masked row stays zero
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      if (mask[j]) {
        v(i, j) = std::exp(scores.value()(i, j) - mx);
        z += v(i, j);
      }
    }
    for (int j = 0; j < n; ++j) v(i, j) /= z;
  }
  auto ns = scores.node();
  return make_op(std::move(v), scores.shape(), "masked_softmax", {ns},
                 [ns](TensorNode& self) {
                   ns->ensure_grad();
                   for (int i = 0; i < self.value.rows(); ++i) {
                     const auto p = self.value.row(i);
                     const auto g = self.grad.row(i);
                     const double dot = p.dot(g);
                     ns->grad.row(i).array() +=
                         p.array() * (g.array() - dot);
                   }
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  const int d = x.cols();
  require_rank1(gamma, "layer_norm gamma", d);
  require_rank1(beta, "layer_norm beta", d);
  const int m = x.rows();
  Eigen::MatrixXd xhat(m, d);
  Eigen::VectorXd inv_std(m);
  for (int i = 0; i < m; ++i) {
    const auto row = x.value().row(i);
    const double mean = row.mean();
    const double var = (row.array() - mean).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = (row.array() - mean) * inv_std(i);
  }
  const Eigen::RowVectorXd g_row = gamma.value().col(0).transpose();
  const Eigen::RowVectorXd b_row = beta.value().col(0).transpose();
  Eigen::MatrixXd v(m, d);
  for (int i = 0; i < m; ++i) {
    v.row(i) = xhat.row(i).cwiseProduct(g_row) + b_row;
  }

  auto nx = x.node(), ng = gamma.node(), nb = beta.node();
  return make_op(
      std::move(v), x.shape(), "layer_norm", {nx, ng, nb},
      [nx, ng, nb, xhat, inv_std](TensorNode& self) {
        if (ng->requires_grad) {
          ng->ensure_grad();
          ng->grad.col(0) +=
              self.grad.cwiseProduct(xhat).colwise().sum().transpose();
        }
        if (nb->requires_grad) {
          nb->ensure_grad();
          nb->grad.col(0) += self.grad.colwise().sum().transpose();
        }
        if (nx->requires_grad) {
          nx->ensure_grad();
          const Eigen::ArrayXd g = ng->value.col(0).array();
          for (int i = 0; i < self.grad.rows(); ++i) {
            const Eigen::ArrayXd dxh =
                self.grad.row(i).transpose().array() * g;
            const Eigen::ArrayXd xh = xhat.row(i).transpose().array();
            const double m1 = dxh.mean();
            const double m2 = (dxh * xh).mean();
            nx->grad.row(i).array() +=
                (inv_std(i) * (dxh - m1 - xh * m2)).transpose();
          }
        }
      });
}

Tensor mean_over_mask(const Tensor& x, const std::vector<int>& mask) {
  if (static_cast<int>(mask.size()) != x.rows()) {
    throw ShapeMismatch("mean_over_mask: mask length " +
                        std::to_string(mask.size()) + " vs " +
                        std::to_string(x.rows()) + " rows");
  }
  int count = 0;
  for (int v : mask) count += v != 0;
  if (count == 0) throw AllMasked("mean_over_mask: no valid positions");
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(1, x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    if (mask[i]) v += x.value().row(i);
  }
  v /= count;
  auto nx = x.node();
  auto mask_copy = mask;
  return make_op(std::move(v), {1, x.cols()}, "mean_over_mask", {nx},
                 [nx, mask_copy, count](TensorNode& self) {
                   nx->ensure_grad();
                   const Eigen::RowVectorXd g = self.grad.row(0) / count;
                   for (size_t i = 0; i < mask_copy.size(); ++i) {
                     if (mask_copy[i]) {
                       nx->grad.row(static_cast<int>(i)) += g;
                     }
                   }
                 });
}

Tensor zero_masked_rows(const Tensor& x, const std::vector<int>& mask) {
  if (static_cast<int>(mask.size()) != x.rows()) {
    throw ShapeMismatch("zero_masked_rows: mask length " +
                        std::to_string(mask.size()) + " vs " +
                        std::to_string(x.rows()) + " rows");
  }
  Eigen::MatrixXd v = x.value();
  for (int i = 0; i < v.rows(); ++i) {
    if (!mask[i]) v.row(i).setZero();
  }
  auto nx = x.node();
  auto mask_copy = mask;
  return make_op(std::move(v), x.shape(), "zero_masked_rows", {nx},
                 [nx, mask_copy](TensorNode& self) {
                   nx->ensure_grad();
                   for (size_t i = 0; i < mask_copy.size(); ++i) {
                     if (mask_copy[i]) {
                       nx->grad.row(static_cast<int>(i)) +=
                           self.grad.row(static_cast<int>(i));
                     }
                   }
                 });
}

Tensor l2_normalize(const Tensor& x) {
  const int m = x.rows();
  Eigen::MatrixXd v(m, x.cols());
  Eigen::VectorXd norms(m);
  for (int i = 0; i < m; ++i) {
    const double n = x.value().row(i).norm();
    if (n < 1e-300) {
      throw NonFiniteValue("l2_normalize: zero-norm row " + std::to_string(i));
    }
    norms(i) = n;
    v.row(i) = x.value().row(i) / n;
  }
  auto nx = x.node();
  return make_op(std::move(v), x.shape(), "l2_normalize", {nx},
                 [nx, norms](TensorNode& self) {
                   nx->ensure_grad();
                   for (int i = 0; i < self.value.rows(); ++i) {
                     const auto y = self.value.row(i);
                     const auto g = self.grad.row(i);
                     nx->grad.row(i) += (g - y * y.dot(g)) / norms(i);
                   }
                 });
}

Tensor slice_cols(const Tensor& x, int start, int count) {
  if (start < 0 || count <= 0 || start + count > x.cols()) {
    throw ShapeMismatch("slice_cols: range [" + std::to_string(start) + ", " +
                        std::to_string(start + count) + ") outside " +
                        std::to_string(x.cols()) + " columns");
  }
  auto nx = x.node();
  return make_op(x.value().middleCols(start, count), {x.rows(), count},
                 "slice_cols", {nx}, [nx, start, count](TensorNode& self) {
                   nx->ensure_grad();
                   nx->grad.middleCols(start, count) += self.grad;
                 });
}

Tensor slice_rows(const Tensor& x, int start, int count) {
  if (start < 0 || count <= 0 || start + count > x.rows()) {
    throw ShapeMismatch("slice_rows: range [" + std::to_string(start) + ", " +
                        std::to_string(start + count) + ") outside " +
                        std::to_string(x.rows()) + " rows");
  }
  auto nx = x.node();
  return make_op(x.value().middleRows(start, count), {count, x.cols()},
                 "slice_rows", {nx}, [nx, start, count](TensorNode& self) {
                   nx->ensure_grad();
                   nx->grad.middleRows(start, count) += self.grad;
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols: no inputs");
  const int m = parts[0].rows();
  int total = 0;
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) {
    if (p.rows() != m) shape_error("concat_cols", parts[0], p);
    total += p.cols();
    nodes.push_back(p.node());
  }
  Eigen::MatrixXd v(m, total);
  int at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_op(std::move(v), {m, total}, "concat_cols", nodes,
                 [nodes](TensorNode& self) {
                   int at2 = 0;
                   for (const auto& n : nodes) {
                     const int c = static_cast<int>(n->value.cols());
                     if (n->requires_grad) {
                       n->ensure_grad();
                       n->grad += self.grad.middleCols(at2, c);
                     }
                     at2 += c;
                   }
                 });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows: no inputs");
  const int c = parts[0].cols();
  int total = 0;
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) {
    if (p.cols() != c) shape_error("concat_rows", parts[0], p);
    total += p.rows();
    nodes.push_back(p.node());
  }
  Eigen::MatrixXd v(total, c);
  int at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_op(std::move(v), {total, c}, "concat_rows", nodes,
                 [nodes](TensorNode& self) {
                   int at2 = 0;
                   for (const auto& n : nodes) {
                     const int r = static_cast<int>(n->value.rows());
                     if (n->requires_grad) {
                       n->ensure_grad();
                       n->grad += self.grad.middleRows(at2, r);
                     }
                     at2 += r;
                   }
                 });
}

Tensor sum_all(const Tensor& a) {
  Eigen::MatrixXd v(1, 1);
  v(0, 0) = a.value().sum();
  auto na = a.node();
  return make_op(std::move(v), {}, "sum_all", {na}, [na](TensorNode& self) {
    na->ensure_grad();
    na->grad.array() += self.grad(0, 0);
  });
}

Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels, int ignore_index) {
  if (static_cast<int>(labels.size()) != logits.rows()) {
    throw ShapeMismatch("softmax_cross_entropy: " +
                        std::to_string(labels.size()) + " labels vs " +
                        std::to_string(logits.rows()) + " rows");
  }
  const int v_size = logits.cols();
  int count = 0;
  double total = 0.0;
  for (int i = 0; i < logits.rows(); ++i) {
    const int lbl = labels[i];
    if (lbl == ignore_index) continue;
    if (lbl < 0 || lbl >= v_size) {
      throw ShapeMismatch("softmax_cross_entropy: label " +
                          std::to_string(lbl) + " outside vocabulary of " +
                          std::to_string(v_size));
    }
    const auto row = logits.value().row(i);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    total += lse - row(lbl);
    ++count;
  }
  if (count == 0) {
    throw ShapeMismatch("softmax_cross_entropy: every label is ignored");
  }
  Eigen::MatrixXd v(1, 1);
  v(0, 0) = total / count;
  auto nl = logits.node();
  auto labels_copy = labels;
  return make_op(
      std::move(v), {}, "softmax_cross_entropy", {nl},
      [nl, labels_copy, ignore_index, count](TensorNode& self) {
        nl->ensure_grad();
        const double g = self.grad(0, 0) / count;
        for (int i = 0; i < nl->value.rows(); ++i) {
          const int lbl = labels_copy[i];
          if (lbl == ignore_index) continue;
          const auto row = nl->value.row(i);
          const double mx = row.maxCoeff();
          Eigen::ArrayXd p = (row.array() - mx).exp();
          p /= p.sum();
          nl->grad.row(i).array() += g * p.transpose();
          nl->grad(i, lbl) -= g;
        }
      });
}

// --- backward pass ---

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw ShapeMismatch("backward requires a scalar loss");
  }
  TensorNode* root = loss.node().get();

  // Iterative DFS with gray/black coloring; a gray revisit would mean a
  // cycle, which construction rules out — asserted anyway.
  std::vector<TensorNode*> order;
  std::unordered_map<TensorNode*, int> state;  // 1 = in progress, 2 = done
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root, 0);
  state[root] = 1;
  while (!stack.empty()) {
    auto& top = stack.back();
    TensorNode* n = top.first;
    if (top.second < n->parents.size()) {
      TensorNode* p = n->parents[top.second++].get();
      auto it = state.find(p);
      if (it == state.end()) {
        state[p] = 1;
        stack.emplace_back(p, 0);
      } else if (it->second == 1) {
        throw GraphCycle("cycle detected in computation graph");
      }
    } else {
      state[n] = 2;
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && n->grad_alloc) n->backward_fn(*n);
  }
}

// --- gradient checking ---

double grad_check(const std::function<Tensor()>& forward,
                  const std::vector<Parameter>& params, int max_elems_per_param,
                  std::mt19937* rng) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  Tensor loss = forward();
  backward(loss);
  std::vector<Eigen::MatrixXd> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    analytic.push_back(p.tensor.has_grad()
                           ? p.tensor.grad()
                           : Eigen::MatrixXd::Zero(p.tensor.rows(),
                                                   p.tensor.cols()));
  }

  // Fourth-order central difference: (-f(+2h) + 8f(+h) - 8f(-h) + f(-2h)) /
  // 12h, truncation O(h^4).
  const auto stencil = [&forward](Eigen::MatrixXd& vals, int i, int j,
                                  double h) {
    const double v0 = vals(i, j);
    vals(i, j) = v0 + 2.0 * h;
    const double fp2 = forward().item();
    vals(i, j) = v0 + h;
    const double fp1 = forward().item();
    vals(i, j) = v0 - h;
    const double fm1 = forward().item();
    vals(i, j) = v0 - 2.0 * h;
    const double fm2 = forward().item();
    vals(i, j) = v0;
    return (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h);
  };
  const auto rel_err = [](double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
  };

  const double h = 1e-3;
  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params[pi].tensor;
    Eigen::MatrixXd& vals = t.mutable_value();
    const int64_t n = vals.size();
    std::vector<int64_t> idx;
    if (max_elems_per_param > 0 && n > max_elems_per_param) {
      if (rng == nullptr) {
        throw std::invalid_argument("grad_check sampling requires an rng");
      }
      std::uniform_int_distribution<int64_t> pick(0, n - 1);
      for (int k = 0; k < max_elems_per_param; ++k) idx.push_back(pick(*rng));
    } else {
      idx.resize(n);
      std::iota(idx.begin(), idx.end(), 0);
    }
    for (int64_t flat : idx) {
      const int i = static_cast<int>(flat % vals.rows());
      const int j = static_cast<int>(flat / vals.rows());
      const double a = analytic[pi](i, j);
      double rel = rel_err(a, stencil(vals, i, j, h));
      if (rel > 1e-6) {
        // A tiny true gradient leaves the difference quotient noise-bound at
        // small h; widening the step recovers it. A wrong analytic value
        // stays wrong at both steps.
        rel = std::min(rel, rel_err(a, stencil(vals, i, j, 10.0 * h)));
      }
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

// --- parameter store ---

Tensor ParameterStore::create_randn(const std::string& name,
                                    const std::vector<int>& shape,
                                    std::mt19937& rng, double stddev) {
  if (find(name) != nullptr) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  Tensor t = Tensor::randn(shape, rng, stddev, /*requires_grad=*/true);
  params_.push_back({name, t});
  return t;
}

Tensor ParameterStore::create_fill(const std::string& name,
                                   const std::vector<int>& shape,
                                   double value) {
  if (find(name) != nullptr) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  Tensor t = Tensor::fill(shape, value, /*requires_grad=*/true);
  params_.push_back({name, t});
  return t;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) p.tensor.zero_grad();
}

double ParameterStore::global_grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) {
    if (p.tensor.has_grad()) sq += p.tensor.grad().squaredNorm();
  }
  return std::sqrt(sq);
}

// --- checkpoints ---

namespace {

constexpr char kMagic[4] = {'C', 'I', 'P', 'A'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
  static_assert(sizeof(float) == 4);
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);  // little-endian host assumed (asserted in save)
}

struct CkptReader {
  const unsigned char* data;
  size_t size;
  size_t pos = 0;
  void need(size_t n) const {
    if (pos + n > size) throw CheckpointFormatError("truncated checkpoint");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    need(4);
    float v;
    std::memcpy(&v, data + pos, 4);
    pos += 4;
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& header,
    const std::vector<Parameter>& params) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint writer assumes a little-endian host");
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(header.size()));
  for (const auto& [k, v] : header) {
    put_u32(out, static_cast<uint32_t>(k.size()));
    out += k;
    put_u32(out, static_cast<uint32_t>(v.size()));
    out += v;
  }
  put_u32(out, static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(out, static_cast<uint32_t>(p.name.size()));
    out += p.name;
    const auto& shape = p.tensor.shape();
    put_u32(out, static_cast<uint32_t>(shape.size()));
    for (int d : shape) put_u32(out, static_cast<uint32_t>(d));
    const Eigen::MatrixXd& m = p.tensor.value();
    for (int i = 0; i < m.rows(); ++i) {
      for (int j = 0; j < m.cols(); ++j) {
        put_f32(out, static_cast<float>(m(i, j)));
      }
    }
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("short write to checkpoint: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("cannot rename checkpoint into place: " + path);
  }
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointFormatError("cannot open checkpoint: " + path);
  std::string raw((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  CkptReader r{reinterpret_cast<const unsigned char*>(raw.data()), raw.size()};
  const std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw CheckpointFormatError("bad checkpoint magic");
  }
  const uint32_t version = r.u32();
  if (version != kVersion) {
    throw CheckpointFormatError("unsupported checkpoint version " +
                                std::to_string(version));
  }
  CheckpointData data;
  const uint32_t n_header = r.u32();
  for (uint32_t i = 0; i < n_header; ++i) {
    std::string k = r.bytes(r.u32());
    std::string v = r.bytes(r.u32());
    data.header.emplace_back(std::move(k), std::move(v));
  }
  const uint32_t n_params = r.u32();
  for (uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.bytes(r.u32());
    const uint32_t rank = r.u32();
    if (rank > 3) throw CheckpointFormatError("parameter rank > 3");
    std::vector<int> shape;
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const uint32_t dim = r.u32();
      if (dim == 0 || dim > (1u << 28)) {
        throw CheckpointFormatError("implausible dimension in checkpoint");
      }
      shape.push_back(static_cast<int>(dim));
      numel *= dim;
    }
    auto [rows, cols] = storage_dims(shape);
    Eigen::MatrixXd m(rows, cols);
    for (int a = 0; a < rows; ++a) {
      for (int b = 0; b < cols; ++b) m(a, b) = r.f32();
    }
    (void)numel;
    data.params.emplace_back(std::move(name),
                             Tensor(make_leaf(std::move(m), shape, false)));
  }
  if (r.pos != r.size) {
    throw CheckpointFormatError("trailing bytes after last parameter record");
  }
  return data;
}

void apply_checkpoint(const CheckpointData& data, ParameterStore& store) {
  std::unordered_set<std::string> seen;
  for (const auto& [name, tensor] : data.params) {
    Parameter* p = nullptr;
    for (auto& cand : store.all()) {
      if (cand.name == name) {
        p = &cand;
        break;
      }
    }
    if (p == nullptr) {
      throw CheckpointFormatError("checkpoint parameter not in model: " + name);
    }
    if (p->tensor.shape() != tensor.shape()) {
      throw CheckpointFormatError("shape mismatch for parameter: " + name);
    }
    p->tensor.mutable_value() = tensor.value();
    seen.insert(name);
  }
  for (const auto& p : store.all()) {
    if (seen.find(p.name) == seen.end()) {
      throw CheckpointFormatError("model parameter missing from checkpoint: " +
                                  p.name);
    }
  }
}

}  // namespace phonokws
