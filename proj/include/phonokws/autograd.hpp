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

#ifndef PHONOKWS_AUTOGRAD_HPP_
#define PHONOKWS_AUTOGRAD_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "phonokws/error.hpp"

namespace phonokws {

PHONOKWS_DEFINE_ERROR(ShapeMismatch);
PHONOKWS_DEFINE_ERROR(NonFiniteValue);
PHONOKWS_DEFINE_ERROR(GraphCycle);
PHONOKWS_DEFINE_ERROR(AllMasked);
PHONOKWS_DEFINE_ERROR(CheckpointFormatError);

struct TensorNode;

// Reverse-mode tape node handle. Values are 64-bit; logical rank lives in
// shape() while storage is always a 2-d matrix (rank-1 tensors are column
// vectors, rank-3 conv kernels are rows x (in*k)).
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_matrix(const Eigen::MatrixXd& m, bool requires_grad = false);
  static Tensor from_vector(const Eigen::VectorXd& v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor zeros(const std::vector<int>& shape, bool requires_grad = false);
  static Tensor fill(const std::vector<int>& shape, double value,
                     bool requires_grad = false);
  // Normal(0, stddev) init; elements drawn in row-major order.
  static Tensor randn(const std::vector<int>& shape, std::mt19937& rng,
                      double stddev, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Eigen::MatrixXd& value() const;
  Eigen::MatrixXd& mutable_value();  // leaf edits only (optimizer steps)
  const Eigen::MatrixXd& grad() const;
  Eigen::MatrixXd& mutable_grad();  // leaf edits only (clipping)
  bool has_grad() const;
  const std::vector<int>& shape() const;
  int rows() const;
  int cols() const;
  bool requires_grad() const;
  double item() const;  // 1x1 only
  void zero_grad();

  std::shared_ptr<TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

struct Parameter {
  std::string name;
  Tensor tensor;
};

// --- differentiable primitives ---

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);           // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);           // elementwise
Tensor scale(const Tensor& a, double c);
Tensor add_row_broadcast(const Tensor& a, const Tensor& bias);  // bias rank-1
Tensor mul_scalar_t(const Tensor& a, const Tensor& s);  // s is 1x1
Tensor add_scalar_t(const Tensor& a, const Tensor& s);  // s is 1x1, broadcast
Tensor exp_t(const Tensor& a);
Tensor gelu(const Tensor& a);         // exact erf form
Tensor log_sigmoid(const Tensor& a);  // numerically stable -softplus(-x)
// x: T x in_ch; w rank-3 {out_ch, in_ch, 3}; b rank-1 {out_ch}; zero padding
// 1 on both sides; stride 1 keeps T, stride 2 yields ceil(T/2).
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
// Row-wise softmax over columns where mask is 1; masked columns get exactly
// zero weight; a fully masked row yields all zeros.
Tensor masked_softmax(const Tensor& scores, const std::vector<int>& mask);
// Per-row normalization over columns, epsilon 1e-5, then gamma/beta (rank-1).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);
// 1 x d mean of rows with mask 1; masked rows contribute exactly zero.
Tensor mean_over_mask(const Tensor& x, const std::vector<int>& mask);
// Rows with mask 0 are set to exactly zero (forward and backward); rows with
// mask 1 pass through. Keeps padded positions inert between overlapping ops.
Tensor zero_masked_rows(const Tensor& x, const std::vector<int>& mask);
Tensor l2_normalize(const Tensor& x);  // row-wise
Tensor slice_cols(const Tensor& x, int start, int count);
Tensor slice_rows(const Tensor& x, int start, int count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor sum_all(const Tensor& a);  // 1x1
// Mean cross-entropy of row-wise softmax against labels; rows whose label is
// ignore_index are excluded. Throws ShapeMismatch when nothing is labeled.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             int ignore_index);

constexpr double kLayerNormEps = 1e-5;

// Reverse accumulation from a scalar loss into every reachable tensor that
// requires a gradient.
void backward(const Tensor& loss);

// Max over all parameter elements of |analytic - numeric| / max(|analytic|,
// |numeric|, 1e-8). Numeric uses fourth-order central differences at
// h = 1e-3; elements that disagree there are retried at 10h and keep the
// smaller error, so near-zero gradients are not drowned by difference noise
// while a wrong backward rule still fails at every step size. The forward
// callable must rebuild the graph from the current parameter values.
// max_elems_per_param > 0 samples that many elements per parameter (rng
// required); 0 checks every element.
double grad_check(const std::function<Tensor()>& forward,
                  const std::vector<Parameter>& params,
                  int max_elems_per_param = 0, std::mt19937* rng = nullptr);

// Named-parameter registry enforcing unique names.
class ParameterStore {
 public:
  Tensor create_randn(const std::string& name, const std::vector<int>& shape,
                      std::mt19937& rng, double stddev = 0.02);
  Tensor create_fill(const std::string& name, const std::vector<int>& shape,
                     double value);
  const std::vector<Parameter>& all() const { return params_; }
  std::vector<Parameter>& all() { return params_; }
  const Parameter* find(const std::string& name) const;
  void zero_grads();
  double global_grad_norm() const;

 private:
  std::vector<Parameter> params_;
};

// Checkpoints: "CIPA" magic, u32 version, key-value text header, then one
// record per parameter (u32 name length, name, u32 rank, u32 dims, float32
// little-endian values in row-major order). Atomic write; load-then-save
// reproduces the file byte for byte.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, std::string>>& header,
                     const std::vector<Parameter>& params);

struct CheckpointData {
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<std::pair<std::string, Tensor>> params;
};

CheckpointData load_checkpoint(const std::string& path);

// Copies checkpoint values into a store; every name must match in both
// directions with identical shapes.
void apply_checkpoint(const CheckpointData& data, ParameterStore& store);

}  // namespace phonokws

#endif  // PHONOKWS_AUTOGRAD_HPP_
