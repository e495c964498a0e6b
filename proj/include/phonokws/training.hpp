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

#ifndef PHONOKWS_TRAINING_HPP_
#define PHONOKWS_TRAINING_HPP_

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phonokws/audio.hpp"
#include "phonokws/autograd.hpp"
#include "phonokws/encoders.hpp"
#include "phonokws/error.hpp"
#include "phonokws/negatives.hpp"
#include "phonokws/tokenizer.hpp"

namespace phonokws {

PHONOKWS_DEFINE_ERROR(ZeroNormRow);
PHONOKWS_DEFINE_ERROR(NonFiniteLoss);
PHONOKWS_DEFINE_ERROR(ManifestEmpty);
PHONOKWS_DEFINE_ERROR(ConfigParseError);

// Hyperparameters. Default values follow the reference recipe; desk() is
// the CPU-scale profile used by the end-to-end checks.
struct TrainConfig {
  double peak_lr = 1e-4;
  int warmup_steps = 500;
  int total_steps = 100000;
  double clip_norm = 10.0;
  int word_batch_size = 256;       // word-level sources
  int utterance_batch_size = 32;   // utterance-level sources
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  unsigned seed = 0;
  std::string preset = "desk";
  int hidden_dim = 0;  // > 0 overrides the preset dimension
  int num_layers = 0;
  int num_heads = 0;
  int intermediate_dim = 0;
  int checkpoint_interval = 500;
  double mask_prob = 0.30;      // masked-LM pretraining
  bool hard_negatives = true;   // append mined negatives to word batches

  static TrainConfig desk();
  // Applies any explicit dimension overrides on top of the named preset.
  EncoderConfig encoder_config() const;
  void validate() const;
};

// Parses "key = value" lines (# comments allowed). Keys are accepted both
// in their published-table spelling ("Initial learning rate", "Warm-up
// steps", "MSWC-P batch size", ...) and as snake_case field names. Integer
// values may carry a k suffix (100k). Unknown keys are errors.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);

// +1 for matched pairs, -1 everywhere else. Rows are speech items; columns
// are phoneme items, with hard-negative columns (all -1) appended after the
// first `batch` columns.
struct PairLabelMatrix {
  Eigen::MatrixXd z;

  static PairLabelMatrix identity_with_negatives(int batch, int cols);
  // Enforces entries in {+1, -1} and exactly one +1 per row, inside the
  // first z.rows() columns.
  void validate() const;
};

// S_ij = x_i . y_j / (|x_i| |y_j|), clamped to [-1, 1].
Eigen::MatrixXd cosine_similarity_matrix(const Eigen::MatrixXd& x,
                                         const Eigen::MatrixXd& y);

// (1/|B|) sum_ij ln(1 + exp(-z_ij (e^{t_log} S_ij + b))). Gradients flow
// into S, t_log, and b.
Tensor siglip_loss(const Tensor& s, const PairLabelMatrix& labels,
                   const Tensor& t_log, const Tensor& b);

// Linear warmup to peak_lr over warmup_steps, then cosine decay to zero at
// total_steps.
double lr_schedule(int step, const TrainConfig& cfg);

// Scales all gradients so their global L2 norm is at most max_norm; returns
// the post-clip norm.
double clip_global_norm(ParameterStore& store, double max_norm);

// Adaptive-moment optimizer with decoupled weight decay. Decay applies only
// to matrix-shaped parameters; vectors and scalars (biases, layer-norm
// terms, the loss scalars) are exempt.
class AdamW {
 public:
  AdamW(ParameterStore& store, const TrainConfig& cfg);
  void step(double lr);
  int steps_taken() const { return t_; }

 private:
  ParameterStore* store_;
  double beta1_, beta2_, eps_, weight_decay_;
  int t_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
  std::vector<bool> decayed_;
};

// One paired training example, already featurized.
struct TrainItem {
  MelSpectrogram mel;
  PhonemeSequence phonemes;
  bool word_level = true;
};

struct TrainSource {
  std::string name;
  std::vector<TrainItem> items;
  bool word_level = true;
  int batch_size = 16;
};

struct StepMetrics {
  int step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;  // post-clip
  double lr = 0.0;
  int source = 0;  // index of the source corpus this step consumed
};

// BOS + ids + EOS with an all-ones mask; the single token convention used
// for every phoneme sequence fed to the encoder.
TokenSequence wrap_tokens(const TokenSequence& pieces);

// One optimizer step: encodes |B| speech clips and 2|B| phoneme sequences
// (originals plus one hard negative each -- minimal pairs for word items,
// 10%-corrupted sequences for utterances), builds the identity-positive
// label matrix, applies the sigmoid loss, clips, and updates.
StepMetrics train_step(DualEncoderModel& model,
                       const std::vector<TrainItem>& batch,
                       const UnigramVocab& tokenizer,
                       const InventorySet& inventories, AdamW& opt,
                       const TrainConfig& cfg, int step, std::mt19937& rng);

// Round-robin over sources for cfg.total_steps steps, reshuffling each
// source with the seeded rng as it is exhausted. Writes metrics.log lines
// "step loss grad_norm lr" and checkpoint_NNNNNN.bin files under out_dir
// (pass "" to skip file output), and returns the per-step metrics.
std::vector<StepMetrics> train_loop(DualEncoderModel& model,
                                    const std::vector<TrainSource>& sources,
                                    const UnigramVocab& tokenizer,
                                    const TrainConfig& cfg,
                                    const std::string& out_dir);

}  // namespace phonokws

#endif  // PHONOKWS_TRAINING_HPP_
