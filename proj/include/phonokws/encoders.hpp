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

#ifndef PHONOKWS_ENCODERS_HPP_
#define PHONOKWS_ENCODERS_HPP_

#include <random>
#include <string>
#include <vector>

#include "phonokws/audio.hpp"
#include "phonokws/autograd.hpp"
#include "phonokws/error.hpp"
#include "phonokws/tokenizer.hpp"

namespace phonokws {

PHONOKWS_DEFINE_ERROR(SequenceTooLong);
PHONOKWS_DEFINE_ERROR(NoMaskedPositions);

// MLM label value for positions that carry no prediction target.
constexpr int kIgnoreLabel = -100;

struct EncoderConfig {
  int hidden_dim = 64;
  int num_layers = 2;
  int num_heads = 4;
  int intermediate_dim = 256;
  int max_positions = 256;
  std::string preset = "desk";

  // tiny = (384, 4, 6, 1536), base = (512, 6, 8, 2048),
  // small = (768, 12, 12, 3072), desk = (64, 2, 4, 256).
  static EncoderConfig from_preset(const std::string& name);
  void validate() const;  // hidden divisible by heads, positive dims
};

enum class Modality : uint8_t { kSpeech = 0, kPhoneme = 1 };

struct Embedding {
  Eigen::VectorXd vector;
  std::string id;
  Modality modality = Modality::kSpeech;
};

// Learned-query attention pooling: scores = states * query, masked softmax,
// weighted sum of states (1 x d).
Tensor self_attention_pool(const Tensor& states, const std::vector<int>& mask,
                           const Tensor& query);

struct MaskedTokens {
  std::vector<int> ids;     // corrupted input
  std::vector<int> labels;  // original id where selected, else kIgnoreLabel
  int selected = 0;
};

// BERT-style corruption: each valid non-special position is selected with
// probability prob; selected positions become MASK (80%), a uniformly random
// vocab id (10%), or stay unchanged (10%). Draw order: one uniform per
// eligible position in ascending order, plus one more (and possibly an id
// draw) when selected.
MaskedTokens mask_tokens(const TokenSequence& tokens, double prob,
                         std::mt19937& rng, int vocab_size);

// Symmetric dual transformer: a speech encoder (two-layer conv stem with
// stride-2 second conv, fixed sinusoidal positions, pre-norm transformer,
// attention pooling) and a phoneme encoder (token + learned position
// embeddings, pre-norm transformer, masked mean pooling, weight-tied MLM
// head), plus the two loss scalars.
class DualEncoderModel {
 public:
  DualEncoderModel(const EncoderConfig& config, int vocab_size,
                   std::mt19937& rng);

  const EncoderConfig& config() const { return config_; }
  int vocab_size() const { return vocab_size_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  // Graph-building forms used by training; outputs are 1 x hidden_dim and
  // not L2-normalized.
  Tensor encode_speech_t(const MelSpectrogram& mel) const;
  Tensor encode_phonemes_t(const TokenSequence& tokens) const;

  // Inference wrappers.
  Embedding encode_speech(const MelSpectrogram& mel,
                          const std::string& id = "") const;
  Embedding encode_phonemes(const TokenSequence& tokens,
                            const std::string& id = "") const;

  // Final hidden states (valid_len x d) and tied-projection MLM logits.
  Tensor mlm_logits_t(const std::vector<int>& ids,
                      const std::vector<int>& mask) const;

  // Builds the masked-LM loss for one batch; throws NoMaskedPositions when
  // the rng selects nothing anywhere in the batch (caller skips the batch).
  Tensor mlm_loss(const std::vector<TokenSequence>& batch, double prob,
                  std::mt19937& rng) const;

  Tensor t_log() const { return t_log_; }
  Tensor bias() const { return bias_; }

  void save(const std::string& path) const;
  static DualEncoderModel load(const std::string& path);

 private:
  Tensor transformer(const Tensor& input, const std::vector<int>& mask,
                     const std::string& prefix) const;
  Tensor phoneme_hidden(const std::vector<int>& ids,
                        const std::vector<int>& mask) const;

  EncoderConfig config_;
  int vocab_size_ = 0;
  ParameterStore store_;
  Tensor t_log_;
  Tensor bias_;
};

}  // namespace phonokws

#endif  // PHONOKWS_ENCODERS_HPP_
