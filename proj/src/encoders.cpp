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

#include "phonokws/encoders.hpp"

#include <cmath>
#include <map>

namespace phonokws {
namespace {

// Fixed sinusoidal positions, sin half then cos half.
Eigen::MatrixXd sinusoids(int length, int dim) {
  const int half = dim / 2;
  const double incr = half > 1 ? std::log(10000.0) / (half - 1) : 0.0;
  Eigen::MatrixXd pe(length, dim);
  for (int t = 0; t < length; ++t) {
    for (int i = 0; i < half; ++i) {
      const double angle = t * std::exp(-incr * i);
      pe(t, i) = std::sin(angle);
      pe(t, half + i) = std::cos(angle);
    }
  }
  return pe;
}

int valid_count(const std::vector<int>& mask) {
  int n = 0;
  for (int m : mask) n += m != 0;
  return n;
}

}  // namespace

EncoderConfig EncoderConfig::from_preset(const std::string& name) {
  EncoderConfig c;
  c.preset = name;
  if (name == "tiny") {
    c.hidden_dim = 384;
    c.num_layers = 4;
    c.num_heads = 6;
    c.intermediate_dim = 1536;
    c.max_positions = 1500;
  } else if (name == "base") {
    c.hidden_dim = 512;
    c.num_layers = 6;
    c.num_heads = 8;
    c.intermediate_dim = 2048;
    c.max_positions = 1500;
  } else if (name == "small") {
    c.hidden_dim = 768;
    c.num_layers = 12;
    c.num_heads = 12;
    c.intermediate_dim = 3072;
    c.max_positions = 1500;
  } else if (name == "desk") {
    c.hidden_dim = 64;
    c.num_layers = 2;
    c.num_heads = 4;
    c.intermediate_dim = 256;
    c.max_positions = 256;
  } else {
    throw std::invalid_argument("unknown encoder preset: " + name);
  }
  return c;
}

void EncoderConfig::validate() const {
  if (hidden_dim <= 0 || num_layers <= 0 || num_heads <= 0 ||
      intermediate_dim <= 0 || max_positions <= 0) {
    throw std::invalid_argument("encoder config dimensions must be positive");
  }
  if (hidden_dim % num_heads != 0) {
    throw std::invalid_argument("hidden_dim must be divisible by num_heads");
  }
  if (hidden_dim % 2 != 0) {
    throw std::invalid_argument("hidden_dim must be even");
  }
}

Tensor self_attention_pool(const Tensor& states, const std::vector<int>& mask,
                           const Tensor& query) {
  if (valid_count(mask) == 0) {
    throw AllMasked("self_attention_pool: no valid positions");
  }
  Tensor scores = transpose(matmul(states, query));  // 1 x T
  Tensor weights = masked_softmax(scores, mask);
  return matmul(weights, states);  // 1 x d
}

MaskedTokens mask_tokens(const TokenSequence& tokens, double prob,
                         std::mt19937& rng, int vocab_size) {
  MaskedTokens out;
  out.ids = tokens.ids;
  out.labels.assign(tokens.ids.size(), kIgnoreLabel);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> pick_id(0, vocab_size - 1);
  for (size_t p = 0; p < tokens.ids.size(); ++p) {
    if (p < tokens.mask.size() && tokens.mask[p] == 0) continue;
    if (tokens.ids[p] <= UnigramVocab::kEos) continue;  // specials stay
    if (u01(rng) >= prob) continue;
    out.labels[p] = tokens.ids[p];
    ++out.selected;
    const double kind = u01(rng);
    if (kind < 0.8) {
      out.ids[p] = UnigramVocab::kMask;
    } else if (kind < 0.9) {
      out.ids[p] = pick_id(rng);
    }  // else: keep the original id
  }
  return out;
}

DualEncoderModel::DualEncoderModel(const EncoderConfig& config, int vocab_size,
                                   std::mt19937& rng)
    : config_(config), vocab_size_(vocab_size) {
  config_.validate();
  if (vocab_size_ <= UnigramVocab::kEos) {
    throw std::invalid_argument("vocab size must exceed the special ids");
  }
  const int d = config_.hidden_dim;
  const int inter = config_.intermediate_dim;

  auto add_layers = [&](const std::string& side) {
    for (int l = 0; l < config_.num_layers; ++l) {
      const std::string p = side + ".layer" + std::to_string(l);
      store_.create_fill(p + ".ln1.g", {d}, 1.0);
      store_.create_fill(p + ".ln1.b", {d}, 0.0);
      store_.create_randn(p + ".attn.wq", {d, d}, rng);
      store_.create_fill(p + ".attn.bq", {d}, 0.0);
      store_.create_randn(p + ".attn.wk", {d, d}, rng);
      store_.create_fill(p + ".attn.bk", {d}, 0.0);
      store_.create_randn(p + ".attn.wv", {d, d}, rng);
      store_.create_fill(p + ".attn.bv", {d}, 0.0);
      store_.create_randn(p + ".attn.wo", {d, d}, rng);
      store_.create_fill(p + ".attn.bo", {d}, 0.0);
      store_.create_fill(p + ".ln2.g", {d}, 1.0);
      store_.create_fill(p + ".ln2.b", {d}, 0.0);
      store_.create_randn(p + ".ffn.w1", {d, inter}, rng);
      store_.create_fill(p + ".ffn.b1", {inter}, 0.0);
      store_.create_randn(p + ".ffn.w2", {inter, d}, rng);
      store_.create_fill(p + ".ffn.b2", {d}, 0.0);
    }
    store_.create_fill(side + ".ln_post.g", {d}, 1.0);
    store_.create_fill(side + ".ln_post.b", {d}, 0.0);
  };

  store_.create_randn("speech.conv1.w", {d, MelSpectrogram::kBins, 3}, rng);
  store_.create_fill("speech.conv1.b", {d}, 0.0);
  store_.create_randn("speech.conv2.w", {d, d, 3}, rng);
  store_.create_fill("speech.conv2.b", {d}, 0.0);
  add_layers("speech");
  store_.create_randn("speech.pool.query", {d}, rng);

  store_.create_randn("phoneme.tok_emb", {vocab_size_, d}, rng);
  store_.create_randn("phoneme.pos_emb", {config_.max_positions, d}, rng);
  add_layers("phoneme");
  store_.create_fill("phoneme.mlm.bias", {vocab_size_}, 0.0);

  t_log_ = store_.create_fill("loss.t_log", {}, std::log(10.0));
  bias_ = store_.create_fill("loss.b", {}, -10.0);
}

Tensor DualEncoderModel::transformer(const Tensor& input,
                                     const std::vector<int>& mask,
                                     const std::string& prefix) const {
  const int d = config_.hidden_dim;
  const int heads = config_.num_heads;
  const int dh = d / heads;
  auto P = [&](const std::string& name) {
    return store_.find(prefix + name)->tensor;
  };

  Tensor x = input;
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string lp = ".layer" + std::to_string(l);
    Tensor n1 = layer_norm(x, P(lp + ".ln1.g"), P(lp + ".ln1.b"));
    Tensor q = add_row_broadcast(matmul(n1, P(lp + ".attn.wq")),
                                 P(lp + ".attn.bq"));
    Tensor k = add_row_broadcast(matmul(n1, P(lp + ".attn.wk")),
                                 P(lp + ".attn.bk"));
    Tensor v = add_row_broadcast(matmul(n1, P(lp + ".attn.wv")),
                                 P(lp + ".attn.bv"));
    std::vector<Tensor> head_outs;
    head_outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      Tensor qh = slice_cols(q, h * dh, dh);
      Tensor kh = slice_cols(k, h * dh, dh);
      Tensor vh = slice_cols(v, h * dh, dh);
      Tensor scores =
          scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(dh)));
      Tensor weights = masked_softmax(scores, mask);
      head_outs.push_back(matmul(weights, vh));
    }
    Tensor attn_out = add_row_broadcast(
        matmul(concat_cols(head_outs), P(lp + ".attn.wo")),
        P(lp + ".attn.bo"));
    x = add(x, attn_out);
    Tensor n2 = layer_norm(x, P(lp + ".ln2.g"), P(lp + ".ln2.b"));
    Tensor f = add_row_broadcast(
        matmul(gelu(add_row_broadcast(matmul(n2, P(lp + ".ffn.w1")),
                                      P(lp + ".ffn.b1"))),
               P(lp + ".ffn.w2")),
        P(lp + ".ffn.b2"));
    x = add(x, f);
  }
  return layer_norm(x, P(".ln_post.g"), P(".ln_post.b"));
}

Tensor DualEncoderModel::encode_speech_t(const MelSpectrogram& mel) const {
  if (mel.frames > config_.max_positions * 2) {
    throw SequenceTooLong("speech input of " + std::to_string(mel.frames) +
                          " frames exceeds " +
                          std::to_string(config_.max_positions * 2));
  }
  const int valid = mel.valid_frames();
  if (valid == 0) throw AllMasked("speech input has no valid frames");

  Eigen::MatrixXd m(mel.frames, MelSpectrogram::kBins);
  for (int t = 0; t < mel.frames; ++t) {
    for (int b = 0; b < MelSpectrogram::kBins; ++b) {
      m(t, b) = mel.mask[t] ? mel.at(t, b) : 0.0;
    }
  }
  // Re-zeroing padded rows after the first conv keeps the stride-2 conv's
  // last valid output identical whether or not padding frames follow it:
  // without this, gelu(bias) at the first padded row bleeds into its window.
  Tensor h = gelu(conv1d(Tensor::from_matrix(m),
                         store_.find("speech.conv1.w")->tensor,
                         store_.find("speech.conv1.b")->tensor, 1));
  h = zero_masked_rows(h, mel.mask);
  h = gelu(conv1d(h, store_.find("speech.conv2.w")->tensor,
                  store_.find("speech.conv2.b")->tensor, 2));
  const int t_out = h.rows();
  const int valid_out = (valid + 1) / 2;  // stride-2 conv keeps ceil(v/2)
  std::vector<int> out_mask(t_out, 0);
  for (int j = 0; j < valid_out; ++j) out_mask[j] = 1;

  h = add(h, Tensor::from_matrix(sinusoids(t_out, config_.hidden_dim)));
  h = transformer(h, out_mask, "speech");
  return self_attention_pool(h, out_mask,
                             store_.find("speech.pool.query")->tensor);
}

Tensor DualEncoderModel::phoneme_hidden(const std::vector<int>& ids,
                                        const std::vector<int>& mask) const {
  const int len = static_cast<int>(ids.size());
  if (len == 0) throw AllMasked("phoneme input is empty");
  if (len > config_.max_positions) {
    throw SequenceTooLong("phoneme input of " + std::to_string(len) +
                          " tokens exceeds " +
                          std::to_string(config_.max_positions));
  }
  Tensor x = add(embedding_lookup(store_.find("phoneme.tok_emb")->tensor, ids),
                 slice_rows(store_.find("phoneme.pos_emb")->tensor, 0, len));
  return transformer(x, mask, "phoneme");
}

Tensor DualEncoderModel::encode_phonemes_t(const TokenSequence& tokens) const {
  if (valid_count(tokens.mask) == 0) {
    throw AllMasked("phoneme input has no valid tokens");
  }
  Tensor h = phoneme_hidden(tokens.ids, tokens.mask);
  return mean_over_mask(h, tokens.mask);
}

Embedding DualEncoderModel::encode_speech(const MelSpectrogram& mel,
                                          const std::string& id) const {
  Tensor out = encode_speech_t(mel);
  Embedding e;
  e.vector = out.value().row(0).transpose();
  e.id = id;
  e.modality = Modality::kSpeech;
  return e;
}

Embedding DualEncoderModel::encode_phonemes(const TokenSequence& tokens,
                                            const std::string& id) const {
  Tensor out = encode_phonemes_t(tokens);
  Embedding e;
  e.vector = out.value().row(0).transpose();
  e.id = id;
  e.modality = Modality::kPhoneme;
  return e;
}

Tensor DualEncoderModel::mlm_logits_t(const std::vector<int>& ids,
                                      const std::vector<int>& mask) const {
  Tensor h = phoneme_hidden(ids, mask);
  return add_row_broadcast(
      matmul(h, transpose(store_.find("phoneme.tok_emb")->tensor)),
      store_.find("phoneme.mlm.bias")->tensor);
}

Tensor DualEncoderModel::mlm_loss(const std::vector<TokenSequence>& batch,
                                  double prob, std::mt19937& rng) const {
  std::vector<Tensor> all_logits;
  std::vector<int> all_labels;
  int selected = 0;
  for (const auto& seq : batch) {
    MaskedTokens masked = mask_tokens(seq, prob, rng, vocab_size_);
    selected += masked.selected;
    if (masked.selected == 0) continue;  // nothing to predict in this item
    all_logits.push_back(mlm_logits_t(masked.ids, seq.mask));
    all_labels.insert(all_labels.end(), masked.labels.begin(),
                      masked.labels.end());
  }
  if (selected == 0) {
    throw NoMaskedPositions("rng selected no positions in this batch");
  }
  return softmax_cross_entropy(concat_rows(all_logits), all_labels,
                               kIgnoreLabel);
}

void DualEncoderModel::save(const std::string& path) const {
  std::vector<std::pair<std::string, std::string>> header{
      {"format", "dual-encoder"},
      {"preset", config_.preset},
      {"hidden_dim", std::to_string(config_.hidden_dim)},
      {"num_layers", std::to_string(config_.num_layers)},
      {"num_heads", std::to_string(config_.num_heads)},
      {"intermediate_dim", std::to_string(config_.intermediate_dim)},
      {"max_positions", std::to_string(config_.max_positions)},
      {"vocab_size", std::to_string(vocab_size_)},
  };
  save_checkpoint(path, header, store_.all());
}

DualEncoderModel DualEncoderModel::load(const std::string& path) {
  CheckpointData data = load_checkpoint(path);
  std::map<std::string, std::string> h(data.header.begin(), data.header.end());
  auto want = [&](const std::string& key) -> std::string {
    auto it = h.find(key);
    if (it == h.end()) {
      throw CheckpointFormatError("checkpoint header missing key: " + key);
    }
    return it->second;
  };
  if (want("format") != "dual-encoder") {
    throw CheckpointFormatError("checkpoint is not a dual-encoder model");
  }
  EncoderConfig cfg;
  cfg.preset = want("preset");
  cfg.hidden_dim = std::stoi(want("hidden_dim"));
  cfg.num_layers = std::stoi(want("num_layers"));
  cfg.num_heads = std::stoi(want("num_heads"));
  cfg.intermediate_dim = std::stoi(want("intermediate_dim"));
  cfg.max_positions = std::stoi(want("max_positions"));
  const int vocab = std::stoi(want("vocab_size"));
  std::mt19937 rng(0);  // placeholder init, immediately overwritten
  DualEncoderModel model(cfg, vocab, rng);
  apply_checkpoint(data, model.store_);
  return model;
}

}  // namespace phonokws
