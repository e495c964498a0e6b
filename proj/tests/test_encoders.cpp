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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include "doctest.h"
#include "phonokws/encoders.hpp"

using namespace phonokws;

namespace {

MelSpectrogram random_mel(int frames, std::mt19937& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  MelSpectrogram mel;
  mel.frames = frames;
  mel.values.resize(static_cast<size_t>(frames) * 80);
  for (double& v : mel.values) v = d(rng);
  mel.mask.assign(frames, 1);
  return mel;
}

TokenSequence random_tokens(int len, int vocab, std::mt19937& rng) {
  std::uniform_int_distribution<int> d(UnigramVocab::kByteBase, vocab - 1);
  TokenSequence t;
  t.ids.resize(len);
  for (int& id : t.ids) id = d(rng);
  t.mask.assign(len, 1);
  return t;
}

EncoderConfig micro_config() {
  EncoderConfig c;
  c.hidden_dim = 16;
  c.num_layers = 1;
  c.num_heads = 2;
  c.intermediate_dim = 32;
  c.max_positions = 16;
  c.preset = "micro-test";
  return c;
}

double linf(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("presets pin the published architecture shapes") {
  struct Row {
    const char* name;
    int d, layers, heads, inter;
  };
  const Row rows[] = {
      {"tiny", 384, 4, 6, 1536},
      {"base", 512, 6, 8, 2048},
      {"small", 768, 12, 12, 3072},
      {"desk", 64, 2, 4, 256},
  };
  for (const Row& r : rows) {
    EncoderConfig c = EncoderConfig::from_preset(r.name);
    CHECK(c.hidden_dim == r.d);
    CHECK(c.num_layers == r.layers);
    CHECK(c.num_heads == r.heads);
    CHECK(c.intermediate_dim == r.inter);
    CHECK(c.hidden_dim % c.num_heads == 0);
    CHECK_NOTHROW(c.validate());
  }
  CHECK_THROWS_AS(EncoderConfig::from_preset("huge"), std::invalid_argument);

  EncoderConfig bad = micro_config();
  bad.num_heads = 3;  // 16 not divisible by 3
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("speech encoding maps a one-second clip to one hidden vector") {
  std::mt19937 rng(1);
  DualEncoderModel model(EncoderConfig::from_preset("desk"), 300, rng);
  std::mt19937 mel_rng(2);
  MelSpectrogram mel = random_mel(100, mel_rng);
  Embedding e = model.encode_speech(mel, "clip-1");
  CHECK(e.vector.size() == 64);
  CHECK(e.id == "clip-1");
  CHECK(e.modality == Modality::kSpeech);
  CHECK(e.vector.allFinite());
  CHECK(e.vector.norm() > 0.0);
}

TEST_CASE("appending masked padding leaves embeddings unchanged") {
  std::mt19937 rng(3);
  DualEncoderModel model(EncoderConfig::from_preset("desk"), 300, rng);

  std::mt19937 data_rng(4);
  MelSpectrogram mel = random_mel(37, data_rng);
  Embedding base = model.encode_speech(mel);
  MelSpectrogram padded = mel;
  padded.pad_to(57);
  CHECK(linf(base.vector, model.encode_speech(padded).vector) < 1e-5);
  padded.pad_to(100);
  CHECK(linf(base.vector, model.encode_speech(padded).vector) < 1e-5);

  TokenSequence toks = random_tokens(9, 300, data_rng);
  Embedding pbase = model.encode_phonemes(toks);
  TokenSequence tp = toks;
  for (int i = 0; i < 6; ++i) {
    tp.ids.push_back(UnigramVocab::kPad);
    tp.mask.push_back(0);
  }
  CHECK(linf(pbase.vector, model.encode_phonemes(tp).vector) < 1e-5);
  CHECK(model.encode_phonemes(tp).modality == Modality::kPhoneme);
}

TEST_CASE("attention pooling closed forms") {
  // Single valid position returns that state.
  Eigen::MatrixXd s(3, 2);
  s << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
  Tensor states = Tensor::from_matrix(s);
  Tensor query = Tensor::from_vector(Eigen::Vector2d(0.3, -0.2));
  Tensor pooled = self_attention_pool(states, {0, 1, 0}, query);
  CHECK(pooled.value()(0, 0) == 3.0);
  CHECK(pooled.value()(0, 1) == 4.0);

  // Zero query makes all scores equal: arithmetic mean of valid states.
  Tensor zq = Tensor::from_vector(Eigen::Vector2d(0.0, 0.0));
  Tensor mean3 = self_attention_pool(states, {1, 1, 1}, zq);
  CHECK(std::abs(mean3.value()(0, 0) - 3.0) < 1e-12);
  CHECK(std::abs(mean3.value()(0, 1) - 4.0) < 1e-12);

  // Scores [ln 2, 0] weight the two states 2/3 and 1/3.
  Eigen::MatrixXd id2 = Eigen::MatrixXd::Identity(2, 2);
  Tensor basis = Tensor::from_matrix(id2);
  Tensor q2 = Tensor::from_vector(Eigen::Vector2d(std::log(2.0), 0.0));
  Tensor w = self_attention_pool(basis, {1, 1}, q2);
  CHECK(std::abs(w.value()(0, 0) - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(w.value()(0, 1) - 1.0 / 3.0) < 1e-12);

  CHECK_THROWS_AS(self_attention_pool(states, {0, 0, 0}, query), AllMasked);
}

TEST_CASE("degenerate and oversized inputs raise typed errors") {
  std::mt19937 rng(5);
  DualEncoderModel model(EncoderConfig::from_preset("desk"), 300, rng);

  std::mt19937 data_rng(6);
  MelSpectrogram mel = random_mel(20, data_rng);
  mel.mask.assign(20, 0);
  CHECK_THROWS_AS(model.encode_speech(mel), AllMasked);

  MelSpectrogram big = random_mel(513, data_rng);  // limit is 256 * 2
  CHECK_THROWS_AS(model.encode_speech(big), SequenceTooLong);
  MelSpectrogram at_limit = random_mel(512, data_rng);
  CHECK_NOTHROW(model.encode_speech(at_limit));

  TokenSequence toks = random_tokens(5, 300, data_rng);
  toks.mask.assign(5, 0);
  CHECK_THROWS_AS(model.encode_phonemes(toks), AllMasked);

  TokenSequence long_toks = random_tokens(257, 300, data_rng);
  CHECK_THROWS_AS(model.encode_phonemes(long_toks), SequenceTooLong);
}

TEST_CASE("permuting distinct tokens changes the embedding") {
  std::mt19937 rng(7);
  DualEncoderModel model(EncoderConfig::from_preset("desk"), 300, rng);
  std::mt19937 data_rng(8);
  int changed = 0, trials = 0;
  for (int t = 0; t < 20; ++t) {
    TokenSequence toks = random_tokens(8, 300, data_rng);
    TokenSequence perm = toks;
    std::shuffle(perm.ids.begin(), perm.ids.end(), data_rng);
    if (perm.ids == toks.ids) continue;  // permutation happened to be identity
    ++trials;
    const double diff = linf(model.encode_phonemes(toks).vector,
                             model.encode_phonemes(perm).vector);
    if (diff > 1e-9) ++changed;
  }
  REQUIRE(trials > 10);
  CHECK(changed == trials);  // position information is live
}

TEST_CASE("full micro dual encoder passes the gradient check") {
  std::mt19937 rng(9);
  DualEncoderModel model(micro_config(), 24, rng);
  std::mt19937 data_rng(10);
  MelSpectrogram mel = random_mel(8, data_rng);
  TokenSequence toks = random_tokens(5, 24, data_rng);

  auto forward = [&] {
    Tensor s = l2_normalize(model.encode_speech_t(mel));
    Tensor p = l2_normalize(model.encode_phonemes_t(toks));
    Tensor sim = matmul(s, transpose(p));
    Tensor logit =
        add_scalar_t(mul_scalar_t(sim, exp_t(model.t_log())), model.bias());
    return scale(sum_all(log_sigmoid(logit)), -1.0);
  };
  CHECK(grad_check(forward, model.params().all()) < 1e-4);
}

TEST_CASE("token masking respects probability, specials, and padding") {
  std::mt19937 rng(11);

  TokenSequence toks;
  const int len = 1000;
  toks.ids.assign(len, 0);
  toks.mask.assign(len, 1);
  std::uniform_int_distribution<int> d(UnigramVocab::kByteBase, 499);
  for (int& id : toks.ids) id = d(rng);
  toks.ids[0] = UnigramVocab::kBos;
  toks.ids[len - 1] = UnigramVocab::kEos;

  SUBCASE("probability zero is the identity") {
    MaskedTokens m = mask_tokens(toks, 0.0, rng, 500);
    CHECK(m.ids == toks.ids);
    CHECK(m.selected == 0);
    for (int l : m.labels) CHECK(l == kIgnoreLabel);
  }

  SUBCASE("selection count sits inside the binomial band") {
    std::mt19937 seeded(42);
    MaskedTokens m = mask_tokens(toks, 0.3, seeded, 500);
    CHECK(m.selected >= 250);
    CHECK(m.selected <= 350);

    // specials and corruption accounting
    CHECK(m.ids[0] == UnigramVocab::kBos);
    CHECK(m.labels[0] == kIgnoreLabel);
    CHECK(m.ids[len - 1] == UnigramVocab::kEos);
    int mask_id = 0, unchanged = 0, random_id = 0;
    for (int p = 0; p < len; ++p) {
      if (m.labels[p] == kIgnoreLabel) {
        CHECK(m.ids[p] == toks.ids[p]);
        continue;
      }
      if (m.ids[p] == UnigramVocab::kMask) {
        ++mask_id;
      } else if (m.ids[p] == toks.ids[p]) {
        ++unchanged;
      } else {
        ++random_id;
      }
    }
    const double frac = static_cast<double>(mask_id) / m.selected;
    CHECK(frac > 0.72);
    CHECK(frac < 0.88);
    CHECK(unchanged + random_id == m.selected - mask_id);
  }

  SUBCASE("replayed seed reproduces the corruption") {
    std::mt19937 r1(77), r2(77);
    MaskedTokens a = mask_tokens(toks, 0.3, r1, 500);
    MaskedTokens b = mask_tokens(toks, 0.3, r2, 500);
    CHECK(a.ids == b.ids);
    CHECK(a.labels == b.labels);
  }

  SUBCASE("padding positions are never selected") {
    TokenSequence padded = toks;
    for (int p = 500; p < len; ++p) padded.mask[p] = 0;
    std::mt19937 seeded(13);
    MaskedTokens m = mask_tokens(padded, 1.0, seeded, 500);
    for (int p = 500; p < len; ++p) {
      CHECK(m.ids[p] == padded.ids[p]);
      CHECK(m.labels[p] == kIgnoreLabel);
    }
  }
}

TEST_CASE("untrained MLM loss starts near log vocab size") {
  std::mt19937 rng(15);
  const int vocab = 500;
  DualEncoderModel model(EncoderConfig::from_preset("desk"), vocab, rng);
  // ~480 masked positions keep the per-batch sampling noise well inside the
  // 0.05 band around ln(vocab).
  std::mt19937 data_rng(16);
  std::vector<TokenSequence> batch;
  for (int i = 0; i < 32; ++i) {
    batch.push_back(random_tokens(50, vocab, data_rng));
  }
  std::mt19937 mask_rng(17);
  Tensor loss = model.mlm_loss(batch, 0.3, mask_rng);
  CHECK(std::abs(loss.item() - std::log(500.0)) < 0.05);

  std::mt19937 mask_rng2(18);
  CHECK_THROWS_AS(model.mlm_loss(batch, 0.0, mask_rng2), NoMaskedPositions);
}

TEST_CASE("MLM training descends on a structured toy corpus") {
  std::mt19937 rng(19);
  const int vocab = 40;
  EncoderConfig cfg = micro_config();
  DualEncoderModel model(cfg, vocab, rng);

  // Toy corpus with strong bigram structure: token 2k is always followed
  // by token 2k+1, so masked positions are predictable from context.
  std::mt19937 data_rng(20);
  std::uniform_int_distribution<int> pair_pick(3, 17);
  std::vector<TokenSequence> corpus;
  for (int i = 0; i < 200; ++i) {
    TokenSequence t;
    for (int j = 0; j < 5; ++j) {
      const int k = pair_pick(data_rng);
      t.ids.push_back(2 * k);
      t.ids.push_back(2 * k + 1);
    }
    t.mask.assign(t.ids.size(), 1);
    corpus.push_back(std::move(t));
  }

  auto eval_loss = [&] {
    std::mt19937 eval_rng(999);  // same masking both times
    std::vector<TokenSequence> eval_batch(corpus.begin(), corpus.begin() + 32);
    return model.mlm_loss(eval_batch, 0.3, eval_rng).item();
  };

  const double before = eval_loss();
  std::mt19937 train_rng(21);
  std::uniform_int_distribution<int> pick(0, 199);
  const double lr = 0.02;
  for (int step = 0; step < 200; ++step) {
    std::vector<TokenSequence> batch;
    for (int b = 0; b < 8; ++b) batch.push_back(corpus[pick(train_rng)]);
    model.params().zero_grads();
    Tensor loss;
    try {
      loss = model.mlm_loss(batch, 0.3, train_rng);
    } catch (const NoMaskedPositions&) {
      continue;
    }
    backward(loss);
    for (auto& p : model.params().all()) {
      if (p.tensor.has_grad()) {
        p.tensor.mutable_value() -= lr * p.tensor.grad();
      }
    }
  }
  const double after = eval_loss();
  CHECK(after < before);
}

TEST_CASE("model save and load round trip") {
  std::mt19937 rng(23);
  DualEncoderModel model(EncoderConfig::from_preset("desk"), 300, rng);
  const std::string p1 = "/tmp/phonokws_model1.ckpt";
  const std::string p2 = "/tmp/phonokws_model2.ckpt";
  model.save(p1);

  DualEncoderModel loaded = DualEncoderModel::load(p1);
  CHECK(loaded.config().hidden_dim == 64);
  CHECK(loaded.config().preset == "desk");
  CHECK(loaded.vocab_size() == 300);

  // float32 storage rounds, so embeddings agree only approximately with the
  // source model but exactly across save/load/save.
  std::mt19937 data_rng(24);
  MelSpectrogram mel = random_mel(40, data_rng);
  CHECK(linf(model.encode_speech(mel).vector,
             loaded.encode_speech(mel).vector) < 1e-3);

  loaded.save(p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)),
                 std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)),
                 std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  // A checkpoint with a foreign format header is rejected.
  ParameterStore other;
  std::mt19937 r2(1);
  other.create_randn("w", {2, 2}, r2, 0.1);
  save_checkpoint(p1, {{"format", "embedding-index"}}, other.all());
  CHECK_THROWS_AS(DualEncoderModel::load(p1), CheckpointFormatError);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}
