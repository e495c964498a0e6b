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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "phonokws/training.hpp"

namespace phonokws {
namespace {

// Stable ln(1 + e^x) for the oracle.
double softplus(double x) {
  if (x > 35.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// Term-by-term reference for the sigmoid pair loss, written independently
// of the autograd composition.
double oracle_siglip(const Eigen::MatrixXd& s, const Eigen::MatrixXd& z,
                     double t_log, double b) {
  double total = 0.0;
  const double t = std::exp(t_log);
  for (int i = 0; i < s.rows(); ++i) {
    for (int j = 0; j < s.cols(); ++j) {
      total += softplus(-z(i, j) * (t * s(i, j) + b));
    }
  }
  return total / static_cast<double>(s.rows());
}

Eigen::MatrixXd rand_mat(int r, int c, std::mt19937& rng, double lo = -1.0,
                         double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = u(rng);
  }
  return m;
}

Eigen::MatrixXd random_labels(int rows, int cols, std::mt19937& rng) {
  Eigen::MatrixXd z = Eigen::MatrixXd::Constant(rows, cols, -1.0);
  std::uniform_int_distribution<int> col(0, rows - 1);
  for (int i = 0; i < rows; ++i) z(i, col(rng)) = 1.0;
  return z;
}

double run_loss(const Eigen::MatrixXd& s, const Eigen::MatrixXd& z,
                double t_log_v, double b_v) {
  PairLabelMatrix labels;
  labels.z = z;
  Tensor t_log = Tensor::scalar(t_log_v, true);
  Tensor b = Tensor::scalar(b_v, true);
  return siglip_loss(Tensor::from_matrix(s), labels, t_log, b).item();
}

// --- toy paired corpus: each symbol lights a fixed mel band ---

const std::u32string kToyAlphabet = U"ptkaiumn";

PhonemeSymbol sym(char32_t c) {
  PhonemeSymbol s;
  s.base = std::u32string(1, c);
  return s;
}

PhonemeSequence word_seq(const std::u32string& chars,
                         const std::string& lang = "und") {
  PhonemeSequence s;
  s.lang = lang;
  for (char32_t c : chars) s.symbols.push_back(sym(c));
  s.raw = s.to_utf8();
  return s;
}

MelSpectrogram toy_mel(const PhonemeSequence& seq) {
  MelSpectrogram mel;
  mel.frames = 12;
  mel.values.assign(static_cast<std::size_t>(mel.frames) *
                        MelSpectrogram::kBins,
                    -1.0);
  mel.mask.assign(mel.frames, 1);
  const int n = static_cast<int>(seq.size());
  for (int i = 0; i < n; ++i) {
    const std::size_t idx = kToyAlphabet.find(seq.symbols[i].base[0]);
    REQUIRE(idx != std::u32string::npos);
    const int t0 = i * mel.frames / n;
    const int t1 = (i + 1) * mel.frames / n;
    for (int t = t0; t < t1; ++t) {
      for (int b = 0; b < 8; ++b) {
        mel.values[static_cast<std::size_t>(t) * MelSpectrogram::kBins +
                   idx * 8 + b] = 1.0;
      }
    }
  }
  return mel;
}

UnigramVocab toy_vocab() {
  std::vector<std::pair<std::string, double>> pieces;
  for (char32_t c : kToyAlphabet) {
    pieces.emplace_back(sym(c).to_utf8(), -1.5);
  }
  return UnigramVocab::from_pieces(pieces);
}

EncoderConfig micro_config() {
  EncoderConfig cfg;
  cfg.hidden_dim = 16;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.intermediate_dim = 32;
  cfg.max_positions = 64;
  cfg.preset = "micro-test";
  return cfg;
}

std::vector<TrainItem> toy_items(int count, std::mt19937& rng,
                                 bool word_level = true) {
  std::uniform_int_distribution<int> len_pick(2, 4);
  std::uniform_int_distribution<int> ch_pick(
      0, static_cast<int>(kToyAlphabet.size()) - 1);
  std::vector<TrainItem> items;
  for (int i = 0; i < count; ++i) {
    std::u32string chars;
    const int len = len_pick(rng);
    for (int j = 0; j < len; ++j) chars.push_back(kToyAlphabet[ch_pick(rng)]);
    TrainItem item;
    item.phonemes = word_seq(chars);
    item.mel = toy_mel(item.phonemes);
    item.word_level = word_level;
    items.push_back(std::move(item));
  }
  return items;
}

TEST_CASE("sigmoid pair loss hits its closed forms") {
  Eigen::MatrixXd one(1, 1);
  one(0, 0) = 0.0;
  Eigen::MatrixXd pos(1, 1);
  pos(0, 0) = 1.0;
  CHECK(run_loss(one, pos, 0.0, 0.0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  one(0, 0) = 0.5;
  CHECK(run_loss(one, pos, std::log(10.0), -10.0) ==
        doctest::Approx(std::log1p(std::exp(5.0))).epsilon(1e-12));

  // 2x2 identity labels over orthonormal matched embeddings: S = I.
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd z2 = Eigen::MatrixXd::Constant(2, 2, -1.0);
  z2(0, 0) = z2(1, 1) = 1.0;
  const double expect =
      (2.0 * std::log1p(std::exp(-1.0)) + 2.0 * std::log(2.0)) / 2.0;
  CHECK(run_loss(s2, z2, 0.0, 0.0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(expect == doctest::Approx(1.006409).epsilon(1e-6));
}

TEST_CASE("sigmoid pair loss matches the oracle on random batches") {
  std::mt19937 rng(71);
  std::uniform_int_distribution<int> rows_pick(1, 8);
  std::uniform_int_distribution<int> extra_pick(0, 8);
  std::uniform_real_distribution<double> scal(-2.0, 3.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int rows = rows_pick(rng);
    const int cols = rows + extra_pick(rng);
    const Eigen::MatrixXd s = rand_mat(rows, cols, rng);
    const Eigen::MatrixXd z = random_labels(rows, cols, rng);
    const double t_log = scal(rng), b = scal(rng);
    const double got = run_loss(s, z, t_log, b);
    const double want = oracle_siglip(s, z, t_log, b);
    CHECK(std::abs(got - want) <=
          1e-9 * std::max({std::abs(got), std::abs(want), 1.0}));
  }
}

TEST_CASE("initial scalars make positives cost ten and negatives nothing") {
  // Orthogonal speech and phoneme sets: every similarity is exactly zero.
  const int batch = 4, dim = 16;
  Eigen::MatrixXd speech = Eigen::MatrixXd::Zero(batch, dim);
  Eigen::MatrixXd phon = Eigen::MatrixXd::Zero(batch, dim);
  for (int i = 0; i < batch; ++i) {
    speech(i, i) = 1.0;
    phon(i, batch + i) = 1.0;
  }
  const Eigen::MatrixXd s = cosine_similarity_matrix(speech, phon);
  const double t_log = std::log(10.0), b = -10.0;
  for (int i = 0; i < batch; ++i) {
    for (int j = 0; j < batch; ++j) {
      const double z = i == j ? 1.0 : -1.0;
      const double term = softplus(-z * (std::exp(t_log) * s(i, j) + b));
      if (i == j) {
        CHECK(term > 9.9);
        CHECK(term < 10.1);
      } else {
        CHECK(term < 1e-4);
      }
    }
  }
}

TEST_CASE("loss is invariant to a consistent batch permutation") {
  std::mt19937 rng(72);
  const int rows = 5, cols = 9;
  const Eigen::MatrixXd s = rand_mat(rows, cols, rng);
  const Eigen::MatrixXd z = random_labels(rows, cols, rng);
  const double base = run_loss(s, z, 0.7, -1.3);
  const std::vector<int> rp{3, 0, 4, 1, 2};
  const std::vector<int> cp{8, 2, 0, 5, 1, 7, 3, 6, 4};
  Eigen::MatrixXd sp(rows, cols), zp(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      sp(i, j) = s(rp[i], cp[j]);
      zp(i, j) = z(rp[i], cp[j]);
    }
  }
  CHECK(std::abs(run_loss(sp, zp, 0.7, -1.3) - base) < 1e-12);
}

TEST_CASE("better positives and worse negatives never raise the loss") {
  std::mt19937 rng(73);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd s = rand_mat(3, 6, rng, -0.9, 0.9);
    const Eigen::MatrixXd z = random_labels(3, 6, rng);
    const double before = oracle_siglip(s, z, 1.0, -0.5);
    std::uniform_int_distribution<int> ri(0, 2), ci(0, 5);
    const int i = ri(rng), j = ci(rng);
    Eigen::MatrixXd bumped = s;
    bumped(i, j) += 0.05;
    const double after = oracle_siglip(bumped, z, 1.0, -0.5);
    if (z(i, j) > 0) {
      CHECK(after <= before);
    } else {
      CHECK(after >= before);
    }
  }
}

TEST_CASE("loss gradients for embeddings and scalars pass differences") {
  std::mt19937 rng(74);
  const int batch = 3, cols = 5, dim = 6;
  Tensor speech = Tensor::from_matrix(rand_mat(batch, dim, rng), true);
  Tensor phon = Tensor::from_matrix(rand_mat(cols, dim, rng), true);
  Tensor t_log = Tensor::scalar(0.9, true);
  Tensor b = Tensor::scalar(-1.1, true);
  PairLabelMatrix labels;
  labels.z = random_labels(batch, cols, rng);
  auto forward = [&] {
    Tensor sim = matmul(l2_normalize(speech), transpose(l2_normalize(phon)));
    return siglip_loss(sim, labels, t_log, b);
  };

  for (Tensor t : {speech, phon, t_log, b}) t.zero_grad();
  backward(forward());
  std::vector<Tensor> params{speech, phon, t_log, b};
  const double h = 1e-5;
  double worst = 0.0;
  for (Tensor& p : params) {
    const Eigen::MatrixXd analytic = p.grad();
    Eigen::MatrixXd& vals = p.mutable_value();
    for (int i = 0; i < vals.rows(); ++i) {
      for (int j = 0; j < vals.cols(); ++j) {
        const double v0 = vals(i, j);
        vals(i, j) = v0 + h;
        const double f1 = forward().item();
        vals(i, j) = v0 - h;
        const double f2 = forward().item();
        vals(i, j) = v0;
        const double num = (f1 - f2) / (2.0 * h);
        const double rel =
            std::abs(analytic(i, j) - num) /
            std::max({std::abs(analytic(i, j)), std::abs(num), 1e-8});
        worst = std::max(worst, rel);
      }
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("label matrices validate their structure") {
  PairLabelMatrix ok = PairLabelMatrix::identity_with_negatives(3, 6);
  ok.validate();
  CHECK(ok.z.rows() == 3);
  CHECK(ok.z.cols() == 6);
  CHECK(ok.z(1, 1) == 1.0);
  CHECK(ok.z(1, 4) == -1.0);

  PairLabelMatrix bad = ok;
  bad.z(0, 5) = 1.0;  // positive in a hard-negative column
  CHECK_THROWS_AS(bad.validate(), ShapeMismatch);
  bad = ok;
  bad.z(2, 2) = -1.0;  // no positive left in the row
  CHECK_THROWS_AS(bad.validate(), ShapeMismatch);
  bad = ok;
  bad.z(0, 1) = 0.0;
  CHECK_THROWS_AS(bad.validate(), ShapeMismatch);
  CHECK_THROWS_AS(PairLabelMatrix::identity_with_negatives(4, 3),
                  ShapeMismatch);
}

TEST_CASE("cosine similarity hits closed forms and rejects zero rows") {
  Eigen::MatrixXd x(2, 2), y(3, 2);
  x << 1, 0, 0, 2;
  y << 1, 0, 0, 1, 1, 1;
  const Eigen::MatrixXd s = cosine_similarity_matrix(x, y);
  CHECK(s(0, 0) == doctest::Approx(1.0));
  CHECK(s(0, 1) == doctest::Approx(0.0));
  CHECK(s(0, 2) == doctest::Approx(0.7071).epsilon(1e-4));
  CHECK(s(1, 1) == doctest::Approx(1.0));
  CHECK(s.maxCoeff() <= 1.0);
  CHECK(s.minCoeff() >= -1.0);

  const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 2);
  CHECK_THROWS_AS(cosine_similarity_matrix(z, y), ZeroNormRow);
  CHECK_THROWS_AS(cosine_similarity_matrix(x, z), ZeroNormRow);
  Eigen::MatrixXd wide(1, 3);
  wide << 1, 1, 1;
  CHECK_THROWS_AS(cosine_similarity_matrix(x, wide), ShapeMismatch);
}

TEST_CASE("learning rate warms up linearly then decays on a cosine") {
  TrainConfig cfg;
  cfg.peak_lr = 1e-4;
  cfg.warmup_steps = 500;
  cfg.total_steps = 2500;
  CHECK(lr_schedule(0, cfg) == 0.0);
  CHECK(lr_schedule(250, cfg) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(lr_schedule(500, cfg) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_schedule(1500, cfg) ==
        doctest::Approx(5e-5).epsilon(1e-12));  // cosine midpoint
  CHECK(lr_schedule(2500, cfg) == doctest::Approx(0.0));
  CHECK(lr_schedule(600, cfg) < 1e-4);
  CHECK(lr_schedule(600, cfg) > lr_schedule(700, cfg));
  CHECK_THROWS_AS(lr_schedule(-1, cfg), std::invalid_argument);
  CHECK_THROWS_AS(lr_schedule(2501, cfg), std::invalid_argument);
}

TEST_CASE("gradient clipping rescales to the cap and reports the norm") {
  ParameterStore store;
  Tensor a = store.create_fill("a", {2, 2}, 1.0);
  auto set_grads = [&](double v) {
    store.zero_grads();
    Tensor loss = scale(sum_all(a), v);
    backward(loss);  // every entry's grad = v
  };
  set_grads(3.0);  // norm = 6
  CHECK(clip_global_norm(store, 10.0) == doctest::Approx(6.0));
  CHECK(a.grad()(0, 0) == doctest::Approx(3.0));

  set_grads(30.0);  // norm = 60 -> clipped
  CHECK(clip_global_norm(store, 10.0) == doctest::Approx(10.0));
  CHECK(a.grad()(0, 0) == doctest::Approx(5.0));
  CHECK(store.global_grad_norm() == doctest::Approx(10.0));
}

TEST_CASE("optimizer follows an adaptive-moment reference trace") {
  ParameterStore store;
  std::mt19937 rng(75);
  Tensor w = store.create_randn("w", {2, 2}, rng, 0.5);
  Tensor vvec = store.create_fill("vvec", {2}, 0.3);
  const Eigen::MatrixXd w0 = w.value();
  const Eigen::MatrixXd vv0 = vvec.value();

  TrainConfig cfg;
  AdamW opt(store, cfg);
  const double lr = 1e-3;
  const Eigen::MatrixXd gw1 = rand_mat(2, 2, rng);
  const Eigen::MatrixXd gw2 = rand_mat(2, 2, rng);
  const Eigen::MatrixXd gv1 = rand_mat(2, 1, rng);
  const Eigen::MatrixXd gv2 = rand_mat(2, 1, rng);

  for (int t = 1; t <= 2; ++t) {
    store.zero_grads();
    const Eigen::MatrixXd& gw = t == 1 ? gw1 : gw2;
    const Eigen::MatrixXd& gv = t == 1 ? gv1 : gv2;
    Tensor loss = add(sum_all(mul(w, Tensor::from_matrix(gw))),
                      sum_all(mul(vvec, Tensor::from_vector(gv))));
    backward(loss);
    opt.step(lr);
  }
  CHECK(opt.steps_taken() == 2);

  // Independent replay of the same two steps. The matrix parameter also
  // sees decoupled decay; the vector parameter must not.
  Eigen::MatrixXd mw = Eigen::MatrixXd::Zero(2, 2);
  Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(2, 2);
  Eigen::MatrixXd refw = w0;
  Eigen::MatrixXd mv = Eigen::MatrixXd::Zero(2, 1);
  Eigen::MatrixXd sv = Eigen::MatrixXd::Zero(2, 1);
  Eigen::MatrixXd refv = vv0;
  for (int t = 1; t <= 2; ++t) {
    const Eigen::MatrixXd& gw = t == 1 ? gw1 : gw2;
    const Eigen::MatrixXd& gv = t == 1 ? gv1 : gv2;
    const double bc1 = 1.0 - std::pow(0.9, t);
    const double bc2 = 1.0 - std::pow(0.999, t);
    mw = 0.9 * mw + 0.1 * gw;
    sw = 0.999 * sw + 0.001 * gw.cwiseProduct(gw);
    Eigen::MatrixXd step_w =
        ((mw / bc1).array() / ((sw / bc2).array().sqrt() + 1e-8)).matrix();
    step_w += 0.01 * refw;  // decoupled decay on the pre-step value
    refw -= lr * step_w;
    mv = 0.9 * mv + 0.1 * gv;
    sv = 0.999 * sv + 0.001 * gv.cwiseProduct(gv);
    refv -= lr *
            ((mv / bc1).array() / ((sv / bc2).array().sqrt() + 1e-8)).matrix();
  }
  CHECK((w.value() - refw).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((vvec.value() - refv).cwiseAbs().maxCoeff() < 1e-15);

  // A parameter outside the loss is untouched: no moments, no decay.
  store.zero_grads();
  Tensor loss = sum_all(mul(w, Tensor::from_matrix(gw1)));
  backward(loss);
  const Eigen::MatrixXd before = vvec.value();
  opt.step(lr);
  CHECK(vvec.value() == before);
}

TEST_CASE("config parser takes published names, aliases, and k suffixes") {
  const std::string text =
      "# reference recipe\n"
      "Initial learning rate = 1e-4\n"
      "Scheduler = Cosine Scheduler\n"
      "Warm-up steps = 500\n"
      "Total training steps = 100k\n"
      "MSWC-P batch size = 256\n"
      "FLEURS-P batch size = 32\n"
      "DoReCo-P batch size = 32\n"
      "Gradient checkpointing = True\n"
      "Mixed Precision = float16\n"
      "Max. Gradient Norm for Gradient Clipping = 10\n"
      "Hidden dimensions = 384\n"
      "Num. Layers = 4\n"
      "Num. Att. Heads = 6\n"
      "Intermediate size = 1536\n"
      "seed = 7  # trailing comment\n";
  const TrainConfig cfg = parse_train_config(text);
  CHECK(cfg.peak_lr == 1e-4);
  CHECK(cfg.warmup_steps == 500);
  CHECK(cfg.total_steps == 100000);
  CHECK(cfg.word_batch_size == 256);
  CHECK(cfg.utterance_batch_size == 32);
  CHECK(cfg.clip_norm == 10.0);
  CHECK(cfg.hidden_dim == 384);
  CHECK(cfg.num_layers == 4);
  CHECK(cfg.num_heads == 6);
  CHECK(cfg.intermediate_dim == 1536);
  CHECK(cfg.seed == 7);
  const EncoderConfig enc = cfg.encoder_config();
  CHECK(enc.hidden_dim == 384);
  CHECK(enc.num_layers == 4);

  const TrainConfig snake = parse_train_config(
      "peak_lr = 2e-4\nwarmup_steps = 10\ntotal_steps = 50\n"
      "word_batch_size = 4\nutterance_batch_size = 4\n");
  CHECK(snake.peak_lr == 2e-4);
  CHECK(snake.total_steps == 50);

  CHECK_THROWS_AS(parse_train_config("no_such_key = 1\n"), ConfigParseError);
  CHECK_THROWS_AS(parse_train_config("Scheduler = linear\n"),
                  ConfigParseError);
  CHECK_THROWS_AS(parse_train_config("Warm-up steps = banana\n"),
                  ConfigParseError);
  CHECK_THROWS_AS(parse_train_config("just a line\n"), ConfigParseError);
  CHECK_THROWS_AS(parse_train_config("peak_lr = 0\n"), ConfigParseError);
  CHECK_THROWS_AS(
      parse_train_config("warmup_steps = 60\ntotal_steps = 50\n"),
      ConfigParseError);
}

TEST_CASE("token wrapping adds the sentence sentinels") {
  TokenSequence pieces;
  pieces.ids = {300, 301, 9};
  pieces.mask = {1, 1, 1};
  const TokenSequence wrapped = wrap_tokens(pieces);
  CHECK(wrapped.ids ==
        std::vector<int>{UnigramVocab::kBos, 300, 301, 9, UnigramVocab::kEos});
  CHECK(wrapped.mask == std::vector<int>(5, 1));
}

TEST_CASE("a training step updates scalars and respects the clip") {
  const UnigramVocab vocab = toy_vocab();
  std::mt19937 init_rng(80);
  DualEncoderModel model(micro_config(), vocab.size(), init_rng);
  std::mt19937 data_rng(81);
  const std::vector<TrainItem> batch = toy_items(6, data_rng);
  InventorySet inventories;
  for (const auto& item : batch) inventories.observe(item.phonemes);

  TrainConfig cfg = TrainConfig::desk();
  cfg.total_steps = 100;
  cfg.warmup_steps = 10;
  AdamW opt(model.params(), cfg);
  const double t0 = model.t_log().item();
  const double b0 = model.bias().item();

  std::mt19937 step_rng(82);
  const StepMetrics m =
      train_step(model, batch, vocab, inventories, opt, cfg, 5, step_rng);
  CHECK(std::isfinite(m.loss));
  CHECK(m.loss > 0.0);
  CHECK(m.grad_norm <= cfg.clip_norm + 1e-9);
  CHECK(m.lr == doctest::Approx(lr_schedule(5, cfg)));
  CHECK(model.t_log().item() != t0);
  CHECK(model.bias().item() != b0);

  // Same seeds, fresh model: the step reproduces bit-for-bit.
  std::mt19937 init_rng2(80);
  DualEncoderModel model2(micro_config(), vocab.size(), init_rng2);
  AdamW opt2(model2.params(), cfg);
  std::mt19937 step_rng2(82);
  const StepMetrics m2 =
      train_step(model2, batch, vocab, inventories, opt2, cfg, 5, step_rng2);
  CHECK(m2.loss == m.loss);
  CHECK(m2.grad_norm == m.grad_norm);

  CHECK_THROWS_AS(train_step(model, {batch[0]}, vocab, inventories, opt, cfg,
                             6, step_rng),
                  std::invalid_argument);
}

TEST_CASE("the loop round-robins sources and rejects empty manifests") {
  const UnigramVocab vocab = toy_vocab();
  std::mt19937 data_rng(83);
  std::vector<TrainSource> sources(2);
  sources[0] = {"words", toy_items(6, data_rng, true), true, 4};
  sources[1] = {"sentences", toy_items(5, data_rng, false), false, 2};

  TrainConfig cfg = TrainConfig::desk();
  cfg.total_steps = 6;
  cfg.warmup_steps = 2;
  cfg.checkpoint_interval = 1000;  // no checkpoints for this run
  std::mt19937 init_rng(84);
  DualEncoderModel model(micro_config(), vocab.size(), init_rng);
  const std::vector<StepMetrics> history =
      train_loop(model, sources, vocab, cfg, "");
  REQUIRE(history.size() == 6);
  for (int i = 0; i < 6; ++i) {
    CHECK(history[i].source == i % 2);
    CHECK(history[i].step == i + 1);
    CHECK(std::isfinite(history[i].loss));
  }

  // Identical seeds reproduce the loss curve on a fresh model.
  std::mt19937 init_rng2(84);
  DualEncoderModel model2(micro_config(), vocab.size(), init_rng2);
  const std::vector<StepMetrics> replay =
      train_loop(model2, sources, vocab, cfg, "");
  for (std::size_t i = 0; i < history.size(); ++i) {
    CHECK(replay[i].loss == history[i].loss);
  }

  CHECK_THROWS_AS(train_loop(model, {}, vocab, cfg, ""), ManifestEmpty);
  std::vector<TrainSource> holed = sources;
  holed[1].items.clear();
  CHECK_THROWS_AS(train_loop(model, holed, vocab, cfg, ""), ManifestEmpty);
}

TEST_CASE("the loop writes metrics and checkpoints and the loss descends") {
  const UnigramVocab vocab = toy_vocab();
  std::mt19937 data_rng(85);
  std::vector<TrainSource> sources(1);
  sources[0] = {"words", toy_items(12, data_rng, true), true, 8};

  TrainConfig cfg = TrainConfig::desk();
  cfg.total_steps = 200;
  cfg.warmup_steps = 20;
  cfg.peak_lr = 3e-4;
  cfg.checkpoint_interval = 150;
  cfg.seed = 5;

  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "phonokws_train_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  std::mt19937 init_rng(86);
  DualEncoderModel model(micro_config(), vocab.size(), init_rng);
  const std::vector<StepMetrics> history =
      train_loop(model, sources, vocab, cfg, dir.string());
  REQUIRE(history.size() == 200);

  double early = 0.0, late = 0.0;
  for (int i = 0; i < 20; ++i) {
    early += history[i].loss;
    late += history[180 + i].loss;
  }
  CHECK(late / 20.0 < early / 20.0);
  for (const StepMetrics& m : history) {
    CHECK(m.grad_norm <= cfg.clip_norm + 1e-9);
  }

  CHECK(std::filesystem::exists(dir / "checkpoint_000150.bin"));
  CHECK(std::filesystem::exists(dir / "checkpoint_000200.bin"));
  std::ifstream metrics(dir / "metrics.log");
  REQUIRE(metrics.good());
  std::string line;
  int lines = 0;
  while (std::getline(metrics, line)) {
    if (!line.empty()) ++lines;
  }
  CHECK(lines == 200);
  // Columns: step loss grad_norm lr.
  std::ifstream again(dir / "metrics.log");
  int step = 0;
  double loss = 0, gnorm = 0, lr = 0;
  again >> step >> loss >> gnorm >> lr;
  CHECK(step == 1);
  CHECK(loss == doctest::Approx(history[0].loss));
  CHECK(lr == doctest::Approx(history[0].lr));
  std::filesystem::remove_all(dir);
}

TEST_CASE("disabling mined negatives shrinks the pair grid to the batch") {
  const UnigramVocab vocab = toy_vocab();
  std::mt19937 init_rng(90);
  DualEncoderModel model(micro_config(), vocab.size(), init_rng);
  std::mt19937 data_rng(91);
  const std::vector<TrainItem> batch = toy_items(5, data_rng);
  InventorySet inventories;
  for (const auto& item : batch) inventories.observe(item.phonemes);

  TrainConfig cfg = TrainConfig::desk();
  cfg.total_steps = 100;
  cfg.warmup_steps = 10;
  cfg.hard_negatives = false;

  // Reference loss straight from the pre-step weights: a square grid of
  // batch pairs with no mined columns. (Encoding is const, so reading the
  // model before the optimizer step gives the exact same numbers.)
  const DualEncoderModel& ref = model;
  const int bsz = static_cast<int>(batch.size());
  Eigen::MatrixXd s(bsz, micro_config().hidden_dim);
  Eigen::MatrixXd p(bsz, micro_config().hidden_dim);
  for (int i = 0; i < bsz; ++i) {
    Eigen::VectorXd sv = ref.encode_speech(batch[i].mel).vector;
    Eigen::VectorXd pv =
        ref.encode_phonemes(
               wrap_tokens(vocab.encode(batch[i].phonemes.to_utf8())))
            .vector;
    s.row(i) = sv.transpose() / sv.norm();
    p.row(i) = pv.transpose() / pv.norm();
  }
  const Eigen::MatrixXd sims = s * p.transpose();
  const Eigen::MatrixXd labels =
      2.0 * Eigen::MatrixXd::Identity(bsz, bsz) -
      Eigen::MatrixXd::Ones(bsz, bsz);
  const double want = oracle_siglip(sims, labels, ref.t_log().item(),
                                    ref.bias().item());
  AdamW opt(model.params(), cfg);
  std::mt19937 step_rng(92);
  const std::mt19937 rng_before = step_rng;
  const StepMetrics m =
      train_step(model, batch, vocab, inventories, opt, cfg, 3, step_rng);
  CHECK(m.loss == doctest::Approx(want).epsilon(1e-12));

  // No mining happened, so the step never touched the rng stream.
  std::mt19937 rng_copy = rng_before;
  CHECK(step_rng() == rng_copy());

  // Config surface: the switch parses, and garbage is rejected.
  CHECK(parse_train_config("hard_negatives = false\n").hard_negatives == false);
  CHECK(parse_train_config("hard_negatives = true\n").hard_negatives == true);
  CHECK(parse_train_config("").hard_negatives == true);
  CHECK_THROWS_AS(parse_train_config("hard_negatives = maybe\n"),
                  ConfigParseError);
}

}  // namespace
}  // namespace phonokws
