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

#include "phonokws/training.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace phonokws {

// --- configuration ---

TrainConfig TrainConfig::desk() {
  TrainConfig cfg;
  cfg.total_steps = 2000;
  cfg.word_batch_size = 16;
  cfg.utterance_batch_size = 16;
  cfg.preset = "desk";
  return cfg;
}

EncoderConfig TrainConfig::encoder_config() const {
  EncoderConfig enc = EncoderConfig::from_preset(preset);
  if (hidden_dim > 0) enc.hidden_dim = hidden_dim;
  if (num_layers > 0) enc.num_layers = num_layers;
  if (num_heads > 0) enc.num_heads = num_heads;
  if (intermediate_dim > 0) enc.intermediate_dim = intermediate_dim;
  enc.validate();
  return enc;
}

void TrainConfig::validate() const {
  if (peak_lr <= 0) throw ConfigParseError("learning rate must be positive");
  if (warmup_steps < 0 || warmup_steps >= total_steps) {
    throw ConfigParseError("warmup steps must lie inside total steps");
  }
  if (word_batch_size < 2 || utterance_batch_size < 2) {
    throw ConfigParseError("batch sizes must be at least 2");
  }
  if (clip_norm <= 0) throw ConfigParseError("clip norm must be positive");
  if (mask_prob < 0 || mask_prob > 1) {
    throw ConfigParseError("mask probability must lie in [0, 1]");
  }
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, std::string value) {
  double mult = 1.0;
  if (!value.empty() && (value.back() == 'k' || value.back() == 'K')) {
    mult = 1000.0;
    value.pop_back();
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<int>(std::llround(v * mult));
  } catch (const std::exception&) {
    throw ConfigParseError("bad integer for '" + key + "': " + value);
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigParseError("bad number for '" + key + "': " + value);
  }
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg = TrainConfig::desk();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigParseError("expected 'key = value': " + trim(line));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "Initial learning rate" || key == "peak_lr") {
      cfg.peak_lr = parse_double(key, value);
    } else if (key == "Scheduler" || key == "scheduler") {
      if (value != "Cosine Scheduler" && value != "cosine") {
        throw ConfigParseError("only the cosine scheduler is supported");
      }
    } else if (key == "Warm-up steps" || key == "warmup_steps") {
      cfg.warmup_steps = parse_int(key, value);
    } else if (key == "Total training steps" || key == "total_steps") {
      cfg.total_steps = parse_int(key, value);
    } else if (key == "MSWC-P batch size" || key == "word_batch_size") {
      cfg.word_batch_size = parse_int(key, value);
    } else if (key == "FLEURS-P batch size" || key == "DoReCo-P batch size" ||
               key == "utterance_batch_size") {
      cfg.utterance_batch_size = parse_int(key, value);
    } else if (key == "Max. Gradient Norm for Gradient Clipping" ||
               key == "clip_norm") {
      cfg.clip_norm = parse_double(key, value);
    } else if (key == "Hidden dimensions" || key == "hidden_dim") {
      cfg.hidden_dim = parse_int(key, value);
    } else if (key == "Num. Layers" || key == "num_layers") {
      cfg.num_layers = parse_int(key, value);
    } else if (key == "Num. Att. Heads" || key == "num_heads") {
      cfg.num_heads = parse_int(key, value);
    } else if (key == "Intermediate size" || key == "intermediate_dim") {
      cfg.intermediate_dim = parse_int(key, value);
    } else if (key == "Gradient checkpointing" || key == "Mixed Precision") {
      // Accepted for compatibility with published configs; this
      // implementation always runs full-graph, 64-bit.
    } else if (key == "weight_decay") {
      cfg.weight_decay = parse_double(key, value);
    } else if (key == "seed") {
      cfg.seed = static_cast<unsigned>(parse_int(key, value));
    } else if (key == "preset") {
      cfg.preset = value;
    } else if (key == "checkpoint_interval") {
      cfg.checkpoint_interval = parse_int(key, value);
    } else if (key == "mask_prob") {
      cfg.mask_prob = parse_double(key, value);
    } else if (key == "hard_negatives") {
      if (value == "true" || value == "1") {
        cfg.hard_negatives = true;
      } else if (value == "false" || value == "0") {
        cfg.hard_negatives = false;
      } else {
        throw ConfigParseError("hard_negatives must be true or false, got \"" +
                               value + "\"");
      }
    } else {
      throw ConfigParseError("unknown config key: " + key);
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigParseError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str());
}

// --- labels, similarity, loss ---

PairLabelMatrix PairLabelMatrix::identity_with_negatives(int batch, int cols) {
  if (batch < 1 || cols < batch) {
    throw ShapeMismatch("label matrix needs cols >= batch >= 1");
  }
  PairLabelMatrix labels;
  labels.z = Eigen::MatrixXd::Constant(batch, cols, -1.0);
  for (int i = 0; i < batch; ++i) labels.z(i, i) = 1.0;
  return labels;
}

void PairLabelMatrix::validate() const {
  const int batch = static_cast<int>(z.rows());
  for (int i = 0; i < batch; ++i) {
    int positives = 0;
    for (int j = 0; j < z.cols(); ++j) {
      const double v = z(i, j);
      if (v != 1.0 && v != -1.0) {
        throw ShapeMismatch("label entries must be +1 or -1");
      }
      if (v == 1.0) {
        if (j >= batch) {
          throw ShapeMismatch("hard-negative columns must be -1");
        }
        ++positives;
      }
    }
    if (positives != 1) {
      throw ShapeMismatch("each row needs exactly one positive");
    }
  }
}

Eigen::MatrixXd cosine_similarity_matrix(const Eigen::MatrixXd& x,
                                         const Eigen::MatrixXd& y) {
  if (x.cols() != y.cols()) {
    throw ShapeMismatch("cosine similarity dims " + std::to_string(x.cols()) +
                        " vs " + std::to_string(y.cols()));
  }
  Eigen::VectorXd xn = x.rowwise().norm();
  Eigen::VectorXd yn = y.rowwise().norm();
  for (int i = 0; i < xn.size(); ++i) {
    if (xn(i) < 1e-12) throw ZeroNormRow("zero-norm row " + std::to_string(i));
  }
  for (int j = 0; j < yn.size(); ++j) {
    if (yn(j) < 1e-12) throw ZeroNormRow("zero-norm row " + std::to_string(j));
  }
  Eigen::MatrixXd s = x * y.transpose();
  for (int i = 0; i < s.rows(); ++i) {
    for (int j = 0; j < s.cols(); ++j) {
      s(i, j) = std::clamp(s(i, j) / (xn(i) * yn(j)), -1.0, 1.0);
    }
  }
  return s;
}

Tensor siglip_loss(const Tensor& s, const PairLabelMatrix& labels,
                   const Tensor& t_log, const Tensor& b) {
  if (s.rows() != labels.z.rows() || s.cols() != labels.z.cols()) {
    throw ShapeMismatch("similarity " + std::to_string(s.rows()) + "x" +
                        std::to_string(s.cols()) + " vs labels " +
                        std::to_string(labels.z.rows()) + "x" +
                        std::to_string(labels.z.cols()));
  }
  try {
    const Tensor z = Tensor::from_matrix(labels.z);
    Tensor logits = add_scalar_t(mul_scalar_t(s, exp_t(t_log)), b);
    // ln(1 + e^{-z a}) = -log_sigmoid(z a)
    Tensor total = sum_all(log_sigmoid(mul(z, logits)));
    return scale(total, -1.0 / static_cast<double>(s.rows()));
  } catch (const NonFiniteValue& e) {
    throw NonFiniteLoss(e.what());
  }
}

// --- schedule, clipping, optimizer ---

double lr_schedule(int step, const TrainConfig& cfg) {
  if (step < 0 || step > cfg.total_steps) {
    throw std::invalid_argument("schedule step out of range");
  }
  if (step <= cfg.warmup_steps) {
    return cfg.peak_lr * static_cast<double>(step) /
           static_cast<double>(cfg.warmup_steps);
  }
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps -
                                              cfg.warmup_steps);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double clip_global_norm(ParameterStore& store, double max_norm) {
  const double norm = store.global_grad_norm();
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& p : store.all()) {
      if (p.tensor.has_grad()) {
        Tensor t = p.tensor;
        t.mutable_grad() *= scale;
      }
    }
    return max_norm;
  }
  return norm;
}

AdamW::AdamW(ParameterStore& store, const TrainConfig& cfg)
    : store_(&store),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps),
      weight_decay_(cfg.weight_decay) {
  for (const auto& p : store.all()) {
    m_.emplace_back(Eigen::MatrixXd::Zero(p.tensor.rows(), p.tensor.cols()));
    v_.emplace_back(Eigen::MatrixXd::Zero(p.tensor.rows(), p.tensor.cols()));
    decayed_.push_back(p.tensor.shape().size() >= 2);
  }
}

void AdamW::step(double lr) {
  if (store_->all().size() != m_.size()) {
    throw std::logic_error("parameter set changed under the optimizer");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < m_.size(); ++i) {
    Tensor t = store_->all()[i].tensor;
    if (!t.has_grad()) continue;
    const Eigen::MatrixXd& g = t.grad();
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const Eigen::MatrixXd mhat = m_[i] / bc1;
    const Eigen::MatrixXd vhat = v_[i] / bc2;
    Eigen::MatrixXd update =
        mhat.array() / (vhat.array().sqrt() + eps_);
    if (decayed_[i]) update.array() += weight_decay_ * t.value().array();
    t.mutable_value() -= lr * update;
  }
}

// --- training steps ---

TokenSequence wrap_tokens(const TokenSequence& pieces) {
  TokenSequence out;
  out.ids.reserve(pieces.ids.size() + 2);
  out.ids.push_back(UnigramVocab::kBos);
  for (std::size_t i = 0; i < pieces.ids.size(); ++i) {
    if (pieces.mask.empty() || pieces.mask[i]) out.ids.push_back(pieces.ids[i]);
  }
  out.ids.push_back(UnigramVocab::kEos);
  out.mask.assign(out.ids.size(), 1);
  return out;
}

StepMetrics train_step(DualEncoderModel& model,
                       const std::vector<TrainItem>& batch,
                       const UnigramVocab& tokenizer,
                       const InventorySet& inventories, AdamW& opt,
                       const TrainConfig& cfg, int step, std::mt19937& rng) {
  const int bsz = static_cast<int>(batch.size());
  if (bsz < 2) throw std::invalid_argument("train_step needs a batch of >= 2");

  std::vector<Tensor> speech_rows, phoneme_rows;
  speech_rows.reserve(bsz);
  phoneme_rows.reserve(2 * bsz);
  for (const TrainItem& item : batch) {
    speech_rows.push_back(model.encode_speech_t(item.mel));
    phoneme_rows.push_back(model.encode_phonemes_t(
        wrap_tokens(tokenizer.encode(item.phonemes.to_utf8()))));
  }
  if (cfg.hard_negatives) {
    for (const TrainItem& item : batch) {
      const PhonemeInventory& inv =
          inventories.for_language(item.phonemes.lang);
      const PhonemeSequence negative =
          item.word_level ? minimal_pair(item.phonemes, inv, rng)
                          : corrupt_sentence(item.phonemes, inv, rng);
      phoneme_rows.push_back(model.encode_phonemes_t(
          wrap_tokens(tokenizer.encode(negative.to_utf8()))));
    }
  }

  Tensor s_mat = l2_normalize(concat_rows(speech_rows));
  Tensor p_mat = l2_normalize(concat_rows(phoneme_rows));
  Tensor sim = matmul(s_mat, transpose(p_mat));
  const PairLabelMatrix labels = PairLabelMatrix::identity_with_negatives(
      bsz, cfg.hard_negatives ? 2 * bsz : bsz);
  Tensor loss = siglip_loss(sim, labels, model.t_log(), model.bias());

  model.params().zero_grads();
  backward(loss);
  const double grad_norm = clip_global_norm(model.params(), cfg.clip_norm);
  const double lr = lr_schedule(step, cfg);
  opt.step(lr);

  StepMetrics metrics;
  metrics.step = step;
  metrics.loss = loss.item();
  metrics.grad_norm = grad_norm;
  metrics.lr = lr;
  return metrics;
}

std::vector<StepMetrics> train_loop(DualEncoderModel& model,
                                    const std::vector<TrainSource>& sources,
                                    const UnigramVocab& tokenizer,
                                    const TrainConfig& cfg,
                                    const std::string& out_dir) {
  if (sources.empty()) throw ManifestEmpty("no training sources");
  for (const auto& src : sources) {
    if (src.items.empty()) {
      throw ManifestEmpty("training source '" + src.name + "' has no items");
    }
  }
  cfg.validate();

  InventorySet inventories;
  for (const auto& src : sources) {
    for (const auto& item : src.items) inventories.observe(item.phonemes);
  }

  std::mt19937 rng(cfg.seed);
  AdamW opt(model.params(), cfg);

  // Per-source shuffled cursors; a source reshuffles when its remaining
  // items cannot fill the next batch.
  std::vector<std::vector<int>> order(sources.size());
  std::vector<std::size_t> cursor(sources.size(), 0);
  for (std::size_t s = 0; s < sources.size(); ++s) {
    order[s].resize(sources[s].items.size());
    std::iota(order[s].begin(), order[s].end(), 0);
    std::shuffle(order[s].begin(), order[s].end(), rng);
  }

  std::ofstream metrics_file;
  if (!out_dir.empty()) {
    metrics_file.open(out_dir + "/metrics.log", std::ios::trunc);
    if (!metrics_file) {
      throw std::runtime_error("cannot write metrics log in " + out_dir);
    }
  }

  std::vector<StepMetrics> history;
  history.reserve(cfg.total_steps);
  for (int step = 1; step <= cfg.total_steps; ++step) {
    const std::size_t s = (step - 1) % sources.size();
    const TrainSource& src = sources[s];
    const int bsz = std::min<int>(src.batch_size,
                                  static_cast<int>(src.items.size()));
    if (cursor[s] + bsz > order[s].size()) {
      std::shuffle(order[s].begin(), order[s].end(), rng);
      cursor[s] = 0;
    }
    std::vector<TrainItem> batch;
    batch.reserve(bsz);
    for (int i = 0; i < bsz; ++i) {
      batch.push_back(src.items[order[s][cursor[s]++]]);
    }

    StepMetrics m =
        train_step(model, batch, tokenizer, inventories, opt, cfg, step, rng);
    m.source = static_cast<int>(s);
    if (metrics_file) {
      char line[128];
      std::snprintf(line, sizeof(line), "%d %.10g %.10g %.10g\n", m.step,
                    m.loss, m.grad_norm, m.lr);
      metrics_file << line;
    }
    if (!out_dir.empty() && (step % cfg.checkpoint_interval == 0 ||
                             step == cfg.total_steps)) {
      char name[64];
      std::snprintf(name, sizeof(name), "/checkpoint_%06d.bin", step);
      model.save(out_dir + name);
    }
    history.push_back(m);
  }
  return history;
}

}  // namespace phonokws
