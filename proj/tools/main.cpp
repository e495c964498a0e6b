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

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "phonokws/audio.hpp"
#include "phonokws/autograd.hpp"
#include "phonokws/encoders.hpp"
#include "phonokws/eval.hpp"
#include "phonokws/ipa.hpp"
#include "phonokws/manifest.hpp"
#include "phonokws/negatives.hpp"
#include "phonokws/retrieval.hpp"
#include "phonokws/synth.hpp"
#include "phonokws/tokenizer.hpp"
#include "phonokws/training.hpp"

namespace fs = std::filesystem;
using namespace phonokws;

namespace {

const IpaTable& ipa_table() {
  static const IpaTable table =
      IpaTable::load(default_data_dir() + "/ipa_whitelist.tsv");
  return table;
}

// Audio paths in a manifest resolve against PHONOKWS_DATA_ROOT when set,
// otherwise against the manifest's own directory.
fs::path audio_root(const std::string& manifest_path) {
  if (const char* env = std::getenv("PHONOKWS_DATA_ROOT")) {
    if (*env != '\0') return fs::path(env);
  }
  return fs::path(manifest_path).parent_path();
}

bool split_selected(const std::string& record_split,
                    const std::string& wanted) {
  return wanted == "all" || record_split == wanted;
}

std::vector<ManifestRecord> load_split(const std::string& manifest_path,
                                       const std::string& split) {
  std::vector<ManifestRecord> out;
  for (ManifestRecord& rec : load_manifest(manifest_path)) {
    if (split_selected(rec.split, split)) out.push_back(std::move(rec));
  }
  if (out.empty()) {
    throw ManifestEmpty("no records with split \"" + split + "\" in " +
                        manifest_path);
  }
  return out;
}

std::vector<TrainItem> featurize(const std::string& manifest_path,
                                 const std::string& split, bool word_level) {
  const fs::path root = audio_root(manifest_path);
  std::vector<TrainItem> items;
  for (const ManifestRecord& rec : load_split(manifest_path, split)) {
    TrainItem item;
    item.mel = log_mel(load_wav((root / rec.audio).string()));
    item.phonemes = normalize_ipa(ipa_table(), rec.ipa, rec.lang);
    item.word_level = word_level;
    items.push_back(std::move(item));
  }
  return items;
}

void write_text_atomic(const std::string& path, const std::string& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + tmp);
    out << body;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("rename failed: " + path);
  }
}

// --- tokenizer-train ---

struct TokenizerTrainArgs {
  std::vector<std::string> manifests;
  std::string out;
  std::string split = "train";
  int vocab_size = 500;
};

int run_tokenizer_train(const TokenizerTrainArgs& args) {
  std::vector<std::string> corpus;
  for (const std::string& path : args.manifests) {
    for (const ManifestRecord& rec : load_split(path, args.split)) {
      corpus.push_back(
          normalize_ipa(ipa_table(), rec.ipa, rec.lang).to_utf8());
    }
  }
  const UnigramVocab vocab = UnigramVocab::train(corpus, args.vocab_size);
  vocab.save(args.out);
  std::cout << "trained unigram vocab: " << vocab.piece_count()
            << " pieces over " << corpus.size() << " transcriptions -> "
            << args.out << "\n";
  return 0;
}

// --- pretrain-mlm ---

struct PretrainArgs {
  std::string manifest;
  std::string vocab;
  std::string config;
  std::string out;
  std::string preset;
  int seed = -1;
};

int run_pretrain_mlm(const PretrainArgs& args) {
  TrainConfig cfg =
      args.config.empty() ? TrainConfig::desk() : load_train_config(args.config);
  if (!args.preset.empty()) cfg.preset = args.preset;
  if (args.seed >= 0) cfg.seed = static_cast<unsigned>(args.seed);
  cfg.validate();

  const UnigramVocab vocab = UnigramVocab::load(args.vocab);
  std::vector<TokenSequence> corpus;
  for (const ManifestRecord& rec : load_split(args.manifest, "train")) {
    corpus.push_back(wrap_tokens(vocab.encode(
        normalize_ipa(ipa_table(), rec.ipa, rec.lang).to_utf8())));
  }

  std::mt19937 rng(cfg.seed);
  DualEncoderModel model(cfg.encoder_config(), vocab.size(), rng);
  AdamW opt(model.params(), cfg);
  fs::create_directories(args.out);

  std::ostringstream log;
  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t cursor = order.size();  // forces a shuffle on first use
  const int batch_size =
      std::min<int>(cfg.word_batch_size, static_cast<int>(corpus.size()));
  for (int step = 1; step <= cfg.total_steps; ++step) {
    std::vector<TokenSequence> batch;
    for (int i = 0; i < batch_size; ++i) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(corpus[order[cursor++]]);
    }
    double loss_value = 0.0;
    try {
      Tensor loss = model.mlm_loss(batch, cfg.mask_prob, rng);
      model.params().zero_grads();
      backward(loss);
      clip_global_norm(model.params(), cfg.clip_norm);
      opt.step(lr_schedule(step, cfg));
      loss_value = loss.item();
    } catch (const NoMaskedPositions&) {
      continue;  // nothing selected anywhere in the batch; skip the update
    }
    char line[128];
    std::snprintf(line, sizeof(line), "%d %.10g\n", step, loss_value);
    log << line;
    if (step % cfg.checkpoint_interval == 0 || step == cfg.total_steps) {
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_%06d.bin", step);
      model.save((fs::path(args.out) / name).string());
    }
  }
  write_text_atomic((fs::path(args.out) / "mlm_metrics.log").string(),
                    log.str());
  std::cout << "masked-LM pretraining done: " << cfg.total_steps
            << " steps over " << corpus.size() << " sequences -> " << args.out
            << "\n";
  return 0;
}

// --- train ---

struct TrainArgs {
  std::vector<std::string> word_manifests;
  std::vector<std::string> utterance_manifests;
  std::string vocab;
  std::string config;
  std::string out;
  std::string init;
  std::string preset;
  int seed = -1;
};

int run_train(const TrainArgs& args) {
  TrainConfig cfg =
      args.config.empty() ? TrainConfig::desk() : load_train_config(args.config);
  if (!args.preset.empty()) cfg.preset = args.preset;
  if (args.seed >= 0) cfg.seed = static_cast<unsigned>(args.seed);
  cfg.validate();

  const UnigramVocab vocab = UnigramVocab::load(args.vocab);
  std::vector<TrainSource> sources;
  for (const std::string& path : args.word_manifests) {
    TrainSource src;
    src.name = fs::path(path).stem().string();
    src.items = featurize(path, "train", true);
    src.word_level = true;
    src.batch_size = cfg.word_batch_size;
    sources.push_back(std::move(src));
  }
  for (const std::string& path : args.utterance_manifests) {
    TrainSource src;
    src.name = fs::path(path).stem().string();
    src.items = featurize(path, "train", false);
    src.word_level = false;
    src.batch_size = cfg.utterance_batch_size;
    sources.push_back(std::move(src));
  }

  std::mt19937 rng(cfg.seed);
  DualEncoderModel model = args.init.empty()
                               ? DualEncoderModel(cfg.encoder_config(),
                                                  vocab.size(), rng)
                               : DualEncoderModel::load(args.init);
  fs::create_directories(args.out);
  const std::vector<StepMetrics> history =
      train_loop(model, sources, vocab, cfg, args.out);
  double last = history.empty() ? 0.0 : history.back().loss;
  std::cout << "training done: " << history.size() << " steps, final loss "
            << last << " -> " << args.out << "\n";
  return 0;
}

// --- embed ---

struct EmbedArgs {
  std::string checkpoint;
  std::string vocab;
  std::string manifest;
  std::string modality;
  std::string split = "all";
  std::string out;
};

int run_embed(const EmbedArgs& args) {
  const DualEncoderModel model = DualEncoderModel::load(args.checkpoint);
  const std::vector<ManifestRecord> records =
      load_split(args.manifest, args.split);
  std::vector<Embedding> embeddings;
  if (args.modality == "speech") {
    const fs::path root = audio_root(args.manifest);
    for (const ManifestRecord& rec : records) {
      embeddings.push_back(model.encode_speech(
          log_mel(load_wav((root / rec.audio).string())), rec.audio));
    }
  } else {
    // One embedding per distinct normalized transcription, keyed by it.
    const UnigramVocab vocab = UnigramVocab::load(args.vocab);
    std::set<std::string> done;
    for (const ManifestRecord& rec : records) {
      const std::string text =
          normalize_ipa(ipa_table(), rec.ipa, rec.lang).to_utf8();
      if (!done.insert(text).second) continue;
      embeddings.push_back(
          model.encode_phonemes(wrap_tokens(vocab.encode(text)), text));
    }
  }
  save_store(build_store(embeddings), args.out);
  std::cout << "embedded " << embeddings.size() << " " << args.modality
            << " items -> " << args.out << "\n";
  return 0;
}

// --- index-build ---

struct IndexBuildArgs {
  std::string embeddings;
  std::string out;
};

int run_index_build(const IndexBuildArgs& args) {
  std::ifstream in(args.embeddings);
  if (!in) throw std::runtime_error("cannot open: " + args.embeddings);
  std::vector<Embedding> embeddings;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("id") ||
        !obj.contains("modality") || !obj.contains("vector")) {
      throw std::runtime_error(
          args.embeddings + ":" + std::to_string(line_no) +
          ": expected {\"id\", \"modality\", \"vector\"}");
    }
    Embedding e;
    e.id = obj["id"].get<std::string>();
    const std::string modality = obj["modality"].get<std::string>();
    if (modality == "speech") {
      e.modality = Modality::kSpeech;
    } else if (modality == "phoneme") {
      e.modality = Modality::kPhoneme;
    } else {
      throw std::runtime_error(args.embeddings + ":" +
                               std::to_string(line_no) +
                               ": modality must be speech or phoneme");
    }
    const std::vector<double> values =
        obj["vector"].get<std::vector<double>>();
    e.vector = Eigen::Map<const Eigen::VectorXd>(
        values.data(), static_cast<Eigen::Index>(values.size()));
    embeddings.push_back(std::move(e));
  }
  save_store(build_store(embeddings), args.out);
  std::cout << "indexed " << embeddings.size() << " embeddings -> " << args.out
            << "\n";
  return 0;
}

// --- retrieve ---

struct RetrieveArgs {
  std::string index;
  std::string queries;
  std::string out;
  int k = 10;
};

int run_retrieve(const RetrieveArgs& args) {
  const EmbeddingStore index = load_store(args.index);
  const EmbeddingStore queries = load_store(args.queries);
  std::ostringstream body;
  for (int i = 0; i < queries.size(); ++i) {
    Embedding q;
    q.id = queries.id(i);
    q.modality = queries.modality();
    q.vector = queries.matrix().row(i).transpose();
    const RetrievalResult result = search(index, q, args.k);
    for (size_t rank = 0; rank < result.ranked.size(); ++rank) {
      char line[512];
      std::snprintf(line, sizeof(line), "%s\t%zu\t%s\t%.10g\n", q.id.c_str(),
                    rank + 1, result.ranked[rank].id.c_str(),
                    result.ranked[rank].score);
      body << line;
    }
  }
  if (args.out.empty()) {
    std::cout << body.str();
  } else {
    write_text_atomic(args.out, body.str());
    std::cout << "ran " << queries.size() << " queries (top-" << args.k
              << ") -> " << args.out << "\n";
  }
  return 0;
}

// --- evaluate ---

struct EvaluateArgs {
  std::string checkpoint;
  std::string vocab;
  std::string manifest;
  std::string direction = "p2s";
  std::string split = "test";
  std::string pairs;
  std::string out;
};

int run_evaluate(const EvaluateArgs& args) {
  const DualEncoderModel model = DualEncoderModel::load(args.checkpoint);
  const UnigramVocab vocab = UnigramVocab::load(args.vocab);
  const fs::path root = audio_root(args.manifest);

  std::vector<EvalItem> items;
  for (const ManifestRecord& rec : load_split(args.manifest, args.split)) {
    EvalItem item;
    item.id = rec.audio;
    item.lang = rec.lang;
    item.transcription =
        normalize_ipa(ipa_table(), rec.ipa, rec.lang).to_utf8();
    item.speech =
        model.encode_speech(log_mel(load_wav((root / rec.audio).string())))
            .vector;
    item.phoneme =
        model.encode_phonemes(wrap_tokens(vocab.encode(item.transcription)))
            .vector;
    items.push_back(std::move(item));
  }

  EvalReport report;
  if (args.pairs.empty()) {
    report = evaluate_retrieval(items, parse_direction(args.direction));
  } else {
    std::ifstream in(args.pairs);
    if (!in) throw std::runtime_error("cannot open: " + args.pairs);
    std::vector<DetectionPair> pairs;
    std::string anchor, other;
    int match = 0;
    while (in >> anchor >> other >> match) {
      pairs.push_back({anchor, other, match != 0});
    }
    report = evaluate_detection(items, pairs);
  }
  if (!args.out.empty()) write_text_atomic(args.out, report.to_records());
  std::cout << report.to_table();
  return 0;
}

// --- mutate ---

struct MutateArgs {
  std::string mode = "minimal-pair";
  int seed = 0;
};

int run_mutate(const MutateArgs& args) {
  std::vector<PhonemeSequence> lines;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    lines.push_back(normalize_ipa(ipa_table(), line));
  }
  InventorySet inventories;
  for (const PhonemeSequence& seq : lines) inventories.observe(seq);
  std::mt19937 rng(static_cast<unsigned>(args.seed));
  for (const PhonemeSequence& seq : lines) {
    const PhonemeInventory& inv = inventories.for_language(seq.lang);
    const PhonemeSequence mutated = args.mode == "minimal-pair"
                                        ? minimal_pair(seq, inv, rng)
                                        : corrupt_sentence(seq, inv, rng);
    std::cout << mutated.to_utf8() << "\n";
  }
  return 0;
}

// --- xsampa2ipa ---

int run_xsampa2ipa() {
  const XsampaTable table =
      XsampaTable::load(default_data_dir() + "/xsampa_ipa.tsv");
  std::string line;
  while (std::getline(std::cin, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) {
      line.pop_back();
    }
    std::cout << table.to_ipa(line) << "\n";
  }
  return 0;
}

// --- synth ---

struct SynthArgs {
  std::string out;
  int seed = 0;
  SyntheticSpec spec;
};

int run_synth(const SynthArgs& args) {
  const SyntheticCorpus corpus = generate_synthetic_corpus(
      args.spec, static_cast<unsigned>(args.seed), args.out);
  std::cout << "synthesized " << corpus.records.size() << " clips: "
            << corpus.seen_words << " seen + "
            << corpus.words.size() - corpus.seen_words
            << " held-out words -> " << args.out << "\n";
  return 0;
}

// --- validate-manifest ---

struct ValidateArgs {
  std::string manifest;
  std::string data_root;
};

int run_validate_manifest(const ValidateArgs& args) {
  const std::string root = !args.data_root.empty()
                               ? args.data_root
                               : audio_root(args.manifest).string();
  const ManifestReport report =
      validate_manifest(args.manifest, ipa_table(), root);
  std::cout << report.to_text();
  return report.ok() ? 0 : 1;
}

// --- filter-manifest ---

struct FilterArgs {
  std::string manifest;
  std::string out;
  int min_freq = 10;
  int cap = 10;
  int seed = 0;
};

int run_filter_manifest(const FilterArgs& args) {
  const std::vector<ManifestRecord> records = load_manifest(args.manifest);
  const std::vector<ManifestRecord> kept = filter_manifest(
      records, args.min_freq, args.cap, static_cast<unsigned>(args.seed));
  save_manifest(kept, args.out);
  std::cout << "kept " << kept.size() << " of " << records.size()
            << " records -> " << args.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phoneme-to-speech retrieval toolkit"};
  app.require_subcommand(1);
  int rc = 0;

  TokenizerTrainArgs tok;
  auto* tok_cmd = app.add_subcommand(
      "tokenizer-train", "Fit a unigram piece vocabulary on transcriptions");
  tok_cmd->add_option("--manifest", tok.manifests, "manifest path (repeatable)")
      ->required();
  tok_cmd->add_option("--out", tok.out, "output vocab file")->required();
  tok_cmd->add_option("--split", tok.split, "split to read (default train)");
  tok_cmd->add_option("--vocab-size", tok.vocab_size, "target piece count");
  tok_cmd->callback([&] { rc = run_tokenizer_train(tok); });

  PretrainArgs pre;
  auto* pre_cmd = app.add_subcommand(
      "pretrain-mlm", "Masked-LM pretraining of the phoneme encoder");
  pre_cmd->add_option("--manifest", pre.manifest, "manifest path")->required();
  pre_cmd->add_option("--vocab", pre.vocab, "vocab file")->required();
  pre_cmd->add_option("--config", pre.config, "training config file");
  pre_cmd->add_option("--out", pre.out, "output directory")->required();
  pre_cmd->add_option("--preset", pre.preset, "encoder preset")
      ->check(CLI::IsMember({"tiny", "base", "small", "desk"}));
  pre_cmd->add_option("--seed", pre.seed, "seed override");
  pre_cmd->callback([&] { rc = run_pretrain_mlm(pre); });

  TrainArgs train;
  auto* train_cmd = app.add_subcommand(
      "train", "Contrastive training of both encoders");
  train_cmd
      ->add_option("--manifest", train.word_manifests,
                   "word-level manifest (repeatable)");
  train_cmd->add_option("--utterance-manifest", train.utterance_manifests,
                        "utterance-level manifest (repeatable)");
  train_cmd->add_option("--vocab", train.vocab, "vocab file")->required();
  train_cmd->add_option("--config", train.config, "training config file");
  train_cmd->add_option("--out", train.out, "output directory")->required();
  train_cmd->add_option("--init", train.init, "checkpoint to start from");
  train_cmd->add_option("--preset", train.preset, "encoder preset")
      ->check(CLI::IsMember({"tiny", "base", "small", "desk"}));
  train_cmd->add_option("--seed", train.seed, "seed override");
  train_cmd->callback([&] {
    if (train.word_manifests.empty() && train.utterance_manifests.empty()) {
      throw CLI::RequiredError("--manifest or --utterance-manifest");
    }
    rc = run_train(train);
  });

  EmbedArgs embed;
  auto* embed_cmd = app.add_subcommand(
      "embed", "Embed manifest items with a trained checkpoint");
  embed_cmd->add_option("--checkpoint", embed.checkpoint, "model checkpoint")
      ->required();
  embed_cmd->add_option("--vocab", embed.vocab,
                        "vocab file (phoneme modality)");
  embed_cmd->add_option("--manifest", embed.manifest, "manifest path")
      ->required();
  embed_cmd->add_option("--modality", embed.modality, "speech or phoneme")
      ->required()
      ->check(CLI::IsMember({"speech", "phoneme"}));
  embed_cmd->add_option("--split", embed.split,
                        "split to embed (default all)");
  embed_cmd->add_option("--out", embed.out, "output store file")->required();
  embed_cmd->callback([&] {
    if (embed.modality == "phoneme" && embed.vocab.empty()) {
      throw CLI::RequiredError("--vocab (required for --modality phoneme)");
    }
    rc = run_embed(embed);
  });

  IndexBuildArgs index;
  auto* index_cmd = app.add_subcommand(
      "index-build", "Build an embedding store from a JSON-lines dump");
  index_cmd
      ->add_option("--embeddings", index.embeddings,
                   "JSON lines with id/modality/vector")
      ->required();
  index_cmd->add_option("--out", index.out, "output store file")->required();
  index_cmd->callback([&] { rc = run_index_build(index); });

  RetrieveArgs retrieve;
  auto* retrieve_cmd = app.add_subcommand(
      "retrieve", "Rank index entries against each query embedding");
  retrieve_cmd->add_option("--index", retrieve.index, "candidate store")
      ->required();
  retrieve_cmd->add_option("--queries", retrieve.queries, "query store")
      ->required();
  retrieve_cmd->add_option("--k", retrieve.k, "results per query");
  retrieve_cmd->add_option("--out", retrieve.out,
                           "output file (default stdout)");
  retrieve_cmd->callback([&] { rc = run_retrieve(retrieve); });

  EvaluateArgs evaluate;
  auto* eval_cmd = app.add_subcommand(
      "evaluate", "Retrieval or detection metrics over a manifest split");
  eval_cmd->add_option("--checkpoint", evaluate.checkpoint, "model checkpoint")
      ->required();
  eval_cmd->add_option("--vocab", evaluate.vocab, "vocab file")->required();
  eval_cmd->add_option("--manifest", evaluate.manifest, "manifest path")
      ->required();
  eval_cmd->add_option("--direction", evaluate.direction, "p2s, s2p, or s2s")
      ->check(CLI::IsMember({"p2s", "s2p", "s2s"}));
  eval_cmd->add_option("--split", evaluate.split,
                       "split to evaluate (default test)");
  eval_cmd->add_option("--pairs", evaluate.pairs,
                       "detection pairs file: anchor other 0|1 per line");
  eval_cmd->add_option("--out", evaluate.out, "record file for the report");
  eval_cmd->callback([&] { rc = run_evaluate(evaluate); });

  MutateArgs mutate;
  auto* mutate_cmd = app.add_subcommand(
      "mutate", "Rewrite stdin transcriptions into hard negatives");
  mutate_cmd->add_option("--mode", mutate.mode, "minimal-pair or corrupt")
      ->check(CLI::IsMember({"minimal-pair", "corrupt"}));
  mutate_cmd->add_option("--seed", mutate.seed, "rng seed");
  mutate_cmd->callback([&] { rc = run_mutate(mutate); });

  auto* xsampa_cmd = app.add_subcommand(
      "xsampa2ipa", "Convert X-SAMPA lines on stdin to IPA");
  xsampa_cmd->callback([&] { rc = run_xsampa2ipa(); });

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand(
      "synth", "Generate the deterministic tonal corpus");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "rng seed");
  synth_cmd->add_option("--inventory", synth.spec.inventory_size,
                        "phoneme count (max 64)");
  synth_cmd->add_option("--words", synth.spec.word_count, "word form count");
  synth_cmd->add_option("--min-len", synth.spec.min_word_length,
                        "shortest word length");
  synth_cmd->add_option("--max-len", synth.spec.max_word_length,
                        "longest word length");
  synth_cmd->add_option("--speakers", synth.spec.speakers, "speaker count");
  synth_cmd->add_option("--unit-ms", synth.spec.unit_ms,
                        "per-phoneme duration");
  synth_cmd->add_option("--sample-rate", synth.spec.sample_rate,
                        "output sample rate");
  synth_cmd->callback([&] { rc = run_synth(synth); });

  ValidateArgs validate;
  auto* validate_cmd = app.add_subcommand(
      "validate-manifest", "Lint a manifest and print per-line issues");
  validate_cmd->add_option("--manifest", validate.manifest, "manifest path")
      ->required();
  validate_cmd->add_option("--data-root", validate.data_root,
                           "root for audio paths");
  validate_cmd->callback([&] { rc = run_validate_manifest(validate); });

  FilterArgs filter;
  auto* filter_cmd = app.add_subcommand(
      "filter-manifest", "Apply word-frequency curation to a manifest");
  filter_cmd->add_option("--manifest", filter.manifest, "manifest path")
      ->required();
  filter_cmd->add_option("--out", filter.out, "output manifest")->required();
  filter_cmd->add_option("--min-freq", filter.min_freq,
                         "minimum clips per word");
  filter_cmd->add_option("--cap", filter.cap, "maximum clips per word");
  filter_cmd->add_option("--seed", filter.seed, "down-sampling seed");
  filter_cmd->callback([&] { rc = run_filter_manifest(filter); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version exit 0, usage errors exit 2
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
