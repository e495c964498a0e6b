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

#ifndef PHONOKWS_TOKENIZER_HPP_
#define PHONOKWS_TOKENIZER_HPP_

#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "phonokws/error.hpp"

namespace phonokws {

PHONOKWS_DEFINE_ERROR(CorpusEmpty);
PHONOKWS_DEFINE_ERROR(TargetVocabTooSmall);
PHONOKWS_DEFINE_ERROR(InvalidTokenId);
PHONOKWS_DEFINE_ERROR(VocabFormatError);

// Token ids plus a validity mask (1 = real token, 0 = padding). Padding is
// only ever a suffix.
struct TokenSequence {
  std::vector<int> ids;
  std::vector<int> mask;
};

// Unigram-LM subword vocabulary. Id layout is fixed:
//   0..4    specials  <pad> <unk> <mask> <s> </s>
//   5..260  byte-fallback tokens <0x00>..<0xFF>
//   261..   trained pieces, log-probabilities from EM
class UnigramVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMask = 2;
  static constexpr int kBos = 3;
  static constexpr int kEos = 4;
  static constexpr int kByteBase = 5;
  static constexpr int kPieceBase = kByteBase + 256;
  static constexpr double kByteLogProb = -20.0;  // per fallback byte

  // Trains with the unigram algorithm: seed substrings (length <= 8
  // codepoints, frequency >= 2, capped at seed_multiplier * target_vocab by
  // frequency), EM over all segmentations, then likelihood-loss pruning of
  // prune_fraction of the prunable pieces per round until the vocabulary
  // fits target_vocab. Single characters are never pruned, so every corpus
  // character stays encodable without fallback. Specials and byte tokens
  // count against target_vocab.
  static UnigramVocab train(const std::vector<std::string>& corpus,
                            int target_vocab = 500, int seed_multiplier = 10,
                            double prune_fraction = 0.2);

  // Builds a vocabulary with explicit pieces, mainly for tests and tools.
  static UnigramVocab from_pieces(
      const std::vector<std::pair<std::string, double>>& pieces);

  // Maximum-log-probability segmentation (Viterbi over the piece lattice).
  // Characters no piece covers emit byte-fallback tokens at kByteLogProb
  // per byte. Ties (scores within 1e-9) resolve to fewer tokens, then to
  // the lexicographically smaller piece at the earliest divergence.
  TokenSequence encode(std::string_view text) const;

  // Concatenates piece strings; byte tokens contribute their raw byte
  // (consecutive runs thereby reassemble into UTF-8); specials are dropped.
  std::string decode(const std::vector<int>& ids) const;
  std::string decode(const TokenSequence& tokens) const;

  int size() const { return kPieceBase + static_cast<int>(pieces_.size()); }
  int piece_count() const { return static_cast<int>(pieces_.size()); }
  // Printable form of any id: "<pad>", "<0x41>", or the piece itself.
  std::string piece(int id) const;
  double log_prob(int id) const;
  // Id of a trained piece, or -1 when absent.
  int find_piece(std::string_view piece) const;

  // One token per line, "<piece>\t<logprob>", in id order, behind a short
  // header. Reload is bit-exact (%.17g round-trips doubles).
  void save(const std::string& path) const;
  static UnigramVocab load(const std::string& path);

 private:
  std::vector<std::string> pieces_;    // index = id - kPieceBase
  std::vector<double> log_probs_;      // parallel to pieces_
  std::unordered_map<std::string, int> piece_ids_;

  void rebuild_index();
};

inline UnigramVocab train_unigram(const std::vector<std::string>& corpus,
                                  int target_vocab = 500,
                                  int seed_multiplier = 10,
                                  double prune_fraction = 0.2) {
  return UnigramVocab::train(corpus, target_vocab, seed_multiplier,
                             prune_fraction);
}

}  // namespace phonokws

#endif  // PHONOKWS_TOKENIZER_HPP_
