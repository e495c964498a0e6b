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

#include "phonokws/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "phonokws/utf8.hpp"

namespace phonokws {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kMaxPieceLen = 8;       // codepoints
constexpr double kScoreTie = 1e-9;    // Viterbi tie tolerance

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

std::string special_name(int id) {
  switch (id) {
    case UnigramVocab::kPad: return "<pad>";
    case UnigramVocab::kUnk: return "<unk>";
    case UnigramVocab::kMask: return "<mask>";
    case UnigramVocab::kBos: return "<s>";
    case UnigramVocab::kEos: return "</s>";
  }
  return "";
}

std::string byte_name(int byte) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "<0x%02X>", byte);
  return buf;
}

std::string format_log_prob(double lp) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", lp);
  return buf;
}

// --- Unigram training ------------------------------------------------------
//
// The trainer works over codepoint strings. Model probabilities are a
// multinomial over pieces; a string's likelihood sums over all lattice
// segmentations, and EM re-estimates piece probabilities from expected
// piece counts (forward-backward over the lattice).

struct TrainState {
  std::vector<std::u32string> pieces;
  std::vector<double> log_probs;
  std::vector<bool> prunable;  // multi-codepoint pieces only
  std::map<std::u32string, int> index;

  std::vector<std::u32string> strings;  // distinct corpus strings
  std::vector<double> counts;           // multiplicity of each string

  // Lattice edges per string: (start, end, piece index), rebuilt after the
  // piece set changes.
  struct Edge {
    int start, end, piece;
  };
  std::vector<std::vector<Edge>> edges;

  void rebuild_edges() {
    edges.assign(strings.size(), {});
    for (std::size_t s = 0; s < strings.size(); ++s) {
      const auto& str = strings[s];
      const int n = static_cast<int>(str.size());
      for (int end = 1; end <= n; ++end) {
        for (int len = 1; len <= std::min(kMaxPieceLen, end); ++len) {
          auto it = index.find(str.substr(end - len, len));
          if (it != index.end()) {
            edges[s].push_back({end - len, end, it->second});
          }
        }
      }
    }
  }

  // Log-likelihood of one string, optionally with one piece removed and the
  // remaining mass renormalized by log_renorm = -log(1 - p_removed).
  double forward(std::size_t s, int skip_piece, double log_renorm) const {
    const int n = static_cast<int>(strings[s].size());
    std::vector<double> alpha(n + 1, kNegInf);
    alpha[0] = 0.0;
    for (const Edge& e : edges[s]) {
      if (e.piece == skip_piece) continue;
      alpha[e.end] = log_sum_exp(
          alpha[e.end], alpha[e.start] + log_probs[e.piece] + log_renorm);
    }
    return alpha[n];
  }

  double corpus_log_likelihood(int skip_piece = -1,
                               double log_renorm = 0.0) const {
    double ll = 0.0;
    for (std::size_t s = 0; s < strings.size(); ++s) {
      ll += counts[s] * forward(s, skip_piece, log_renorm);
    }
    return ll;
  }

  // One E+M pass; returns the log-likelihood under the *incoming*
  // probabilities.
  double em_step() {
    std::vector<double> expected(pieces.size(), 0.0);
    double ll = 0.0;
    for (std::size_t s = 0; s < strings.size(); ++s) {
      const auto& str = strings[s];
      const int n = static_cast<int>(str.size());
      std::vector<double> alpha(n + 1, kNegInf), beta(n + 1, kNegInf);
      alpha[0] = 0.0;
      for (const Edge& e : edges[s]) {
        alpha[e.end] =
            log_sum_exp(alpha[e.end], alpha[e.start] + log_probs[e.piece]);
      }
      beta[n] = 0.0;
      for (auto it = edges[s].rbegin(); it != edges[s].rend(); ++it) {
        beta[it->start] = log_sum_exp(
            beta[it->start], beta[it->end] + log_probs[it->piece]);
      }
      const double z = alpha[n];
      ll += counts[s] * z;
      for (const Edge& e : edges[s]) {
        expected[e.piece] +=
            counts[s] *
            std::exp(alpha[e.start] + log_probs[e.piece] + beta[e.end] - z);
      }
    }
    // Tiny floor keeps mandatory singles alive: without it, expected
    // counts of fully-absorbed characters underflow to zero and the next
    // E-step degenerates. The perturbation is far below the monotonicity
    // tolerance.
    constexpr double kEmFloor = 1e-12;
    double total = 0.0;
    for (double& c : expected) {
      c = std::max(c, kEmFloor);
      total += c;
    }
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      log_probs[i] = std::log(expected[i] / total);
    }
    return ll;
  }

  // Runs EM and asserts the log-likelihood never decreases across
  // iterations.
  void run_em(int iterations) {
    double prev = kNegInf;
    for (int it = 0; it < iterations; ++it) {
      const double ll = em_step();
      if (prev != kNegInf && ll + 1e-6 + 1e-9 * std::abs(ll) < prev) {
        throw Error("unigram EM log-likelihood decreased: " +
                    std::to_string(prev) + " -> " + std::to_string(ll));
      }
      prev = ll;
    }
    // Evaluate the last M-step too.
    const double final_ll = corpus_log_likelihood();
    if (final_ll + 1e-6 + 1e-9 * std::abs(final_ll) < prev) {
      throw Error("unigram EM log-likelihood decreased after final update");
    }
  }

  void remove_pieces(const std::vector<char>& drop) {
    std::vector<std::u32string> keep_p;
    std::vector<double> keep_lp;
    std::vector<bool> keep_pr;
    double mass = 0.0;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      if (!drop[i]) mass += std::exp(log_probs[i]);
    }
    const double log_mass = std::log(mass);
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      if (drop[i]) continue;
      keep_p.push_back(pieces[i]);
      keep_lp.push_back(log_probs[i] - log_mass);
      keep_pr.push_back(prunable[i]);
    }
    pieces = std::move(keep_p);
    log_probs = std::move(keep_lp);
    prunable = std::move(keep_pr);
    index.clear();
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      index[pieces[i]] = static_cast<int>(i);
    }
    rebuild_edges();
  }
};

}  // namespace

UnigramVocab UnigramVocab::train(const std::vector<std::string>& corpus,
                                 int target_vocab, int seed_multiplier,
                                 double prune_fraction) {
  TrainState st;
  std::map<std::u32string, double> string_counts;
  for (const auto& s : corpus) {
    if (s.empty()) continue;
    string_counts[utf8_decode(s)] += 1.0;
  }
  if (string_counts.empty()) {
    throw CorpusEmpty("unigram training corpus has no non-empty strings");
  }
  for (auto& [s, c] : string_counts) {
    st.strings.push_back(s);
    st.counts.push_back(c);
  }

  // Substring candidates: all lengths <= 8 codepoints. Single characters
  // are mandatory (coverage); longer substrings need frequency >= 2 and
  // compete for the capped seed budget by frequency.
  std::map<std::u32string, double> freq;
  for (std::size_t s = 0; s < st.strings.size(); ++s) {
    const auto& str = st.strings[s];
    const int n = static_cast<int>(str.size());
    for (int start = 0; start < n; ++start) {
      for (int len = 1; len <= std::min(kMaxPieceLen, n - start); ++len) {
        freq[str.substr(start, len)] += st.counts[s];
      }
    }
  }
  std::vector<std::pair<std::u32string, double>> singles, multis;
  for (const auto& [piece, f] : freq) {
    if (piece.size() == 1) {
      singles.emplace_back(piece, f);
    } else if (f >= 2.0) {
      multis.emplace_back(piece, f);
    }
  }

  const int reserved = kPieceBase;  // specials + byte tokens
  if (target_vocab < reserved + static_cast<int>(singles.size())) {
    throw TargetVocabTooSmall(
        "target vocabulary " + std::to_string(target_vocab) +
        " cannot cover " + std::to_string(singles.size()) +
        " distinct characters plus " + std::to_string(reserved) +
        " reserved tokens");
  }

  // Cap the seed set: frequency-descending, piece string breaking ties.
  std::sort(multis.begin(), multis.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const std::size_t seed_cap = static_cast<std::size_t>(seed_multiplier) *
                               static_cast<std::size_t>(target_vocab);
  const std::size_t multi_cap =
      seed_cap > singles.size() ? seed_cap - singles.size() : 0;
  if (multis.size() > multi_cap) multis.resize(multi_cap);

  double total_freq = 0.0;
  for (const auto& [p, f] : singles) total_freq += f;
  for (const auto& [p, f] : multis) total_freq += f;
  auto add_piece = [&](const std::u32string& p, double f, bool prunable) {
    st.index[p] = static_cast<int>(st.pieces.size());
    st.pieces.push_back(p);
    st.log_probs.push_back(std::log(f / total_freq));
    st.prunable.push_back(prunable);
  };
  for (const auto& [p, f] : singles) add_piece(p, f, false);
  for (const auto& [p, f] : multis) add_piece(p, f, true);
  st.rebuild_edges();

  const int piece_budget = target_vocab - reserved;
  st.run_em(2);
  while (static_cast<int>(st.pieces.size()) > piece_budget) {
    // Exact likelihood loss of dropping each prunable piece, with the
    // remaining probability mass renormalized.
    const double base_ll = st.corpus_log_likelihood();
    std::vector<std::pair<double, int>> losses;  // (loss, piece index)
    for (std::size_t i = 0; i < st.pieces.size(); ++i) {
      if (!st.prunable[i]) continue;
      // Remaining mass summed directly: 1 - p_i cancels catastrophically
      // when one piece holds nearly all the probability.
      double log_mass = kNegInf;
      for (std::size_t j = 0; j < st.pieces.size(); ++j) {
        if (j != i) log_mass = log_sum_exp(log_mass, st.log_probs[j]);
      }
      const double without =
          st.corpus_log_likelihood(static_cast<int>(i), -log_mass);
      losses.emplace_back(base_ll - without, static_cast<int>(i));
    }
    if (losses.empty()) break;  // nothing prunable; budget check was done
    std::sort(losses.begin(), losses.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return st.pieces[a.second] < st.pieces[b.second];
    });
    const int excess = static_cast<int>(st.pieces.size()) - piece_budget;
    const int per_round = std::max(
        1, static_cast<int>(prune_fraction * losses.size()));
    const int n_drop = std::min({excess, per_round,
                                 static_cast<int>(losses.size())});
    std::vector<char> drop(st.pieces.size(), 0);
    for (int i = 0; i < n_drop; ++i) drop[losses[i].second] = 1;
    st.remove_pieces(drop);
    st.run_em(2);
  }

  // Final pieces in deterministic (lexicographic) order.
  std::vector<std::pair<std::string, double>> final_pieces;
  for (std::size_t i = 0; i < st.pieces.size(); ++i) {
    final_pieces.emplace_back(utf8_encode(st.pieces[i]), st.log_probs[i]);
  }
  std::sort(final_pieces.begin(), final_pieces.end());
  return from_pieces(final_pieces);
}

UnigramVocab UnigramVocab::from_pieces(
    const std::vector<std::pair<std::string, double>>& pieces) {
  UnigramVocab v;
  for (const auto& [piece, lp] : pieces) {
    if (piece.empty()) throw VocabFormatError("empty piece string");
    if (!(lp <= 0.0) || !std::isfinite(lp)) {
      throw VocabFormatError("piece '" + piece +
                             "' has non-finite or positive log-probability");
    }
    v.pieces_.push_back(piece);
    v.log_probs_.push_back(lp);
  }
  v.rebuild_index();
  return v;
}

void UnigramVocab::rebuild_index() {
  piece_ids_.clear();
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    const int id = kPieceBase + static_cast<int>(i);
    if (!piece_ids_.emplace(pieces_[i], id).second) {
      throw VocabFormatError("duplicate piece '" + pieces_[i] + "'");
    }
  }
}

std::string UnigramVocab::piece(int id) const {
  if (id < 0 || id >= size()) {
    throw InvalidTokenId("token id " + std::to_string(id) +
                         " outside vocabulary of " + std::to_string(size()));
  }
  if (id < kByteBase) return special_name(id);
  if (id < kPieceBase) return byte_name(id - kByteBase);
  return pieces_[id - kPieceBase];
}

double UnigramVocab::log_prob(int id) const {
  if (id < 0 || id >= size()) {
    throw InvalidTokenId("token id " + std::to_string(id) +
                         " outside vocabulary of " + std::to_string(size()));
  }
  if (id < kByteBase) return 0.0;
  if (id < kPieceBase) return kByteLogProb;
  return log_probs_[id - kPieceBase];
}

int UnigramVocab::find_piece(std::string_view piece) const {
  auto it = piece_ids_.find(std::string(piece));
  return it == piece_ids_.end() ? -1 : it->second;
}

TokenSequence UnigramVocab::encode(std::string_view text) const {
  const std::u32string s = utf8_decode(text);
  const int n = static_cast<int>(s.size());

  struct State {
    double score = kNegInf;
    std::vector<int> ids;
  };
  std::vector<State> best(n + 1);
  best[0].score = 0.0;

  // Candidate beats incumbent on score, then on fewer tokens, then on the
  // lexicographically smaller printable sequence at the earliest divergence.
  auto better = [this](double score, const std::vector<int>& ids,
                       const State& inc) {
    if (score > inc.score + kScoreTie) return true;
    if (score < inc.score - kScoreTie) return false;
    if (ids.size() != inc.ids.size()) return ids.size() < inc.ids.size();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] != inc.ids[i]) return piece(ids[i]) < piece(inc.ids[i]);
    }
    return false;
  };

  std::vector<int> cand;
  for (int end = 1; end <= n; ++end) {
    for (int len = 1; len <= std::min(kMaxPieceLen, end); ++len) {
      if (best[end - len].score == kNegInf) continue;
      const int id = find_piece(utf8_encode(s.substr(end - len, len)));
      if (id < 0) continue;
      const double score = best[end - len].score + log_probs_[id - kPieceBase];
      cand = best[end - len].ids;
      cand.push_back(id);
      if (better(score, cand, best[end])) {
        best[end].score = score;
        best[end].ids = std::move(cand);
        cand = {};
      }
    }
    // Byte fallback for the single character ending here.
    if (best[end - 1].score != kNegInf) {
      const std::string bytes = utf8_encode(s[end - 1]);
      const double score =
          best[end - 1].score + kByteLogProb * static_cast<double>(bytes.size());
      cand = best[end - 1].ids;
      for (unsigned char b : bytes) cand.push_back(kByteBase + b);
      if (better(score, cand, best[end])) {
        best[end].score = score;
        best[end].ids = std::move(cand);
        cand = {};
      }
    }
  }

  TokenSequence out;
  out.ids = best[n].ids;
  out.mask.assign(out.ids.size(), 1);
  return out;
}

std::string UnigramVocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= size()) {
      throw InvalidTokenId("token id " + std::to_string(id) +
                           " outside vocabulary of " + std::to_string(size()));
    }
    if (id < kByteBase) continue;  // specials dropped
    if (id < kPieceBase) {
      out.push_back(static_cast<char>(id - kByteBase));
    } else {
      out += pieces_[id - kPieceBase];
    }
  }
  return out;
}

std::string UnigramVocab::decode(const TokenSequence& tokens) const {
  return decode(tokens.ids);
}

void UnigramVocab::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw VocabFormatError("cannot write vocab file: " + tmp);
    out << "#phonokws unigram vocab v1\n";
    out << "#tokens\t" << size() << "\n";
    out << "#byte_fallback\t1\n";
    for (int id = 0; id < size(); ++id) {
      out << piece(id) << "\t" << format_log_prob(log_prob(id)) << "\n";
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw VocabFormatError("cannot move vocab file into place: " + path);
  }
}

UnigramVocab UnigramVocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw VocabFormatError("cannot open vocab file: " + path);
  std::string line;
  std::vector<std::pair<std::string, double>> pieces;
  int id = 0;
  int declared = -1;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("#tokens\t", 0) == 0) {
        declared = std::stoi(line.substr(8));
      }
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw VocabFormatError(path + ":" + std::to_string(lineno) +
                             ": expected <piece>\\t<logprob>");
    }
    const std::string piece = line.substr(0, tab);
    const double lp = std::strtod(line.c_str() + tab + 1, nullptr);
    if (id < kByteBase) {
      if (piece != special_name(id)) {
        throw VocabFormatError(path + ":" + std::to_string(lineno) +
                               ": expected special token " + special_name(id));
      }
    } else if (id < kPieceBase) {
      if (piece != byte_name(id - kByteBase)) {
        throw VocabFormatError(path + ":" + std::to_string(lineno) +
                               ": expected byte token " +
                               byte_name(id - kByteBase));
      }
    } else {
      pieces.emplace_back(piece, lp);
    }
    ++id;
  }
  if (id < kPieceBase) {
    throw VocabFormatError(path + ": truncated vocab file");
  }
  if (declared >= 0 && declared != id) {
    throw VocabFormatError(path + ": token count mismatch: header says " +
                           std::to_string(declared) + ", found " +
                           std::to_string(id));
  }
  return from_pieces(pieces);
}

}  // namespace phonokws
