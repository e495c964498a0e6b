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

#ifndef PHONOKWS_EVAL_HPP_
#define PHONOKWS_EVAL_HPP_

#include <limits>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "phonokws/error.hpp"
#include "phonokws/retrieval.hpp"

namespace phonokws {

PHONOKWS_DEFINE_ERROR(EmptySide);
PHONOKWS_DEFINE_ERROR(MissingJudgment);
PHONOKWS_DEFINE_ERROR(LengthMismatch);
PHONOKWS_DEFINE_ERROR(DegenerateConstantInput);
PHONOKWS_DEFINE_ERROR(InsufficientPositives);

// Similarity scores split by ground truth for pairwise detection metrics.
struct ScoredPairSet {
  std::vector<double> positives;
  std::vector<double> negatives;
};

// Rate at the ROC point where the false-accept rate equals the false-reject
// rate. Sweeps every distinct score plus sentinels below and above all of
// them (accept when score >= threshold) and interpolates linearly between
// the two straddling ROC vertices. Both sides must be non-empty and finite.
double eer(const ScoredPairSet& pairs);

// Rank statistic: mean over all (positive, negative) pairs of
// [pos > neg] + 0.5 [pos == neg], computed from mid-ranks in
// O((P+N) log(P+N)). Equals the trapezoidal ROC area.
double auc(const ScoredPairSet& pairs);

// Query id -> ids of relevant candidates (all present in the search pool).
using RelevanceJudgment =
    std::unordered_map<std::string, std::unordered_set<std::string>>;

// Fraction of queries whose top-k contains at least one relevant candidate.
double hit_at_k(const std::vector<RetrievalResult>& results,
                const RelevanceJudgment& rel, int k = 1);

// Mean over queries of (1/R) sum over relevant hits of precision@rank,
// where R counts all relevant candidates in the pool, so truncated result
// lists are penalized for the items they dropped.
double mean_average_precision(const std::vector<RetrievalResult>& results,
                              const RelevanceJudgment& rel);

// Pearson correlation of mid-rank ties. Lengths must match and be >= 3;
// a constant input has no ranking and is rejected.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

enum class Direction { kPhonemeToSpeech, kSpeechToPhoneme, kSpeechToSpeech };

std::string direction_name(Direction direction);  // "P->S", "S->P", "S->S"
// Accepts p2s / s2p / s2s (case-insensitive); std::invalid_argument else.
Direction parse_direction(const std::string& text);

// One evaluation example carrying both modalities. The transcription is the
// normalized phoneme string; exact equality of transcriptions defines
// relevance.
struct EvalItem {
  std::string id;
  std::string lang = "und";
  std::string transcription;
  Eigen::VectorXd speech;
  Eigen::VectorXd phoneme;
};

// One metrics row; NaN marks a field the protocol does not define for the
// row (e.g. hit1/map for pairwise detection).
struct EvalRow {
  std::string direction;
  std::string lang;  // "all" for the pooled row
  double hit1 = std::numeric_limits<double>::quiet_NaN();
  double map = std::numeric_limits<double>::quiet_NaN();
  double eer = std::numeric_limits<double>::quiet_NaN();
  double auc = std::numeric_limits<double>::quiet_NaN();
  int n = 0;  // queries for retrieval rows, pairs for detection rows
};

struct EvalReport {
  std::vector<EvalRow> rows;  // pooled "all" row first, then languages

  std::string to_table() const;  // aligned human-readable table
  // One line per row: "direction=P->S lang=all hit1=... map=... eer=...
  // auc=... n=...". Undefined metrics print as nan.
  std::string to_records() const;
};

// Pool = every item. Directions: P->S queries one phoneme embedding per
// distinct transcription against all speech; S->P queries each clip against
// one phoneme embedding per distinct transcription; S->S queries each clip
// whose transcription occurs at least twice against all other clips (self
// excluded). Per-language rows partition the queries by language. EER/AUC
// come from the same rankings with relevant candidates as positives;
// NaN when a subset has no negatives (or no positives).
// Throws InsufficientPositives when S->S has no query with a second clip.
EvalReport evaluate_retrieval(const std::vector<EvalItem>& items,
                              Direction direction);

// Labeled cross-modal comparison.
struct DetectionPair {
  std::string anchor;  // item id; P->S scores phoneme(anchor) . speech(other)
  std::string other;
  bool match = false;
};

// EER/AUC per direction over the given pairs; hit1/map stay NaN.
EvalReport evaluate_detection(const std::vector<EvalItem>& items,
                              const std::vector<DetectionPair>& pairs);

}  // namespace phonokws

#endif  // PHONOKWS_EVAL_HPP_
