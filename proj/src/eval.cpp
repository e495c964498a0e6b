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

#include "phonokws/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>

namespace phonokws {

namespace {

void require_finite(const std::vector<double>& v, const char* side) {
  for (double s : v) {
    if (!std::isfinite(s)) {
      throw std::invalid_argument(std::string("non-finite score among ") +
                                  side);
    }
  }
}

// 1-based ranks with ties averaged over their run.
std::vector<double> midranks(const std::vector<double>& v) {
  const int n = static_cast<int>(v.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + j) / 2.0 + 1.0;
    for (int t = i; t <= j; ++t) ranks[order[t]] = mid;
    i = j + 1;
  }
  return ranks;
}

std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

double eer(const ScoredPairSet& pairs) {
  if (pairs.positives.empty()) throw EmptySide("eer: no positive scores");
  if (pairs.negatives.empty()) throw EmptySide("eer: no negative scores");
  require_finite(pairs.positives, "positives");
  require_finite(pairs.negatives, "negatives");

  std::vector<double> pos = pairs.positives;
  std::vector<double> neg = pairs.negatives;
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());

  // Accept when score >= threshold. far = fraction of negatives accepted,
  // frr = fraction of positives rejected; far - frr falls monotonically as
  // the threshold sweeps upward, so the first non-positive difference marks
  // the crossing.
  auto vertex = [&](double theta, double* far, double* frr) {
    const auto above =
        neg.end() - std::lower_bound(neg.begin(), neg.end(), theta);
    const auto below = std::lower_bound(pos.begin(), pos.end(), theta) -
                       pos.begin();
    *far = static_cast<double>(above) / nn;
    *frr = static_cast<double>(below) / np;
  };

  std::vector<double> thresholds(pos);
  thresholds.insert(thresholds.end(), neg.begin(), neg.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  // Sentinel above every score: accept nothing -> (far 0, frr 1).
  thresholds.push_back(thresholds.back() + 1.0);

  double far1 = 1.0, frr1 = 0.0;  // below every score: accept everything
  for (double theta : thresholds) {
    double far2, frr2;
    vertex(theta, &far2, &frr2);
    const double d1 = far1 - frr1;
    const double d2 = far2 - frr2;
    if (d2 <= 0.0) {
      if (d2 == 0.0) return (far2 + frr2) / 2.0;
      const double t = d1 / (d1 - d2);  // d1 > 0 here
      const double far_x = far1 + t * (far2 - far1);
      const double frr_x = frr1 + t * (frr2 - frr1);
      return (far_x + frr_x) / 2.0;
    }
    far1 = far2;
    frr1 = frr2;
  }
  return 0.0;  // unreachable: the sentinel vertex has d2 = -1
}

double auc(const ScoredPairSet& pairs) {
  if (pairs.positives.empty()) throw EmptySide("auc: no positive scores");
  if (pairs.negatives.empty()) throw EmptySide("auc: no negative scores");
  require_finite(pairs.positives, "positives");
  require_finite(pairs.negatives, "negatives");

  std::vector<double> all = pairs.positives;
  all.insert(all.end(), pairs.negatives.begin(), pairs.negatives.end());
  const std::vector<double> ranks = midranks(all);
  const double np = static_cast<double>(pairs.positives.size());
  const double nn = static_cast<double>(pairs.negatives.size());
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < pairs.positives.size(); ++i) {
    rank_sum += ranks[i];
  }
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double hit_at_k(const std::vector<RetrievalResult>& results,
                const RelevanceJudgment& rel, int k) {
  if (k < 1) throw std::invalid_argument("hit_at_k: k must be >= 1");
  if (results.empty()) throw std::invalid_argument("hit_at_k: no results");
  int hits = 0;
  for (const RetrievalResult& r : results) {
    auto it = rel.find(r.query_id);
    if (it == rel.end()) {
      throw MissingJudgment("no relevance set for query '" + r.query_id +
                            "'");
    }
    const int take = std::min<int>(k, static_cast<int>(r.ranked.size()));
    for (int i = 0; i < take; ++i) {
      if (it->second.count(r.ranked[i].id)) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

double mean_average_precision(const std::vector<RetrievalResult>& results,
                              const RelevanceJudgment& rel) {
  if (results.empty()) {
    throw std::invalid_argument("mean_average_precision: no results");
  }
  double total = 0.0;
  for (const RetrievalResult& r : results) {
    auto it = rel.find(r.query_id);
    if (it == rel.end() || it->second.empty()) {
      throw MissingJudgment("no relevance set for query '" + r.query_id +
                            "'");
    }
    int found = 0;
    double ap = 0.0;
    for (std::size_t rank = 0; rank < r.ranked.size(); ++rank) {
      if (it->second.count(r.ranked[rank].id)) {
        ++found;
        ap += static_cast<double>(found) / static_cast<double>(rank + 1);
      }
    }
    total += ap / static_cast<double>(it->second.size());
  }
  return total / static_cast<double>(results.size());
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw LengthMismatch("spearman: " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + " values");
  }
  if (x.size() < 3) {
    throw std::invalid_argument("spearman: need at least 3 points");
  }
  require_finite(x, "x");
  require_finite(y, "y");
  const std::vector<double> rx = midranks(x);
  const std::vector<double> ry = midranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    cov += (rx[i] - mx) * (ry[i] - my);
    vx += (rx[i] - mx) * (rx[i] - mx);
    vy += (ry[i] - my) * (ry[i] - my);
  }
  if (vx < 1e-12 || vy < 1e-12) {
    throw DegenerateConstantInput("spearman: constant input has no ranking");
  }
  return std::clamp(cov / std::sqrt(vx * vy), -1.0, 1.0);
}

std::string direction_name(Direction direction) {
  switch (direction) {
    case Direction::kPhonemeToSpeech:
      return "P->S";
    case Direction::kSpeechToPhoneme:
      return "S->P";
    case Direction::kSpeechToSpeech:
      return "S->S";
  }
  throw std::invalid_argument("unknown direction");
}

Direction parse_direction(const std::string& text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::tolower(c)));
  if (t == "p2s") return Direction::kPhonemeToSpeech;
  if (t == "s2p") return Direction::kSpeechToPhoneme;
  if (t == "s2s") return Direction::kSpeechToSpeech;
  throw std::invalid_argument("unknown direction '" + text +
                              "' (expected p2s, s2p, or s2s)");
}

namespace {

struct QueryRecord {
  Embedding embedding;
  std::string lang;
};

// Shared tail of evaluate_retrieval: run every query against the store,
// optionally drop the query itself from its ranking, then aggregate rows
// for the pooled set and for each language.
EvalReport aggregate(const EmbeddingStore& store,
                     const std::vector<QueryRecord>& queries,
                     const RelevanceJudgment& rel, Direction direction,
                     bool exclude_self) {
  std::vector<RetrievalResult> results;
  results.reserve(queries.size());
  for (const QueryRecord& q : queries) {
    RetrievalResult r = search(store, q.embedding, store.size());
    if (exclude_self) {
      std::erase_if(r.ranked, [&](const ScoredCandidate& c) {
        return c.id == r.query_id;
      });
    }
    results.push_back(std::move(r));
  }

  std::map<std::string, std::vector<int>> by_lang;  // ordered for stable rows
  for (std::size_t i = 0; i < queries.size(); ++i) {
    by_lang[queries[i].lang].push_back(static_cast<int>(i));
  }

  auto make_row = [&](const std::string& lang,
                      const std::vector<int>& subset) {
    EvalRow row;
    row.direction = direction_name(direction);
    row.lang = lang;
    row.n = static_cast<int>(subset.size());
    std::vector<RetrievalResult> picked;
    picked.reserve(subset.size());
    ScoredPairSet pool;
    for (int i : subset) {
      picked.push_back(results[i]);
      const auto& relevant = rel.at(results[i].query_id);
      for (const ScoredCandidate& c : picked.back().ranked) {
        (relevant.count(c.id) ? pool.positives : pool.negatives)
            .push_back(c.score);
      }
    }
    row.hit1 = hit_at_k(picked, rel, 1);
    row.map = mean_average_precision(picked, rel);
    if (!pool.positives.empty() && !pool.negatives.empty()) {
      row.eer = eer(pool);
      row.auc = auc(pool);
    }
    return row;
  };

  EvalReport report;
  std::vector<int> everyone(queries.size());
  std::iota(everyone.begin(), everyone.end(), 0);
  report.rows.push_back(make_row("all", everyone));
  if (by_lang.size() > 1) {
    for (const auto& [lang, subset] : by_lang) {
      report.rows.push_back(make_row(lang, subset));
    }
  }
  return report;
}

}  // namespace

EvalReport evaluate_retrieval(const std::vector<EvalItem>& items,
                              Direction direction) {
  if (items.empty()) {
    throw std::invalid_argument("evaluate_retrieval: no items");
  }
  for (const EvalItem& item : items) {
    if (item.transcription.empty()) {
      throw std::invalid_argument("evaluate_retrieval: item '" + item.id +
                                  "' has an empty transcription");
    }
  }

  // Distinct transcriptions in first-appearance order.
  std::vector<int> first_of;  // index of first item per transcription
  std::unordered_map<std::string, std::vector<std::string>> members;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto [it, fresh] = members.try_emplace(items[i].transcription);
    if (fresh) first_of.push_back(static_cast<int>(i));
    it->second.push_back(items[i].id);
  }

  std::vector<Embedding> candidates;
  std::vector<QueryRecord> queries;
  RelevanceJudgment rel;

  switch (direction) {
    case Direction::kPhonemeToSpeech: {
      for (const EvalItem& item : items) {
        candidates.push_back({item.speech, item.id, Modality::kSpeech});
      }
      for (int i : first_of) {
        const EvalItem& item = items[i];
        queries.push_back({{item.phoneme, item.transcription,
                            Modality::kPhoneme},
                           item.lang});
        const auto& ids = members.at(item.transcription);
        rel[item.transcription] = {ids.begin(), ids.end()};
      }
      break;
    }
    case Direction::kSpeechToPhoneme: {
      for (int i : first_of) {
        const EvalItem& item = items[i];
        candidates.push_back(
            {item.phoneme, item.transcription, Modality::kPhoneme});
      }
      for (const EvalItem& item : items) {
        queries.push_back({{item.speech, item.id, Modality::kSpeech},
                           item.lang});
        rel[item.id] = {item.transcription};
      }
      break;
    }
    case Direction::kSpeechToSpeech: {
      for (const EvalItem& item : items) {
        candidates.push_back({item.speech, item.id, Modality::kSpeech});
      }
      for (const EvalItem& item : items) {
        const auto& ids = members.at(item.transcription);
        if (ids.size() < 2) continue;  // no positive besides the query
        queries.push_back({{item.speech, item.id, Modality::kSpeech},
                           item.lang});
        auto& set = rel[item.id];
        for (const std::string& id : ids) {
          if (id != item.id) set.insert(id);
        }
      }
      if (queries.empty()) {
        throw InsufficientPositives(
            "speech-to-speech needs a transcription with at least 2 clips");
      }
      break;
    }
  }

  const EmbeddingStore store = build_store(candidates);
  return aggregate(store, queries, rel, direction,
                   direction == Direction::kSpeechToSpeech);
}

EvalReport evaluate_detection(const std::vector<EvalItem>& items,
                              const std::vector<DetectionPair>& pairs) {
  if (pairs.empty()) {
    throw std::invalid_argument("evaluate_detection: no pairs");
  }
  std::unordered_map<std::string, const EvalItem*> by_id;
  for (const EvalItem& item : items) {
    if (!by_id.emplace(item.id, &item).second) {
      throw DuplicateId("evaluate_detection: duplicate item id '" + item.id +
                        "'");
    }
  }
  auto unit = [](const Eigen::VectorXd& v, const std::string& id) {
    const double n = v.norm();
    if (n < 1e-12) {
      throw std::invalid_argument("zero-norm embedding for item '" + id +
                                  "'");
    }
    return Eigen::VectorXd(v / n);
  };

  EvalReport report;
  for (Direction direction :
       {Direction::kPhonemeToSpeech, Direction::kSpeechToPhoneme,
        Direction::kSpeechToSpeech}) {
    ScoredPairSet pool;
    for (const DetectionPair& pair : pairs) {
      auto a = by_id.find(pair.anchor);
      auto b = by_id.find(pair.other);
      if (a == by_id.end() || b == by_id.end()) {
        throw std::invalid_argument(
            "evaluate_detection: pair references unknown item '" +
            (a == by_id.end() ? pair.anchor : pair.other) + "'");
      }
      const EvalItem& ia = *a->second;
      const EvalItem& ib = *b->second;
      const Eigen::VectorXd u =
          direction == Direction::kPhonemeToSpeech
              ? unit(ia.phoneme, ia.id)
              : unit(ia.speech, ia.id);
      const Eigen::VectorXd v =
          direction == Direction::kSpeechToPhoneme
              ? unit(ib.phoneme, ib.id)
              : unit(ib.speech, ib.id);
      const double score = std::clamp(u.dot(v), -1.0, 1.0);
      (pair.match ? pool.positives : pool.negatives).push_back(score);
    }
    EvalRow row;
    row.direction = direction_name(direction);
    row.lang = "all";
    row.n = static_cast<int>(pairs.size());
    row.eer = eer(pool);
    row.auc = auc(pool);
    report.rows.push_back(row);
  }
  return report;
}

std::string EvalReport::to_table() const {
  auto cell = [](double v) {
    if (std::isnan(v)) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  std::string out =
      "direction  lang      hit@1    mAP      EER      AUC      n\n";
  for (const EvalRow& row : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %-8s %-8s %-8s %-8s %-8s %d\n",
                  row.direction.c_str(), row.lang.c_str(),
                  cell(row.hit1).c_str(), cell(row.map).c_str(),
                  cell(row.eer).c_str(), cell(row.auc).c_str(), row.n);
    out += line;
  }
  return out;
}

std::string EvalReport::to_records() const {
  std::string out;
  for (const EvalRow& row : rows) {
    out += "direction=" + row.direction + " lang=" + row.lang +
           " hit1=" + format_metric(row.hit1) + " map=" +
           format_metric(row.map) + " eer=" + format_metric(row.eer) +
           " auc=" + format_metric(row.auc) + " n=" + std::to_string(row.n) +
           "\n";
  }
  return out;
}

}  // namespace phonokws
