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
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "phonokws/eval.hpp"

namespace phonokws {
namespace {

// Independent ROC-polyline oracle. Vertices in (fpr, tpr) space from a
// descending sweep over distinct scores; AUC by the trapezoid rule, EER from
// the intersection of the polyline with tpr = 1 - fpr. A different
// construction from the production threshold sweep on (far, frr).
struct RocOracle {
  double auc = 0.0;
  double eer = 0.0;
};

RocOracle roc_oracle(const ScoredPairSet& pairs) {
  std::vector<double> scores;
  scores.insert(scores.end(), pairs.positives.begin(),
                pairs.positives.end());
  scores.insert(scores.end(), pairs.negatives.begin(),
                pairs.negatives.end());
  std::sort(scores.begin(), scores.end(), std::greater<>());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());

  const double np = static_cast<double>(pairs.positives.size());
  const double nn = static_cast<double>(pairs.negatives.size());
  std::vector<std::pair<double, double>> vertices{{0.0, 0.0}};
  double tp = 0.0, fp = 0.0;
  for (double s : scores) {
    tp += std::count(pairs.positives.begin(), pairs.positives.end(), s);
    fp += std::count(pairs.negatives.begin(), pairs.negatives.end(), s);
    vertices.emplace_back(fp / nn, tp / np);
  }

  RocOracle out;
  for (std::size_t i = 1; i < vertices.size(); ++i) {
    const auto [f1, t1] = vertices[i - 1];
    const auto [f2, t2] = vertices[i];
    out.auc += 0.5 * (t1 + t2) * (f2 - f1);
  }
  for (std::size_t i = 1; i < vertices.size(); ++i) {
    const auto [f1, t1] = vertices[i - 1];
    const auto [f2, t2] = vertices[i];
    // g = tpr + fpr - 1 rises monotonically along the polyline.
    const double g1 = t1 + f1 - 1.0;
    const double g2 = t2 + f2 - 1.0;
    if (g2 < 0.0) continue;
    if (g1 > 0.0) break;
    const double denom = (t2 - t1) + (f2 - f1);
    const double t = denom == 0.0 ? 0.0 : -g1 / denom;
    out.eer = f1 + t * (f2 - f1);
    break;
  }
  return out;
}

ScoredPairSet random_pairs(std::mt19937& rng, bool gridded) {
  std::uniform_int_distribution<int> count(1, 30);
  std::uniform_real_distribution<double> value(-1.0, 1.0);
  ScoredPairSet pairs;
  const int np = count(rng), nn = count(rng);
  auto draw = [&] {
    const double v = value(rng);
    return gridded ? std::round(v * 5.0) / 5.0 : v;
  };
  for (int i = 0; i < np; ++i) pairs.positives.push_back(draw());
  for (int i = 0; i < nn; ++i) pairs.negatives.push_back(draw());
  return pairs;
}

double brute_auc(const ScoredPairSet& pairs) {
  double total = 0.0;
  for (double p : pairs.positives) {
    for (double n : pairs.negatives) {
      if (p > n) total += 1.0;
      if (p == n) total += 0.5;
    }
  }
  return total / (static_cast<double>(pairs.positives.size()) *
                  static_cast<double>(pairs.negatives.size()));
}

RetrievalResult ranked_result(const std::string& query,
                              const std::vector<std::string>& ids) {
  RetrievalResult r;
  r.query_id = query;
  double score = 1.0;
  for (const std::string& id : ids) {
    r.ranked.push_back({id, score});
    score -= 0.05;
  }
  return r;
}

Eigen::VectorXd one_hot(int dim, int index) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  v(index) = 1.0;
  return v;
}

Eigen::VectorXd angle_vec(double degrees) {
  const double rad = degrees * M_PI / 180.0;
  Eigen::VectorXd v(2);
  v << std::cos(rad), std::sin(rad);
  return v;
}

EvalItem item(std::string id, std::string lang, std::string transcription,
              Eigen::VectorXd speech, Eigen::VectorXd phoneme) {
  EvalItem it;
  it.id = std::move(id);
  it.lang = std::move(lang);
  it.transcription = std::move(transcription);
  it.speech = std::move(speech);
  it.phoneme = std::move(phoneme);
  return it;
}

const EvalRow& find_row(const EvalReport& report, const std::string& dir,
                        const std::string& lang) {
  for (const EvalRow& row : report.rows) {
    if (row.direction == dir && row.lang == lang) return row;
  }
  REQUIRE(false);
  static EvalRow dummy;
  return dummy;
}

TEST_CASE("error-rate crossing matches the worked examples") {
  CHECK(eer({{0.9, 0.8}, {0.1, 0.2}}) == doctest::Approx(0.0));
  CHECK(eer({{0.9, 0.8, 0.4}, {0.7, 0.3, 0.2}}) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(eer({{0.5}, {0.5}}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(eer({{}, {0.1}}), EmptySide);
  CHECK_THROWS_AS(eer({{0.1}, {}}), EmptySide);
  CHECK_THROWS_AS(eer({{std::nan("")}, {0.1}}), std::invalid_argument);
}

TEST_CASE("area under curve matches closed forms and pair counting") {
  CHECK(auc({{0.9, 0.8}, {0.1, 0.2}}) == doctest::Approx(1.0));
  CHECK(auc({{0.9, 0.4}, {0.7, 0.3}}) == doctest::Approx(0.75));
  CHECK(auc({{0.5}, {0.5}}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(auc({{}, {0.1}}), EmptySide);
  CHECK_THROWS_AS(auc({{0.1}, {}}), EmptySide);

  std::mt19937 rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const ScoredPairSet pairs = random_pairs(rng, trial % 2 == 0);
    CHECK(auc(pairs) == doctest::Approx(brute_auc(pairs)).epsilon(1e-12));
  }
}

TEST_CASE("sweep metrics agree with an independent ROC polyline") {
  std::mt19937 rng(102);
  for (int trial = 0; trial < 200; ++trial) {
    const ScoredPairSet pairs = random_pairs(rng, trial % 2 == 0);
    const RocOracle oracle = roc_oracle(pairs);
    CHECK(std::abs(auc(pairs) - oracle.auc) < 1e-9);
    CHECK(std::abs(eer(pairs) - oracle.eer) < 1e-9);
  }
}

TEST_CASE("rank metrics are invariant under monotone transforms") {
  std::mt19937 rng(103);
  auto cube = [](double v) { return v * v * v + 2.0 * v; };  // increasing
  for (int trial = 0; trial < 50; ++trial) {
    const ScoredPairSet pairs = random_pairs(rng, true);
    ScoredPairSet warped;
    for (double p : pairs.positives) warped.positives.push_back(cube(p));
    for (double n : pairs.negatives) warped.negatives.push_back(cube(n));
    CHECK(std::abs(eer(warped) - eer(pairs)) < 1e-12);
    CHECK(std::abs(auc(warped) - auc(pairs)) < 1e-12);

    // Negating scores flips the ranking: the area inverts, and the error
    // rate is preserved only when the two sides swap roles as well.
    ScoredPairSet negated;
    for (double p : pairs.positives) negated.positives.push_back(-p);
    for (double n : pairs.negatives) negated.negatives.push_back(-n);
    CHECK(std::abs(auc(negated) - (1.0 - auc(pairs))) < 1e-12);
    ScoredPairSet swapped{negated.negatives, negated.positives};
    CHECK(std::abs(eer(swapped) - eer(pairs)) < 1e-12);
  }
}

TEST_CASE("hit rate and average precision follow the ladders") {
  RelevanceJudgment rel;
  rel["q1"] = {"r1", "r2"};
  // Relevant at ranks 1 and 3 with R = 2.
  const std::vector<RetrievalResult> ladder{
      ranked_result("q1", {"r1", "x1", "r2", "x2"})};
  CHECK(mean_average_precision(ladder, rel) ==
        doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-9));
  CHECK(hit_at_k(ladder, rel, 1) == doctest::Approx(1.0));

  // All relevant items at the top.
  const std::vector<RetrievalResult> top{
      ranked_result("q1", {"r2", "r1", "x1", "x2"})};
  CHECK(mean_average_precision(top, rel) == doctest::Approx(1.0));

  // A single relevant item at rank 2.
  RelevanceJudgment single;
  single["q1"] = {"r1"};
  const std::vector<RetrievalResult> second{
      ranked_result("q1", {"x1", "r1", "x2"})};
  CHECK(mean_average_precision(second, single) == doctest::Approx(0.5));
  CHECK(hit_at_k(second, single, 1) == doctest::Approx(0.0));
  CHECK(hit_at_k(second, single, 2) == doctest::Approx(1.0));

  // 2 of 4 queries rank a relevant item first.
  RelevanceJudgment four;
  std::vector<RetrievalResult> results;
  for (int q = 0; q < 4; ++q) {
    const std::string id = "q" + std::to_string(q);
    four[id] = {"good"};
    results.push_back(q < 2 ? ranked_result(id, {"good", "bad"})
                            : ranked_result(id, {"bad", "good"}));
  }
  CHECK(hit_at_k(results, four, 1) == doctest::Approx(0.5));
  CHECK(hit_at_k(results, four, 2) == doctest::Approx(1.0));

  CHECK_THROWS_AS(hit_at_k(results, four, 0), std::invalid_argument);
  CHECK_THROWS_AS(hit_at_k({}, four, 1), std::invalid_argument);
  RelevanceJudgment missing;
  CHECK_THROWS_AS(hit_at_k(results, missing, 1), MissingJudgment);
  CHECK_THROWS_AS(mean_average_precision(results, missing), MissingJudgment);
}

TEST_CASE("hit rates match brute-force recomputation on random pools") {
  std::mt19937 rng(104);
  std::uniform_int_distribution<int> pool_size(2, 20);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = pool_size(rng);
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("c" + std::to_string(i));
    std::shuffle(ids.begin(), ids.end(), rng);

    RelevanceJudgment rel;
    std::vector<RetrievalResult> results;
    const int queries = 1 + trial % 4;
    for (int q = 0; q < queries; ++q) {
      const std::string qid = "q" + std::to_string(q);
      std::shuffle(ids.begin(), ids.end(), rng);
      results.push_back(ranked_result(qid, ids));
      std::uniform_int_distribution<int> rel_count(1, n);
      const int r = rel_count(rng);
      for (int i = 0; i < r; ++i) {
        rel[qid].insert(ids[static_cast<std::size_t>(
            std::uniform_int_distribution<int>(0, n - 1)(rng))]);
      }
    }
    std::uniform_int_distribution<int> k_pick(1, n + 2);
    const int k = k_pick(rng);
    int expect_hits = 0;
    double expect_map = 0.0;
    for (const RetrievalResult& r : results) {
      const auto& good = rel[r.query_id];
      bool hit = false;
      int found = 0;
      double ap = 0.0;
      for (std::size_t i = 0; i < r.ranked.size(); ++i) {
        const bool relevant = good.count(r.ranked[i].id) > 0;
        if (relevant && static_cast<int>(i) < k) hit = true;
        if (relevant) {
          ++found;
          ap += static_cast<double>(found) / static_cast<double>(i + 1);
        }
      }
      expect_hits += hit ? 1 : 0;
      expect_map += ap / static_cast<double>(good.size());
    }
    CHECK(hit_at_k(results, rel, k) ==
          doctest::Approx(static_cast<double>(expect_hits) / queries));
    CHECK(mean_average_precision(results, rel) ==
          doctest::Approx(expect_map / queries).epsilon(1e-12));
  }
}

TEST_CASE("spearman handles ties, reversals, and degenerate input") {
  CHECK(spearman({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3}, {10, 20, 30}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3}, {3, 1, 2}) == doctest::Approx(-0.5));
  // Mid-rank ties: ranks of x become {1, 2.5, 2.5, 4}.
  CHECK(spearman({1, 2, 2, 3}, {1, 2, 3, 4}) ==
        doctest::Approx(3.0 / std::sqrt(10.0)).epsilon(1e-12));

  std::mt19937 rng(105);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x, y;
    for (int i = 0; i < 12; ++i) {
      x.push_back(std::round(u(rng)));
      y.push_back(std::round(u(rng)));
    }
    if (std::set<double>(x.begin(), x.end()).size() < 2) x[0] += 1.0;
    if (std::set<double>(y.begin(), y.end()).size() < 2) y[0] += 1.0;
    const double base = spearman(x, y);
    std::vector<double> fx, gy;
    for (double v : x) fx.push_back(std::exp(v / 3.0));
    for (double v : y) gy.push_back(v * v * v + 7.0 * v);
    CHECK(spearman(fx, gy) == doctest::Approx(base).epsilon(1e-9));
  }

  CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), LengthMismatch);
  CHECK_THROWS_AS(spearman({1, 2}, {2, 1}), std::invalid_argument);
  CHECK_THROWS_AS(spearman({2, 2, 2}, {1, 2, 3}), DegenerateConstantInput);
  CHECK_THROWS_AS(spearman({1, 2, 3}, {4, 4, 4}), DegenerateConstantInput);
}

TEST_CASE("retrieval evaluation separates oracle embeddings perfectly") {
  // Three words, three clips each; identical one-hot speech and phoneme
  // embeddings per word. Languages split 2/1 across words.
  std::vector<EvalItem> items;
  const std::vector<std::string> words{"pa", "ta", "ka"};
  for (int w = 0; w < 3; ++w) {
    for (int c = 0; c < 3; ++c) {
      items.push_back(item(words[w] + "_" + std::to_string(c),
                           w < 2 ? "aaa" : "bbb", words[w], one_hot(8, w),
                           one_hot(8, w)));
    }
  }

  for (Direction dir :
       {Direction::kPhonemeToSpeech, Direction::kSpeechToPhoneme,
        Direction::kSpeechToSpeech}) {
    const EvalReport report = evaluate_retrieval(items, dir);
    const EvalRow& all = find_row(report, direction_name(dir), "all");
    CHECK(all.hit1 == doctest::Approx(1.0));
    CHECK(all.map == doctest::Approx(1.0));
    CHECK(all.eer == doctest::Approx(0.0));
    CHECK(all.auc == doctest::Approx(1.0));
    const EvalRow& a = find_row(report, direction_name(dir), "aaa");
    const EvalRow& b = find_row(report, direction_name(dir), "bbb");
    CHECK(a.n + b.n == all.n);  // language rows partition the queries
    CHECK(a.hit1 == doctest::Approx(1.0));
    CHECK(b.map == doctest::Approx(1.0));
  }

  CHECK(find_row(evaluate_retrieval(items, Direction::kPhonemeToSpeech),
                 "P->S", "all")
            .n == 3);  // one query per distinct transcription
  CHECK(find_row(evaluate_retrieval(items, Direction::kSpeechToPhoneme),
                 "S->P", "all")
            .n == 9);  // one query per clip
  CHECK(find_row(evaluate_retrieval(items, Direction::kSpeechToSpeech),
                 "S->S", "all")
            .n == 9);
}

TEST_CASE("retrieval evaluation matches a hand-computed pool") {
  // Two transcriptions over five clips on the unit circle. Query "x"
  // (phoneme at 0 degrees) ranks s1 (20), s3 (44), s2 (80), s4 (120),
  // s5 (150): relevant {s1, s2} at ranks 1 and 3. Query "y" (phoneme at
  // 90 degrees) ranks s2, s4, s3, s5, s1: relevant {s3, s4, s5} at ranks
  // 2, 3, 4.
  std::vector<EvalItem> items{
      item("s1", "und", "x", angle_vec(20.0), angle_vec(0.0)),
      item("s2", "und", "x", angle_vec(80.0), angle_vec(0.0)),
      item("s3", "und", "y", angle_vec(44.0), angle_vec(90.0)),
      item("s4", "und", "y", angle_vec(120.0), angle_vec(90.0)),
      item("s5", "und", "y", angle_vec(150.0), angle_vec(90.0)),
  };
  const EvalReport report =
      evaluate_retrieval(items, Direction::kPhonemeToSpeech);
  REQUIRE(report.rows.size() == 1);  // single language: pooled row only
  const EvalRow& row = report.rows[0];
  CHECK(row.n == 2);
  CHECK(row.hit1 == doctest::Approx(0.5));
  const double ap_x = (1.0 + 2.0 / 3.0) / 2.0;
  const double ap_y = (1.0 / 2.0 + 2.0 / 3.0 + 3.0 / 4.0) / 3.0;
  CHECK(row.map == doctest::Approx((ap_x + ap_y) / 2.0).epsilon(1e-9));

  // The detection pool is every (query, candidate) score split by
  // relevance; the kernels themselves are already verified independently.
  ScoredPairSet pool;
  auto deg = [](double d) { return d * M_PI / 180.0; };
  for (double a : {20.0, 80.0}) pool.positives.push_back(std::cos(deg(a)));
  for (double a : {44.0, 120.0, 150.0}) {
    pool.negatives.push_back(std::cos(deg(a)));
  }
  for (double a : {44.0, 120.0, 150.0}) {
    pool.positives.push_back(std::sin(deg(a)));
  }
  for (double a : {20.0, 80.0}) pool.negatives.push_back(std::sin(deg(a)));
  CHECK(row.eer == doctest::Approx(eer(pool)).epsilon(1e-9));
  CHECK(row.auc == doctest::Approx(auc(pool)).epsilon(1e-9));
}

TEST_CASE("speech retrieval excludes the query and needs a second clip") {
  std::vector<EvalItem> items{
      item("x0", "und", "x", angle_vec(0.0), one_hot(2, 0)),
      item("x1", "und", "x", angle_vec(10.0), one_hot(2, 0)),
      item("solo", "und", "y", angle_vec(90.0), one_hot(2, 1)),
  };
  const EvalReport report =
      evaluate_retrieval(items, Direction::kSpeechToSpeech);
  const EvalRow& row = report.rows[0];
  CHECK(row.n == 2);  // the singleton transcription cannot be a query
  CHECK(row.hit1 == doctest::Approx(1.0));
  CHECK(row.map == doctest::Approx(1.0));

  std::vector<EvalItem> singletons{
      item("a", "und", "x", angle_vec(0.0), one_hot(2, 0)),
      item("b", "und", "y", angle_vec(90.0), one_hot(2, 1)),
  };
  CHECK_THROWS_AS(
      evaluate_retrieval(singletons, Direction::kSpeechToSpeech),
      InsufficientPositives);
  CHECK_THROWS_AS(evaluate_retrieval({}, Direction::kPhonemeToSpeech),
                  std::invalid_argument);
}

TEST_CASE("detection evaluation scores labeled pairs per direction") {
  std::vector<EvalItem> items;
  for (int w = 0; w < 3; ++w) {
    for (int c = 0; c < 2; ++c) {
      items.push_back(item("w" + std::to_string(w) + "_" + std::to_string(c),
                           "und", "t" + std::to_string(w), one_hot(4, w),
                           one_hot(4, w)));
    }
  }
  std::vector<DetectionPair> pairs;
  for (int w = 0; w < 3; ++w) {
    pairs.push_back({"w" + std::to_string(w) + "_0",
                     "w" + std::to_string(w) + "_1", true});
    pairs.push_back({"w" + std::to_string(w) + "_0",
                     "w" + std::to_string((w + 1) % 3) + "_1", false});
  }
  const EvalReport report = evaluate_detection(items, pairs);
  REQUIRE(report.rows.size() == 3);
  for (const EvalRow& row : report.rows) {
    CHECK(row.eer == doctest::Approx(0.0));
    CHECK(row.auc == doctest::Approx(1.0));
    CHECK(row.n == 6);
    CHECK(std::isnan(row.hit1));
    CHECK(std::isnan(row.map));
  }

  // One positive and one negative pair with identical similarities.
  std::vector<EvalItem> tied{
      item("anchor", "und", "a", angle_vec(0.0), angle_vec(0.0)),
      item("up", "und", "b", angle_vec(60.0), angle_vec(60.0)),
      item("down", "und", "c", angle_vec(-60.0), angle_vec(-60.0)),
  };
  const EvalReport half = evaluate_detection(
      tied, {{"anchor", "up", true}, {"anchor", "down", false}});
  const EvalRow& p2s = find_row(half, "P->S", "all");
  CHECK(p2s.eer == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(p2s.auc == doctest::Approx(0.5).epsilon(1e-9));

  CHECK_THROWS_AS(evaluate_detection(items, {}), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_detection(items, {{"ghost", "w0_0", true}}),
                  std::invalid_argument);
  std::vector<EvalItem> dup{items[0], items[0]};
  CHECK_THROWS_AS(evaluate_detection(dup, pairs), DuplicateId);
}

TEST_CASE("reports print aligned tables and stable records") {
  std::vector<EvalItem> items;
  for (int w = 0; w < 2; ++w) {
    for (int c = 0; c < 2; ++c) {
      items.push_back(item("w" + std::to_string(w) + "_" + std::to_string(c),
                           "und", "t" + std::to_string(w), one_hot(4, w),
                           one_hot(4, w)));
    }
  }
  const EvalReport report =
      evaluate_retrieval(items, Direction::kPhonemeToSpeech);
  const std::string records = report.to_records();
  CHECK(records ==
        "direction=P->S lang=all hit1=1 map=1 eer=0 auc=1 n=2\n");
  const std::string table = report.to_table();
  CHECK(table.find("direction") != std::string::npos);
  CHECK(table.find("P->S") != std::string::npos);

  const EvalReport detection = evaluate_detection(
      items,
      {{"w0_0", "w0_1", true}, {"w0_0", "w1_1", false}});
  CHECK(detection.to_table().find("-") != std::string::npos);
  CHECK(detection.to_records().find("hit1=nan") != std::string::npos);
}

}  // namespace
}  // namespace phonokws
