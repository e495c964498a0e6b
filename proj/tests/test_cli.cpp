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
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "phonokws_cli_test" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// Runs `phonokws <args>` through the shell, capturing both streams.
// `input` is piped to stdin when non-empty.
RunResult run(const std::string& args, const std::string& input = "") {
  static int serial = 0;
  const fs::path dir = fs::temp_directory_path() / "phonokws_cli_test";
  fs::create_directories(dir);
  const fs::path out_file = dir / ("out" + std::to_string(serial) + ".txt");
  const fs::path err_file = dir / ("err" + std::to_string(serial) + ".txt");
  const fs::path in_file = dir / ("in" + std::to_string(serial) + ".txt");
  ++serial;
  std::string cmd = std::string("'") + PHONOKWS_CLI_PATH + "' " + args;
  if (!input.empty()) {
    spit(in_file, input);
    cmd += " < '" + in_file.string() + "'";
  }
  cmd += " > '" + out_file.string() + "' 2> '" + err_file.string() + "'";
  const int status = std::system(cmd.c_str());
  RunResult result;
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_file);
  result.err = slurp(err_file);
  return result;
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

// A small corpus most cases share: 8 phonemes, 10 words, 2 speakers.
const fs::path& corpus_dir() {
  static const fs::path dir = [] {
    const fs::path d = scratch_dir("corpus");
    const RunResult r = run("synth --out '" + d.string() +
                            "' --seed 5 --inventory 8 --words 10 --min-len 2 "
                            "--max-len 3 --speakers 2 --unit-ms 30");
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("usage errors name the offending flag and exit 2") {
  RunResult r = run("retrieve --index /nope.bin");
  CHECK(r.code == 2);
  CHECK(r.err.find("--queries") != std::string::npos);

  r = run("evaluate --checkpoint a --vocab b --manifest c --direction x2s");
  CHECK(r.code == 2);
  CHECK(r.err.find("--direction") != std::string::npos);

  r = run("no-such-command");
  CHECK(r.code == 2);

  r = run("train --vocab v --out o");
  CHECK(r.code == 2);
  CHECK(r.err.find("--manifest") != std::string::npos);

  r = run("--help");
  CHECK(r.code == 0);
  CHECK(r.out.find("tokenizer-train") != std::string::npos);

  // Runtime failures (not usage) exit 1.
  r = run("validate-manifest --manifest /does/not/exist.jsonl");
  CHECK(r.code == 1);
  CHECK(r.err.find("error") != std::string::npos);
}

TEST_CASE("x-sampa conversion reads stdin line-wise") {
  RunResult r = run("xsampa2ipa", "tS\n");
  CHECK(r.code == 0);
  CHECK(r.out == "tʃ\n");

  r = run("xsampa2ipa", "tS\nD\n");
  CHECK(r.code == 0);
  CHECK(r.out == "tʃ\nð\n");
}

TEST_CASE("synthesis is byte-deterministic and validates cleanly") {
  const fs::path dir2 = scratch_dir("corpus2");
  const RunResult again = run("synth --out '" + dir2.string() +
                              "' --seed 5 --inventory 8 --words 10 --min-len 2 "
                              "--max-len 3 --speakers 2 --unit-ms 30");
  REQUIRE(again.code == 0);
  CHECK(slurp(corpus_dir() / "manifest.jsonl") ==
        slurp(dir2 / "manifest.jsonl"));
  CHECK(slurp(corpus_dir() / "wav/w0000_s0_c0.wav") ==
        slurp(dir2 / "wav/w0000_s0_c0.wav"));

  RunResult v = run("validate-manifest --manifest '" +
                    (corpus_dir() / "manifest.jsonl").string() + "'");
  CHECK(v.code == 0);
  CHECK(v.out.find("40/40 accepted") != std::string::npos);

  // An oversized inventory is a domain error, not a usage error.
  const fs::path dir3 = scratch_dir("toolarge");
  const RunResult bad =
      run("synth --out '" + dir3.string() + "' --inventory 65");
  CHECK(bad.code == 1);
  CHECK(bad.err.find("64") != std::string::npos);
}

TEST_CASE("manifest validation flags bad lines with their numbers") {
  const fs::path dir = scratch_dir("badmanifest");
  std::string body = slurp(corpus_dir() / "manifest.jsonl");
  body += "{\"audio\":\"wav/w0000_s0_c0.wav\",\"ipa\":\"pa\",\"lang\":\"syn\","
          "\"split\":\"eval\"}\n";
  spit(dir / "manifest.jsonl", body);
  const RunResult r =
      run("validate-manifest --manifest '" + (dir / "manifest.jsonl").string() +
          "' --data-root '" + corpus_dir().string() + "'");
  CHECK(r.code == 1);
  CHECK(r.out.find("line 41") != std::string::npos);
  CHECK(r.out.find("eval") != std::string::npos);
}

TEST_CASE("frequency filtering caps words deterministically") {
  const fs::path out1 = scratch_dir("filter") / "f1.jsonl";
  const fs::path out2 = scratch_dir("filter2") / "f2.jsonl";
  const std::string manifest = (corpus_dir() / "manifest.jsonl").string();
  RunResult r = run("filter-manifest --manifest '" + manifest + "' --out '" +
                    out1.string() + "' --min-freq 4 --cap 2 --seed 3");
  REQUIRE(r.code == 0);
  // Every word has exactly 4 clips; the cap keeps 2 of each of 10 words.
  CHECK(count_lines(slurp(out1)) == 20);
  r = run("filter-manifest --manifest '" + manifest + "' --out '" +
          out2.string() + "' --min-freq 4 --cap 2 --seed 3");
  REQUIRE(r.code == 0);
  CHECK(slurp(out1) == slurp(out2));

  // min-freq above the clip count empties the manifest.
  const fs::path out3 = scratch_dir("filter3") / "f3.jsonl";
  r = run("filter-manifest --manifest '" + manifest + "' --out '" +
          out3.string() + "' --min-freq 5 --cap 10 --seed 3");
  REQUIRE(r.code == 0);
  CHECK(slurp(out3).empty());
}

TEST_CASE("an index built from one-hot vectors ranks its own rows first") {
  const fs::path dir = scratch_dir("onehot");
  spit(dir / "dump.jsonl",
       "{\"id\":\"alpha\",\"modality\":\"speech\",\"vector\":[1,0,0]}\n"
       "{\"id\":\"beta\",\"modality\":\"speech\",\"vector\":[0,1,0]}\n"
       "{\"id\":\"gamma\",\"modality\":\"speech\",\"vector\":[0,0,1]}\n");
  RunResult r = run("index-build --embeddings '" + (dir / "dump.jsonl").string() +
                    "' --out '" + (dir / "store.bin").string() + "'");
  REQUIRE(r.code == 0);

  // k above the store size is capped: 3 rows per query, 9 lines total.
  r = run("retrieve --index '" + (dir / "store.bin").string() +
          "' --queries '" + (dir / "store.bin").string() + "' --k 5");
  REQUIRE(r.code == 0);
  CHECK(count_lines(r.out) == 9);
  std::istringstream lines(r.out);
  std::string query, id;
  int rank;
  double score;
  while (lines >> query >> rank >> id >> score) {
    if (rank == 1) {
      CHECK(id == query);  // oracle embeddings retrieve themselves
      CHECK(score == doctest::Approx(1.0).epsilon(1e-6));
    } else {
      CHECK(score == doctest::Approx(0.0));
    }
  }

  // Malformed dump lines are rejected with their line number.
  spit(dir / "bad.jsonl", "{\"id\":\"x\",\"modality\":\"sound\","
                          "\"vector\":[1]}\n");
  r = run("index-build --embeddings '" + (dir / "bad.jsonl").string() +
          "' --out '" + (dir / "bad.bin").string() + "'");
  CHECK(r.code == 1);
  CHECK(r.err.find(":1") != std::string::npos);
}

TEST_CASE("the training pipeline runs end to end and reproduces itself") {
  const fs::path dir = scratch_dir("pipeline");
  const std::string manifest = (corpus_dir() / "manifest.jsonl").string();
  spit(dir / "cfg.txt",
       "total_steps = 10\n"
       "warmup_steps = 2\n"
       "peak_lr = 3e-4\n"
       "word_batch_size = 8\n"
       "checkpoint_interval = 100\n"
       "seed = 9\n");

  RunResult r = run("tokenizer-train --manifest '" + manifest + "' --out '" +
                    (dir / "vocab.tsv").string() + "'");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("pieces") != std::string::npos);

  const std::string train_args =
      "train --manifest '" + manifest + "' --vocab '" +
      (dir / "vocab.tsv").string() + "' --config '" +
      (dir / "cfg.txt").string() + "'";
  r = run(train_args + " --out '" + (dir / "run1").string() + "'");
  REQUIRE(r.code == 0);
  REQUIRE(fs::exists(dir / "run1/checkpoint_000010.bin"));
  r = run(train_args + " --out '" + (dir / "run2").string() + "'");
  REQUIRE(r.code == 0);
  // Identical seeds and inputs give identical training trajectories.
  CHECK(slurp(dir / "run1/metrics.log") == slurp(dir / "run2/metrics.log"));
  CHECK(count_lines(slurp(dir / "run1/metrics.log")) == 10);

  const std::string ckpt = (dir / "run1/checkpoint_000010.bin").string();
  r = run("embed --checkpoint '" + ckpt + "' --manifest '" + manifest +
          "' --modality speech --split dev --out '" +
          (dir / "speech.bin").string() + "'");
  REQUIRE(r.code == 0);
  r = run("embed --checkpoint '" + ckpt + "' --vocab '" +
          (dir / "vocab.tsv").string() + "' --manifest '" + manifest +
          "' --modality phoneme --split train --out '" +
          (dir / "phoneme.bin").string() + "'");
  REQUIRE(r.code == 0);

  r = run("retrieve --index '" + (dir / "speech.bin").string() +
          "' --queries '" + (dir / "phoneme.bin").string() + "' --k 2 --out '" +
          (dir / "ranked.tsv").string() + "'");
  REQUIRE(r.code == 0);
  // 9 seen words queried against 18 dev+train... dev speech rows only: the
  // store holds the dev split, so each of the 9 phoneme queries gets 2 rows.
  CHECK(count_lines(slurp(dir / "ranked.tsv")) == 18);

  r = run("evaluate --checkpoint '" + ckpt + "' --vocab '" +
          (dir / "vocab.tsv").string() + "' --manifest '" + manifest +
          "' --direction p2s --split dev --out '" +
          (dir / "report.txt").string() + "'");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("P->S") != std::string::npos);
  const std::string report = slurp(dir / "report.txt");
  CHECK(report.find("direction=P->S lang=all") != std::string::npos);
  CHECK(report.find("hit1=") != std::string::npos);
  CHECK(report.find("n=9") != std::string::npos);
}

TEST_CASE("mutate rewrites stdin transcriptions into close variants") {
  RunResult r = run("mutate --mode minimal-pair --seed 4", "pata\nkiku\n");
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    ++n;
    CHECK_FALSE(line.empty());
  }
  CHECK(n == 2);
  // Deterministic under the seed.
  const RunResult again =
      run("mutate --mode minimal-pair --seed 4", "pata\nkiku\n");
  CHECK(again.out == r.out);
  const RunResult other =
      run("mutate --mode corrupt --seed 4", "patakiku\n");
  CHECK(other.code == 0);
  CHECK_FALSE(other.out.empty());
}
