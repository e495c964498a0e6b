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

#ifndef PHONOKWS_SYNTH_HPP_
#define PHONOKWS_SYNTH_HPP_

#include <string>
#include <vector>

#include "phonokws/error.hpp"
#include "phonokws/manifest.hpp"

namespace phonokws {

PHONOKWS_DEFINE_ERROR(InventoryTooLarge);
PHONOKWS_DEFINE_ERROR(DiskFull);

// Recipe for a generated corpus. Every speaker renders every word twice,
// so a word gets 2 * speakers clips. 10% of the word forms (at least one
// when word_count >= 2) are reserved for the test split and never appear
// in train or dev; the last speaker's clips of the remaining words form
// the dev split.
struct SyntheticSpec {
  int inventory_size = 24;  // distinct phonemes, at most 64
  int word_count = 300;     // distinct word forms across all splits
  int min_word_length = 3;  // phonemes per word, inclusive range
  int max_word_length = 6;
  int speakers = 4;
  int sample_rate = 16000;
  int unit_ms = 60;  // duration of one phoneme signature

  int clips_per_word() const { return 2 * speakers; }
  int unit_samples() const {
    return static_cast<int>(static_cast<long long>(sample_rate) * unit_ms /
                            1000);
  }
  // Throws InventoryTooLarge past 64 phonemes, std::invalid_argument for
  // non-positive counts, an empty length range, or unit_ms < 5.
  void validate() const;
};

// Deterministic per-speaker voice: a small pitch offset and a loudness of
// its own, applied to every signature the speaker renders.
struct SpeakerVoice {
  double pitch_factor = 1.0;  // multiplies every signature frequency
  double amplitude = 0.3;     // base tone amplitude
};

struct SyntheticCorpus {
  std::vector<std::string> inventory;  // UTF-8 phoneme per index
  std::vector<std::vector<int>> words;  // phoneme indices; seen words first
  int seen_words = 0;                   // words[0..seen) are train/dev
  std::vector<SpeakerVoice> voices;     // one per speaker
  std::vector<ManifestRecord> records;  // mirror of <out_dir>/manifest.jsonl

  std::string transcription(int word) const;  // UTF-8 join of the symbols
};

// Center frequency of phoneme `index`: the inventory is laid out on
// equal-width slots of the mel axis between 150 and 5000 Hz, so adjacent
// signatures stay separated by whole mel-filter bandwidths.
double signature_frequency(int index, int inventory_size);

// One phoneme unit as rendered by a voice: the slot tone plus a softer
// partner 12 Hz above it, under a 5 ms raised-cosine fade at both ends.
// Pure function of its arguments; clip noise is added by the generator.
std::vector<double> phoneme_signature(const SyntheticSpec& spec,
                                      const SpeakerVoice& voice, int index);

// Renders WAV files under <out_dir>/wav plus <out_dir>/manifest.jsonl.
// Identical spec + seed produce byte-identical trees. File-system write
// failures surface as DiskFull.
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec,
                                          unsigned seed,
                                          const std::string& out_dir);

}  // namespace phonokws

#endif  // PHONOKWS_SYNTH_HPP_
