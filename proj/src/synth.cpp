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

#include "phonokws/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>
#include <stdexcept>

#include "phonokws/audio.hpp"

namespace phonokws {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLowHz = 150.0;
constexpr double kHighHz = 5000.0;
constexpr double kPartnerOffsetHz = 12.0;
constexpr double kPartnerGain = 0.3;
constexpr double kFadeSeconds = 0.005;
constexpr double kSilenceSeconds = 0.02;  // head and tail padding
constexpr double kNoiseAmplitude = 0.005;
constexpr int kMaxInventory = 64;

// Slaney mel scale, matching the analysis filterbank: linear below
// 1 kHz, logarithmic above.
double hz_to_mel(double hz) {
  const double log_step = std::log(6.4) / 27.0;
  if (hz < 1000.0) return hz * 3.0 / 200.0;
  return 15.0 + std::log(hz / 1000.0) / log_step;
}

double mel_to_hz(double mel) {
  const double log_step = std::log(6.4) / 27.0;
  if (mel < 15.0) return mel * 200.0 / 3.0;
  return 1000.0 * std::exp((mel - 15.0) * log_step);
}

// The 64 single-codepoint phonemes signatures can be assigned to. The
// leading 24 form the default inventory.
const char* const kInventory[64] = {
    "p", "b", "t", "d", "k", "g", "m", "n",
    "ŋ", "f", "v", "s", "z", "ʃ", "r", "l",
    "j", "w", "i", "u", "e", "o", "a", "ə",
    "ʒ", "θ", "ð", "x", "h", "c", "ɟ", "q",
    "ʔ", "ɲ", "ɾ", "ɕ", "ɣ", "χ", "ʎ", "y",
    "ɛ", "ɔ", "æ", "ʈ", "ɖ", "ɸ", "β",
    "ʂ", "ʐ", "ʝ", "ʁ", "ħ", "ʕ", "ɦ",
    "ɬ", "ɮ", "ʋ", "ɹ", "ɻ", "ɰ", "ɭ",
    "ʟ", "ɴ", "ɱ"};

}  // namespace

void SyntheticSpec::validate() const {
  if (inventory_size > kMaxInventory) {
    throw InventoryTooLarge("inventory_size " +
                            std::to_string(inventory_size) + " exceeds 64");
  }
  if (inventory_size < 1) throw std::invalid_argument("inventory_size < 1");
  if (word_count < 1) throw std::invalid_argument("word_count < 1");
  if (min_word_length < 1 || max_word_length < min_word_length) {
    throw std::invalid_argument("empty word length range");
  }
  if (speakers < 1) throw std::invalid_argument("speakers < 1");
  if (sample_rate < 8000) throw std::invalid_argument("sample_rate < 8000");
  if (unit_ms < 5) throw std::invalid_argument("unit_ms < 5");
}

std::string SyntheticCorpus::transcription(int word) const {
  std::string out;
  for (int idx : words.at(word)) out += inventory.at(idx);
  return out;
}

double signature_frequency(int index, int inventory_size) {
  if (index < 0 || index >= inventory_size || inventory_size < 1 ||
      inventory_size > kMaxInventory) {
    throw std::invalid_argument("signature_frequency: index out of range");
  }
  const double lo = hz_to_mel(kLowHz);
  const double hi = hz_to_mel(kHighHz);
  return mel_to_hz(lo + (index + 0.5) * (hi - lo) / inventory_size);
}

std::vector<double> phoneme_signature(const SyntheticSpec& spec,
                                      const SpeakerVoice& voice, int index) {
  const int n = spec.unit_samples();
  const double sr = spec.sample_rate;
  const double f = signature_frequency(index, spec.inventory_size) *
                   voice.pitch_factor;
  const int fade = std::min(n / 2, static_cast<int>(kFadeSeconds * sr));
  std::vector<double> out(n);
  for (int t = 0; t < n; ++t) {
    const double phase = 2.0 * kPi * t / sr;
    double v = std::sin(phase * f) +
               kPartnerGain * std::sin(phase * (f + kPartnerOffsetHz));
    double env = 1.0;
    if (t < fade) env = 0.5 - 0.5 * std::cos(kPi * t / fade);
    if (n - 1 - t < fade) env = 0.5 - 0.5 * std::cos(kPi * (n - 1 - t) / fade);
    out[t] = voice.amplitude * env * v;
  }
  return out;
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec,
                                          unsigned seed,
                                          const std::string& out_dir) {
  namespace fs = std::filesystem;
  spec.validate();

  SyntheticCorpus corpus;
  for (int i = 0; i < spec.inventory_size; ++i) {
    corpus.inventory.push_back(kInventory[i]);
  }

  // Fixed draw order (voices, then words, then one sub-seed per clip)
  // keeps the corpus a pure function of (spec, seed).
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> pitch(-0.002, 0.002);
  std::uniform_real_distribution<double> amp(0.25, 0.40);
  for (int s = 0; s < spec.speakers; ++s) {
    SpeakerVoice voice;
    voice.pitch_factor = 1.0 + pitch(rng);
    voice.amplitude = amp(rng);
    corpus.voices.push_back(voice);
  }

  std::uniform_int_distribution<int> length(spec.min_word_length,
                                            spec.max_word_length);
  std::uniform_int_distribution<int> symbol(0, spec.inventory_size - 1);
  std::set<std::vector<int>> seen;
  long long attempts = 0;
  const long long attempt_cap = 1000LL * spec.word_count + 1000;
  while (static_cast<int>(corpus.words.size()) < spec.word_count) {
    if (++attempts > attempt_cap) {
      throw std::invalid_argument(
          "inventory and length range cannot yield enough distinct words");
    }
    std::vector<int> word(length(rng));
    for (int& idx : word) idx = symbol(rng);
    if (seen.insert(word).second) corpus.words.push_back(std::move(word));
  }
  const int unseen =
      spec.word_count >= 2
          ? std::max(1, static_cast<int>(std::lround(0.1 * spec.word_count)))
          : 0;
  corpus.seen_words = spec.word_count - unseen;

  try {
    fs::create_directories(fs::path(out_dir) / "wav");
  } catch (const fs::filesystem_error& e) {
    throw DiskFull(std::string("cannot create output directory: ") + e.what());
  }

  const int head = static_cast<int>(kSilenceSeconds * spec.sample_rate);
  for (int w = 0; w < spec.word_count; ++w) {
    const bool is_seen = w < corpus.seen_words;
    for (int s = 0; s < spec.speakers; ++s) {
      for (int c = 0; c < 2; ++c) {
        const unsigned clip_seed = rng();
        std::mt19937 clip_rng(clip_seed);
        std::uniform_real_distribution<double> gain(0.9, 1.0);
        std::normal_distribution<double> noise(0.0, kNoiseAmplitude);
        const double g = gain(clip_rng);

        AudioClip clip;
        clip.sample_rate = spec.sample_rate;
        clip.samples.assign(head, 0.0);
        for (int idx : corpus.words[w]) {
          const std::vector<double> unit =
              phoneme_signature(spec, corpus.voices[s], idx);
          for (double v : unit) clip.samples.push_back(g * v);
        }
        clip.samples.resize(clip.samples.size() + head, 0.0);
        for (double& v : clip.samples) v += noise(clip_rng);

        char name[64];
        std::snprintf(name, sizeof(name), "wav/w%04d_s%d_c%d.wav", w, s, c);
        try {
          save_wav((fs::path(out_dir) / name).string(), clip);
        } catch (const std::exception& e) {
          throw DiskFull(std::string("wav write failed: ") + e.what());
        }

        ManifestRecord rec;
        rec.audio = name;
        rec.ipa = corpus.transcription(w);
        rec.lang = "syn";
        const bool dev_speaker = spec.speakers > 1 && s == spec.speakers - 1;
        rec.split = !is_seen ? "test" : dev_speaker ? "dev" : "train";
        rec.duration = clip.duration_seconds();
        corpus.records.push_back(std::move(rec));
      }
    }
  }

  try {
    save_manifest(corpus.records,
                  (fs::path(out_dir) / "manifest.jsonl").string());
  } catch (const std::exception& e) {
    throw DiskFull(std::string("manifest write failed: ") + e.what());
  }
  return corpus;
}

}  // namespace phonokws
