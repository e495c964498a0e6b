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

#ifndef PHONOKWS_AUDIO_HPP_
#define PHONOKWS_AUDIO_HPP_

#include <random>
#include <string>
#include <vector>

#include "phonokws/error.hpp"

namespace phonokws {

PHONOKWS_DEFINE_ERROR(UnsupportedCodec);
PHONOKWS_DEFINE_ERROR(CorruptHeader);
PHONOKWS_DEFINE_ERROR(ClipTooShort);

// Mono PCM at 16 kHz after ingestion; samples in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Log-mel features, row-major frames x 80. Validity padding is only ever a
// suffix, and padded frames hold zeros so the conv stem's implicit zero
// padding and explicit batch padding agree exactly.
struct MelSpectrogram {
  static constexpr int kBins = 80;
  int frames = 0;
  std::vector<double> values;  // frames * kBins
  std::vector<int> mask;       // 1 = real frame, 0 = padding

  double at(int t, int b) const { return values[t * kBins + b]; }
  double& at(int t, int b) { return values[t * kBins + b]; }
  int valid_frames() const {
    int n = 0;
    for (int m : mask) n += m;
    return n;
  }
  // Extends to target_frames with zero-valued masked frames.
  void pad_to(int target_frames);
};

struct SpecAugmentConfig {
  double time_mask_prob = 0.05;
  int time_mask_span = 10;
  double freq_mask_prob = 0.05;
  int freq_mask_span = 10;
};

// RIFF/WAVE PCM-16 reader: multichannel averaged to mono, resampled to
// 16 kHz when needed, amplitudes scaled to [-1, 1].
AudioClip load_wav(const std::string& path);

// Mono PCM-16 writer (atomic: temp file + rename).
void save_wav(const std::string& path, const AudioClip& clip);

// Linear-interpolation resampler; output length rounds len * to/from.
AudioClip resample_linear(const AudioClip& clip, int target_rate);

// Log-mel features in the reference speech encoder's input convention:
// STFT window 400 / hop 160 with a periodic Hann window and reflective
// center padding, 80 Slaney-normalized mel filters over 0-8000 Hz, power
// to log10 with floor 1e-10, clamp at (global max - 8), then (x+4)/4.
// A clip of N samples yields floor(N/160) frames, all marked valid.
MelSpectrogram log_mel(const AudioClip& clip);

// SpecAugment: every valid frame t starts a zeroed span [t, t+span) with
// probability time_mask_prob; then every bin f starts a zeroed span with
// probability freq_mask_prob. Spans clip at the validity boundary and
// padding frames are never touched. Draw order is pinned: one uniform per
// valid frame (t ascending), then one per bin (f ascending).
MelSpectrogram spec_augment(const MelSpectrogram& mel,
                            const SpecAugmentConfig& cfg, std::mt19937& rng);

// The 80 x 201 mel filterbank used by log_mel (Slaney scale, area
// normalized), exposed for oracle tests.
std::vector<double> mel_filterbank();

}  // namespace phonokws

#endif  // PHONOKWS_AUDIO_HPP_
