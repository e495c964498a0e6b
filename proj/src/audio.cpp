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

#include "phonokws/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <stdexcept>

namespace phonokws {
namespace {

constexpr int kSampleRate = 16000;
constexpr int kFftSize = 400;
constexpr int kHop = 160;
constexpr int kFreqBins = kFftSize / 2 + 1;  // 201
constexpr int kMelBins = MelSpectrogram::kBins;
constexpr double kLogFloor = 1e-10;

// --- little-endian byte readers over a whole-file buffer ---

struct ByteReader {
  const unsigned char* data;
  size_t size;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > size) throw CorruptHeader("wav file truncated");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(data[pos] | (data[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = static_cast<uint32_t>(data[pos]) |
                 (static_cast<uint32_t>(data[pos + 1]) << 8) |
                 (static_cast<uint32_t>(data[pos + 2]) << 16) |
                 (static_cast<uint32_t>(data[pos + 3]) << 24);
    pos += 4;
    return v;
  }
  void tag(char out[4]) {
    need(4);
    std::memcpy(out, data + pos, 4);
    pos += 4;
  }
};

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, uint32_t v) {
  put_u16(out, static_cast<uint16_t>(v & 0xFFFF));
  put_u16(out, static_cast<uint16_t>(v >> 16));
}

// --- shared FFT plan; executed against per-call buffers, so concurrent
// log_mel calls stay safe ---

fftw_plan shared_plan() {
  static fftw_plan plan = nullptr;
  static std::once_flag flag;
  std::call_once(flag, [] {
    double* in = fftw_alloc_real(kFftSize);
    fftw_complex* out = fftw_alloc_complex(kFreqBins);
    plan = fftw_plan_dft_r2c_1d(kFftSize, in, out,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    if (plan == nullptr) throw std::runtime_error("fftw plan creation failed");
  });
  return plan;
}

double hz_to_mel(double hz) {
  // Linear below 1 kHz, logarithmic above (Slaney scale).
  constexpr double kMinLogHz = 1000.0;
  constexpr double kLinSlope = 3.0 / 200.0;
  const double log_step = std::log(6.4) / 27.0;
  if (hz < kMinLogHz) return hz * kLinSlope;
  return 15.0 + std::log(hz / kMinLogHz) / log_step;
}

double mel_to_hz(double mel) {
  constexpr double kMinLogMel = 15.0;
  const double log_step = std::log(6.4) / 27.0;
  if (mel < kMinLogMel) return mel * 200.0 / 3.0;
  return 1000.0 * std::exp((mel - kMinLogMel) * log_step);
}

}  // namespace

std::vector<double> mel_filterbank() {
  // 82 mel-spaced points over [0, 8000] Hz; filter i ramps over points
  // (i, i+1, i+2) in the Hz domain with area normalization 2/(f[i+2]-f[i]).
  const double mel_max = hz_to_mel(8000.0);
  std::vector<double> f(kMelBins + 2);
  for (int i = 0; i < kMelBins + 2; ++i) {
    f[i] = mel_to_hz(mel_max * i / (kMelBins + 1));
  }
  std::vector<double> w(static_cast<size_t>(kMelBins) * kFreqBins, 0.0);
  for (int i = 0; i < kMelBins; ++i) {
    const double enorm = 2.0 / (f[i + 2] - f[i]);
    for (int k = 0; k < kFreqBins; ++k) {
      const double hz = static_cast<double>(k) * kSampleRate / kFftSize;
      const double up = (hz - f[i]) / (f[i + 1] - f[i]);
      const double down = (f[i + 2] - hz) / (f[i + 2] - f[i + 1]);
      const double v = std::min(up, down);
      if (v > 0.0) w[static_cast<size_t>(i) * kFreqBins + k] = v * enorm;
    }
  }
  return w;
}

void MelSpectrogram::pad_to(int target_frames) {
  if (target_frames <= frames) return;
  values.resize(static_cast<size_t>(target_frames) * kBins, 0.0);
  mask.resize(static_cast<size_t>(target_frames), 0);
  frames = target_frames;
}

AudioClip load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptHeader("cannot open wav file: " + path);
  std::string raw((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  ByteReader r{reinterpret_cast<const unsigned char*>(raw.data()), raw.size()};

  char tag[4];
  r.tag(tag);
  if (std::memcmp(tag, "RIFF", 4) != 0) throw CorruptHeader("missing RIFF tag");
  r.u32();  // declared riff size; actual file size governs
  r.tag(tag);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw CorruptHeader("missing WAVE tag");

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  uint32_t rate = 0;
  size_t data_pos = 0, data_size = 0;
  bool have_data = false;

  while (r.pos + 8 <= r.size) {
    r.tag(tag);
    uint32_t chunk_size = r.u32();
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw CorruptHeader("fmt chunk too small");
      size_t end = r.pos + chunk_size;
      format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();  // byte rate
      block_align = r.u16();
      bits = r.u16();
      have_fmt = true;
      r.need(end - r.pos);
      r.pos = end;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      r.need(chunk_size);
      data_pos = r.pos;
      data_size = chunk_size;
      have_data = true;
      r.pos += chunk_size;
    } else {
      r.need(chunk_size);
      r.pos += chunk_size;
    }
    if (r.pos % 2 == 1 && r.pos < r.size) ++r.pos;  // chunk pad byte
  }
  if (!have_fmt) throw CorruptHeader("missing fmt chunk");
  if (!have_data) throw CorruptHeader("missing data chunk");
  if (format != 1) {
    throw UnsupportedCodec("only PCM wav is supported, got format " +
                           std::to_string(format));
  }
  if (bits != 16) {
    throw UnsupportedCodec("only 16-bit PCM is supported, got " +
                           std::to_string(bits) + " bits");
  }
  if (channels == 0) throw CorruptHeader("zero channels");
  if (rate == 0) throw CorruptHeader("zero sample rate");
  if (block_align != channels * 2) throw CorruptHeader("bad block alignment");
  if (data_size % block_align != 0) {
    throw CorruptHeader("data chunk size not a multiple of the frame size");
  }
  const size_t n_frames = data_size / block_align;
  if (n_frames == 0) throw CorruptHeader("empty data chunk");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(n_frames);
  const unsigned char* p = r.data + data_pos;
  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* s = p + (i * channels + c) * 2;
      int16_t v = static_cast<int16_t>(s[0] | (s[1] << 8));
      acc += v / 32768.0;
    }
    clip.samples[i] = acc / channels;
  }
  if (clip.sample_rate != kSampleRate) {
    clip = resample_linear(clip, kSampleRate);
  }
  return clip;
}

void save_wav(const std::string& path, const AudioClip& clip) {
  const uint32_t n = static_cast<uint32_t>(clip.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out.append("RIFF");
  put_u32(out, 36 + 2 * n);
  out.append("WAVE");
  out.append("fmt ");
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);   // block align
  put_u16(out, 16);  // bits
  out.append("data");
  put_u32(out, 2 * n);
  for (uint32_t i = 0; i < n; ++i) {
    double v = std::clamp(clip.samples[i], -1.0, 1.0);
    put_u16(out, static_cast<uint16_t>(
                     static_cast<int16_t>(std::lround(v * 32767.0))));
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write wav file: " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("short write to wav file: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("cannot rename wav file into place: " + path);
  }
}

AudioClip resample_linear(const AudioClip& clip, int target_rate) {
  if (clip.sample_rate == target_rate) return clip;
  const size_t n = clip.samples.size();
  if (n == 0) return AudioClip{{}, target_rate};
  const double ratio =
      static_cast<double>(target_rate) / clip.sample_rate;
  const size_t out_n =
      static_cast<size_t>(std::llround(static_cast<double>(n) * ratio));
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(out_n);
  for (size_t i = 0; i < out_n; ++i) {
    const double pos = static_cast<double>(i) / ratio;
    size_t i0 = static_cast<size_t>(pos);
    if (i0 >= n - 1) {
      out.samples[i] = clip.samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    out.samples[i] =
        clip.samples[i0] * (1.0 - frac) + clip.samples[i0 + 1] * frac;
  }
  return out;
}

MelSpectrogram log_mel(const AudioClip& clip) {
  if (clip.sample_rate != kSampleRate) {
    throw std::invalid_argument("log_mel expects 16 kHz input, got " +
                                std::to_string(clip.sample_rate));
  }
  const size_t n = clip.samples.size();
  if (n < static_cast<size_t>(kFftSize)) {
    throw ClipTooShort("clip of " + std::to_string(n) +
                       " samples is shorter than one analysis window (" +
                       std::to_string(kFftSize) + ")");
  }

  // Reflective center padding by half a window on each side; the final
  // (ragged) frame is dropped, leaving floor(n / hop) frames.
  const int pad = kFftSize / 2;
  std::vector<double> x(n + 2 * pad);
  for (int i = 0; i < pad; ++i) x[i] = clip.samples[pad - i];
  std::copy(clip.samples.begin(), clip.samples.end(), x.begin() + pad);
  for (int i = 0; i < pad; ++i) x[pad + n + i] = clip.samples[n - 2 - i];
  const int frames = static_cast<int>(n / kHop);

  static const std::vector<double> hann = [] {
    std::vector<double> w(kFftSize);
    for (int i = 0; i < kFftSize; ++i) {
      w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / kFftSize);
    }
    return w;
  }();
  static const std::vector<double> bank = mel_filterbank();

  fftw_plan plan = shared_plan();
  std::vector<double> fft_in(kFftSize);
  std::vector<std::complex<double>> fft_out(kFreqBins);
  std::vector<double> power(kFreqBins);

  MelSpectrogram mel;
  mel.frames = frames;
  mel.values.assign(static_cast<size_t>(frames) * kMelBins, 0.0);
  mel.mask.assign(static_cast<size_t>(frames), 1);

  for (int t = 0; t < frames; ++t) {
    const double* seg = x.data() + static_cast<size_t>(t) * kHop;
    for (int i = 0; i < kFftSize; ++i) fft_in[i] = seg[i] * hann[i];
    fftw_execute_dft_r2c(plan, fft_in.data(),
                         reinterpret_cast<fftw_complex*>(fft_out.data()));
    for (int k = 0; k < kFreqBins; ++k) power[k] = std::norm(fft_out[k]);
    for (int b = 0; b < kMelBins; ++b) {
      const double* row = bank.data() + static_cast<size_t>(b) * kFreqBins;
      double acc = 0.0;
      for (int k = 0; k < kFreqBins; ++k) acc += row[k] * power[k];
      mel.at(t, b) = std::log10(std::max(acc, kLogFloor));
    }
  }

  double max_v = -1e300;
  for (double v : mel.values) max_v = std::max(max_v, v);
  for (double& v : mel.values) v = (std::max(v, max_v - 8.0) + 4.0) / 4.0;
  return mel;
}

MelSpectrogram spec_augment(const MelSpectrogram& mel,
                            const SpecAugmentConfig& cfg, std::mt19937& rng) {
  MelSpectrogram out = mel;
  const int valid = mel.valid_frames();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int t = 0; t < valid; ++t) {
    if (u01(rng) < cfg.time_mask_prob) {
      const int end = std::min(t + cfg.time_mask_span, valid);
      for (int j = t; j < end; ++j) {
        for (int b = 0; b < kMelBins; ++b) out.at(j, b) = 0.0;
      }
    }
  }
  for (int f = 0; f < kMelBins; ++f) {
    if (u01(rng) < cfg.freq_mask_prob) {
      const int end = std::min(f + cfg.freq_mask_span, kMelBins);
      for (int t = 0; t < valid; ++t) {
        for (int b = f; b < end; ++b) out.at(t, b) = 0.0;
      }
    }
  }
  return out;
}

}  // namespace phonokws
