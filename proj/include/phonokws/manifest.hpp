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

#ifndef PHONOKWS_MANIFEST_HPP_
#define PHONOKWS_MANIFEST_HPP_

#include <string>
#include <vector>

#include "phonokws/error.hpp"
#include "phonokws/ipa.hpp"

namespace phonokws {

PHONOKWS_DEFINE_ERROR(ManifestParseError);

// One dataset row: a clip, its phonemic transcription, and its split.
// `audio` is a path relative to the manifest's directory (or to the root
// passed to validate_manifest). `text` and `duration` are optional;
// duration < 0 means absent.
struct ManifestRecord {
  std::string audio;
  std::string ipa;
  std::string lang = "und";
  std::string split;  // "train", "dev", or "test"
  std::string text;
  double duration = -1.0;

  bool has_duration() const { return duration >= 0.0; }
};

// Strict reader: one JSON object per non-blank line. Throws
// ManifestParseError naming the first offending line. Unknown keys are
// ignored here; validate_manifest reports them.
std::vector<ManifestRecord> load_manifest(const std::string& path);

// Writes one JSON object per record with a stable key order
// (audio, ipa, lang, split, then text/duration when present).
// Atomic: writes a temp file in the target directory, then renames.
void save_manifest(const std::vector<ManifestRecord>& records,
                   const std::string& path);

struct ManifestIssue {
  int line = 0;  // 1-based line number in the manifest file
  std::string message;
};

struct LanguageTotal {
  std::string lang;
  int records = 0;
  double duration_seconds = 0.0;  // summed over records that carry one
};

struct ManifestReport {
  int total = 0;     // non-blank lines seen
  int accepted = 0;  // records passing every check
  std::vector<LanguageTotal> per_language;  // sorted by language tag
  std::vector<ManifestIssue> issues;        // in line order

  bool ok() const { return issues.empty(); }
  std::string to_text() const;
};

// Lint pass: parses every line, checks required fields, split values,
// language tags, IPA normalizability, and that each audio path exists
// under `audio_root` (empty = the manifest's own directory). Collects
// problems instead of throwing; per-language totals cover accepted
// records only.
ManifestReport validate_manifest(const std::string& path,
                                 const IpaTable& table,
                                 const std::string& audio_root = "");

// Word-frequency curation for word-level manifests. Records are grouped
// by (lang, ipa); groups with fewer than `min_freq` records are dropped
// entirely, and groups with more than `cap` records are down-sampled to
// exactly `cap` uniformly at random. Surviving records keep their input
// order. Deterministic under `seed`.
std::vector<ManifestRecord> filter_manifest(
    const std::vector<ManifestRecord>& records, int min_freq = 10,
    int cap = 10, unsigned seed = 0);

}  // namespace phonokws

#endif  // PHONOKWS_MANIFEST_HPP_
