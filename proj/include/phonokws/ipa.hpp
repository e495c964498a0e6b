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

#ifndef PHONOKWS_IPA_HPP_
#define PHONOKWS_IPA_HPP_

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "phonokws/error.hpp"

namespace phonokws {

PHONOKWS_DEFINE_ERROR(EmptyAfterNormalization);
PHONOKWS_DEFINE_ERROR(DanglingModifier);
PHONOKWS_DEFINE_ERROR(DanglingTieBar);
PHONOKWS_DEFINE_ERROR(UnknownXsampaToken);
PHONOKWS_DEFINE_ERROR(TableFormatError);

enum class IpaCategory { kBase, kModifier, kStress, kTie };

// Character whitelist loaded from data/ipa_whitelist.tsv. Entries are in
// NFD form; lookups happen after canonical decomposition.
class IpaTable {
 public:
  static IpaTable load(const std::string& path);

  bool contains(char32_t cp) const { return chars_.count(cp) != 0; }
  IpaCategory category(char32_t cp) const;
  const std::vector<char32_t>& base_chars() const { return base_chars_; }

 private:
  std::unordered_map<char32_t, IpaCategory> chars_;
  std::vector<char32_t> base_chars_;
};

// One phoneme: a base character (two for a tie-bar pair) plus its trailing
// modifier marks. Stress marks are standalone symbols with an empty
// modifier list.
struct PhonemeSymbol {
  std::u32string base;       // one codepoint, or two when tie != 0
  std::u32string modifiers;  // ordered combining marks / modifier letters
  char32_t tie = 0;          // tie bar codepoint joining base[0] and base[1]

  bool tied() const { return tie != 0; }
  std::u32string to_u32() const;
  std::string to_utf8() const;
  bool operator==(const PhonemeSymbol&) const = default;
};

struct PhonemeSequence {
  std::vector<PhonemeSymbol> symbols;
  std::string lang = "und";  // ISO 639-3 or "und"
  std::string raw;           // original string before normalization

  std::size_t size() const { return symbols.size(); }
  bool empty() const { return symbols.empty(); }
  std::string to_utf8() const;
  bool same_symbols(const PhonemeSequence& other) const {
    return symbols == other.symbols;
  }
};

bool valid_language_tag(std::string_view code);

// Canonical decomposition (NFD) with combining-mark reordering.
std::u32string canonical_normalize(std::u32string_view text);

// Decomposes, strips non-whitelisted characters, drops orphaned modifiers
// and incomplete ties, and segments. Throws EmptyAfterNormalization when
// nothing survives.
PhonemeSequence normalize_ipa(const IpaTable& table, std::string_view raw,
                              std::string_view lang = "und");

// Strict segmentation of an already-normalized string. Orphaned marks are
// errors here, unlike in normalize_ipa.
std::vector<PhonemeSymbol> segment_phonemes(const IpaTable& table,
                                            std::u32string_view normalized);
std::vector<PhonemeSymbol> segment_phonemes(const IpaTable& table,
                                            std::string_view normalized_utf8);

std::string serialize_phonemes(const std::vector<PhonemeSymbol>& symbols);

// Levenshtein distance over PhonemeSymbol units, unit edit costs.
std::size_t phoneme_edit_distance(const PhonemeSequence& a,
                                  const PhonemeSequence& b);

// X-SAMPA conversion table loaded from data/xsampa_ipa.tsv.
class XsampaTable {
 public:
  static XsampaTable load(const std::string& path);

  // Greedy longest-match left to right. Unknown input throws
  // UnknownXsampaToken with the byte offset in the message.
  std::string to_ipa(std::string_view xsampa) const;

  // Inverse mapping; the first table row wins when one IPA string has
  // several X-SAMPA spellings.
  std::string to_xsampa(std::string_view ipa) const;

  // Rows whose IPA target has exactly one X-SAMPA spelling; these are the
  // ones the round trip is guaranteed to restore.
  std::vector<std::pair<std::string, std::string>> unambiguous_rows() const;

 private:
  std::vector<std::pair<std::string, std::string>> rows_;
  std::unordered_map<std::string, std::string> to_ipa_;
  std::unordered_map<std::string, std::string> to_xsampa_;
  std::size_t max_src_bytes_ = 0;
  std::size_t max_dst_bytes_ = 0;
};

// Data directory resolution: $PHONOKWS_DATA_DIR when set, otherwise the
// compiled-in default (the source tree's data/ directory).
std::string default_data_dir();

}  // namespace phonokws

#endif  // PHONOKWS_IPA_HPP_
