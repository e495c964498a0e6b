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

#include "phonokws/ipa.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "phonokws/utf8.hpp"
#include "unicode_data.hpp"

#ifndef PHONOKWS_DATA_DIR
#define PHONOKWS_DATA_DIR "data"
#endif

namespace phonokws {

namespace {

// Strips a trailing '\r' so the tables load the same from CRLF checkouts.
std::string chomp(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

std::string default_data_dir() {
  if (const char* env = std::getenv("PHONOKWS_DATA_DIR")) return env;
  return PHONOKWS_DATA_DIR;
}

IpaTable IpaTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TableFormatError("cannot open IPA table: " + path);
  IpaTable table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = chomp(line);
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw TableFormatError(path + ":" + std::to_string(lineno) +
                             ": expected <char>\\t<category>");
    }
    const std::u32string ch = utf8_decode(line.substr(0, tab));
    const std::string cat = line.substr(tab + 1);
    if (ch.size() != 1) {
      throw TableFormatError(path + ":" + std::to_string(lineno) +
                             ": entry must be a single codepoint");
    }
    IpaCategory c;
    if (cat == "base") {
      c = IpaCategory::kBase;
    } else if (cat == "modifier") {
      c = IpaCategory::kModifier;
    } else if (cat == "stress") {
      c = IpaCategory::kStress;
    } else if (cat == "tie") {
      c = IpaCategory::kTie;
    } else {
      throw TableFormatError(path + ":" + std::to_string(lineno) +
                             ": unknown category '" + cat + "'");
    }
    table.chars_[ch[0]] = c;
    if (c == IpaCategory::kBase) table.base_chars_.push_back(ch[0]);
  }
  if (table.chars_.empty()) {
    throw TableFormatError("IPA table is empty: " + path);
  }
  return table;
}

IpaCategory IpaTable::category(char32_t cp) const {
  auto it = chars_.find(cp);
  if (it == chars_.end()) {
    throw TableFormatError("codepoint not in IPA whitelist: U+" +
                           std::to_string(static_cast<unsigned>(cp)));
  }
  return it->second;
}

std::u32string canonical_normalize(std::u32string_view text) {
  std::u32string out;
  out.reserve(text.size());
  for (char32_t cp : text) out += canonical_decompose_char(cp);
  // Canonical ordering: stable sort of each nonstarter run by combining
  // class (the standard bubble pass).
  for (std::size_t i = 1; i < out.size(); ++i) {
    const int cc = combining_class(out[i]);
    if (cc == 0) continue;
    std::size_t j = i;
    while (j > 0) {
      const int prev = combining_class(out[j - 1]);
      if (prev == 0 || prev <= cc) break;
      std::swap(out[j - 1], out[j]);
      --j;
    }
  }
  return out;
}

std::u32string PhonemeSymbol::to_u32() const {
  std::u32string out;
  out += base[0];
  if (tie != 0) {
    out += tie;
    out += base[1];
  }
  out += modifiers;
  return out;
}

std::string PhonemeSymbol::to_utf8() const { return utf8_encode(to_u32()); }

std::string PhonemeSequence::to_utf8() const {
  return serialize_phonemes(symbols);
}

std::string serialize_phonemes(const std::vector<PhonemeSymbol>& symbols) {
  std::string out;
  for (const auto& s : symbols) out += s.to_utf8();
  return out;
}

bool valid_language_tag(std::string_view code) {
  if (code == "und") return true;
  if (code.size() != 3) return false;
  return std::all_of(code.begin(), code.end(),
                     [](char c) { return c >= 'a' && c <= 'z'; });
}

namespace {

// Shared segmentation core. In lenient mode orphaned marks are dropped;
// in strict mode they throw.
std::vector<PhonemeSymbol> segment_impl(const IpaTable& table,
                                        std::u32string_view text,
                                        bool lenient) {
  std::vector<PhonemeSymbol> out;
  PhonemeSymbol cur;
  bool open = false;        // cur holds a base and accepts modifiers
  char32_t pending_tie = 0; // tie bar seen, waiting for the second base

  auto flush = [&] {
    if (open) {
      out.push_back(cur);
      cur = PhonemeSymbol{};
      open = false;
    }
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char32_t cp = text[i];
    if (!table.contains(cp)) {
      if (lenient) continue;
      throw TableFormatError("segment_phonemes: non-whitelisted codepoint U+" +
                             std::to_string(static_cast<unsigned>(cp)));
    }
    switch (table.category(cp)) {
      case IpaCategory::kBase:
        if (pending_tie != 0) {
          cur.base += cp;
          cur.tie = pending_tie;
          pending_tie = 0;
        } else {
          flush();
          cur.base = std::u32string(1, cp);
          open = true;
        }
        break;
      case IpaCategory::kModifier:
        if (pending_tie != 0) {
          if (!lenient) throw DanglingTieBar("tie bar lacks a following base");
          pending_tie = 0;  // drop the incomplete tie, keep the mark rule
          if (open) cur.modifiers += cp;
          break;
        }
        if (!open) {
          if (lenient) break;
          throw DanglingModifier("combining mark with no preceding base");
        }
        cur.modifiers += cp;
        break;
      case IpaCategory::kStress:
        if (pending_tie != 0) {
          if (!lenient) throw DanglingTieBar("tie bar lacks a following base");
          pending_tie = 0;
        }
        flush();
        out.push_back(PhonemeSymbol{std::u32string(1, cp), {}, 0});
        break;
      case IpaCategory::kTie:
        if (!open) {
          if (lenient) break;
          throw DanglingModifier("tie bar with no preceding base");
        }
        if (cur.tied() || pending_tie != 0) {
          if (lenient) break;
          throw DanglingTieBar("tie bar joining an already tied symbol");
        }
        if (!cur.modifiers.empty()) {
          // A tie after modifiers would interleave marks between the two
          // bases on re-serialization; treat the tie as orphaned.
          if (lenient) break;
          throw DanglingTieBar("tie bar after modifier marks");
        }
        pending_tie = cp;
        break;
    }
  }
  if (pending_tie != 0 && !lenient) {
    throw DanglingTieBar("tie bar at end of input");
  }
  flush();
  return out;
}

}  // namespace

PhonemeSequence normalize_ipa(const IpaTable& table, std::string_view raw,
                              std::string_view lang) {
  const std::u32string decomposed = canonical_normalize(utf8_decode(raw));
  PhonemeSequence seq;
  seq.symbols = segment_impl(table, decomposed, /*lenient=*/true);
  seq.lang = std::string(lang);
  seq.raw = std::string(raw);
  if (seq.symbols.empty()) {
    throw EmptyAfterNormalization("no IPA content in input: '" +
                                  std::string(raw) + "'");
  }
  return seq;
}

std::vector<PhonemeSymbol> segment_phonemes(const IpaTable& table,
                                            std::u32string_view normalized) {
  return segment_impl(table, normalized, /*lenient=*/false);
}

std::vector<PhonemeSymbol> segment_phonemes(const IpaTable& table,
                                            std::string_view normalized_utf8) {
  return segment_phonemes(table, utf8_decode(normalized_utf8));
}

std::size_t phoneme_edit_distance(const PhonemeSequence& a,
                                  const PhonemeSequence& b) {
  const auto& s = a.symbols;
  const auto& t = b.symbols;
  std::vector<std::size_t> prev(t.size() + 1), row(t.size() + 1);
  for (std::size_t j = 0; j <= t.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= s.size(); ++i) {
    row[0] = i;
    for (std::size_t j = 1; j <= t.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (s[i - 1] == t[j - 1] ? 0 : 1);
      row[j] = std::min({prev[j] + 1, row[j - 1] + 1, sub});
    }
    std::swap(prev, row);
  }
  return prev[t.size()];
}

XsampaTable XsampaTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TableFormatError("cannot open X-SAMPA table: " + path);
  XsampaTable table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = chomp(line);
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw TableFormatError(path + ":" + std::to_string(lineno) +
                             ": expected <xsampa>\\t<ipa>");
    }
    std::string src = line.substr(0, tab);
    std::string dst = line.substr(tab + 1);
    if (src.empty() || dst.empty()) {
      throw TableFormatError(path + ":" + std::to_string(lineno) +
                             ": empty field");
    }
    table.rows_.emplace_back(src, dst);
    table.to_ipa_.emplace(src, dst);
    table.to_xsampa_.emplace(dst, src);  // first row wins
    table.max_src_bytes_ = std::max(table.max_src_bytes_, src.size());
    table.max_dst_bytes_ = std::max(table.max_dst_bytes_, dst.size());
  }
  if (table.rows_.empty()) {
    throw TableFormatError("X-SAMPA table is empty: " + path);
  }
  return table;
}

std::string XsampaTable::to_ipa(std::string_view xsampa) const {
  std::string out;
  std::size_t i = 0;
  while (i < xsampa.size()) {
    const std::size_t limit = std::min(max_src_bytes_, xsampa.size() - i);
    bool matched = false;
    for (std::size_t len = limit; len >= 1; --len) {
      auto it = to_ipa_.find(std::string(xsampa.substr(i, len)));
      if (it != to_ipa_.end()) {
        out += it->second;
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) {
      throw UnknownXsampaToken("unknown X-SAMPA token at byte offset " +
                               std::to_string(i) + " in '" +
                               std::string(xsampa) + "'");
    }
  }
  return out;
}

std::string XsampaTable::to_xsampa(std::string_view ipa) const {
  std::string out;
  std::size_t i = 0;
  while (i < ipa.size()) {
    const std::size_t limit = std::min(max_dst_bytes_, ipa.size() - i);
    bool matched = false;
    for (std::size_t len = limit; len >= 1; --len) {
      auto it = to_xsampa_.find(std::string(ipa.substr(i, len)));
      if (it != to_xsampa_.end()) {
        out += it->second;
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) {
      throw UnknownXsampaToken("no X-SAMPA spelling for IPA at byte offset " +
                               std::to_string(i) + " in '" + std::string(ipa) +
                               "'");
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> XsampaTable::unambiguous_rows()
    const {
  std::unordered_map<std::string, int> target_count;
  for (const auto& [src, dst] : rows_) ++target_count[dst];
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [src, dst] : rows_) {
    if (target_count[dst] == 1) out.emplace_back(src, dst);
  }
  return out;
}

}  // namespace phonokws
