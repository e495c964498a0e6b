#!/usr/bin/env python3
"""Regenerates src/unicode_data.cpp from the Python unicodedata module.

Covers codepoints below U+3000, which includes every script block that
occurs in phonemic transcriptions (Latin, Greek, IPA extensions, spacing
modifiers, combining diacritics and their supplement).
"""
import sys
import unicodedata

LIMIT = 0x3000

HEADER = """// Copyright 2026  The phonokws authors
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

// Generated by scripts/gen_unicode_tables.py (Unicode %s). Do not edit.

#include "unicode_data.hpp"

#include <algorithm>

namespace phonokws {
namespace {
"""


def main():
    decomp_entries = []   # (cp, [expansion cps])
    ccc_entries = []      # (cp, class)
    for cp in range(LIMIT):
        ch = chr(cp)
        d = unicodedata.normalize("NFD", ch)
        if d != ch:
            decomp_entries.append((cp, [ord(c) for c in d]))
        cc = unicodedata.combining(ch)
        if cc:
            ccc_entries.append((cp, cc))

    out = [HEADER % unicodedata.unidata_version]

    pool = []
    index = []
    for cp, exp in decomp_entries:
        index.append((cp, len(pool), len(exp)))
        pool.extend(exp)

    out.append("constexpr char32_t kDecompPool[] = {\n")
    for i in range(0, len(pool), 12):
        out.append("    " + ", ".join("0x%04X" % c for c in pool[i:i + 12]) + ",\n")
    out.append("};\n\n")

    out.append("struct DecompIndex { char32_t cp; uint16_t offset; uint8_t len; };\n")
    out.append("constexpr DecompIndex kDecompIndex[] = {\n")
    for cp, off, ln in index:
        out.append("    {0x%04X, %d, %d},\n" % (cp, off, ln))
    out.append("};\n\n")

    out.append("struct CombiningEntry { char32_t cp; uint8_t cls; };\n")
    out.append("constexpr CombiningEntry kCombining[] = {\n")
    for i in range(0, len(ccc_entries), 6):
        row = ccc_entries[i:i + 6]
        out.append("    " + " ".join("{0x%04X, %d}," % e for e in row) + "\n")
    out.append("};\n\n")

    out.append("""}  // namespace

std::u32string canonical_decompose_char(char32_t cp) {
  auto it = std::lower_bound(
      std::begin(kDecompIndex), std::end(kDecompIndex), cp,
      [](const DecompIndex& e, char32_t c) { return e.cp < c; });
  if (it == std::end(kDecompIndex) || it->cp != cp) return std::u32string(1, cp);
  return std::u32string(kDecompPool + it->offset, it->len);
}

int combining_class(char32_t cp) {
  auto it = std::lower_bound(
      std::begin(kCombining), std::end(kCombining), cp,
      [](const CombiningEntry& e, char32_t c) { return e.cp < c; });
  if (it == std::end(kCombining) || it->cp != cp) return 0;
  return it->cls;
}

}  // namespace phonokws
""")
    sys.stdout.write("".join(out))


if __name__ == "__main__":
    main()
