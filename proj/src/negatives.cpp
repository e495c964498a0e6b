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

#include "phonokws/negatives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace phonokws {

void PhonemeInventory::add(const PhonemeSymbol& s) {
  if (!contains(s)) symbols.push_back(s);
}

void PhonemeInventory::add_sequence(const PhonemeSequence& seq) {
  for (const auto& s : seq.symbols) add(s);
}

bool PhonemeInventory::contains(const PhonemeSymbol& s) const {
  return std::find(symbols.begin(), symbols.end(), s) != symbols.end();
}

void InventorySet::observe(const PhonemeSequence& seq) {
  by_lang_[seq.lang].add_sequence(seq);
  global_.add_sequence(seq);
}

const PhonemeInventory& InventorySet::for_language(
    const std::string& lang) const {
  auto it = by_lang_.find(lang);
  return it != by_lang_.end() ? it->second : global_;
}

EditOp draw_edit(const std::vector<PhonemeSymbol>& symbols,
                 const PhonemeInventory& inv, std::mt19937& rng) {
  if (inv.empty()) throw InventoryEmpty("no replacement symbols available");
  const int len = static_cast<int>(symbols.size());
  if (len == 0) throw std::invalid_argument("draw_edit: empty sequence");
  std::uniform_int_distribution<int> kind_pick(0, 2);
  // Insert is always satisfiable, so redrawing on a blocked delete (length
  // 1) or substitute (inventory holds only the displaced symbol) terminates.
  for (int attempt = 0; attempt < 1024; ++attempt) {
    const auto kind = static_cast<EditKind>(kind_pick(rng));
    switch (kind) {
      case EditKind::kInsert: {
        std::uniform_int_distribution<int> pos_pick(0, len);
        std::uniform_int_distribution<int> sym_pick(
            0, static_cast<int>(inv.size()) - 1);
        return {kind, pos_pick(rng), inv.symbols[sym_pick(rng)]};
      }
      case EditKind::kDelete: {
        if (len == 1) continue;  // a negative must never be empty
        std::uniform_int_distribution<int> pos_pick(0, len - 1);
        return {kind, pos_pick(rng), {}};
      }
      case EditKind::kSubstitute: {
        std::uniform_int_distribution<int> pos_pick(0, len - 1);
        const int pos = pos_pick(rng);
        std::vector<const PhonemeSymbol*> pool;
        for (const auto& s : inv.symbols) {
          if (!(s == symbols[pos])) pool.push_back(&s);
        }
        if (pool.empty()) continue;
        std::uniform_int_distribution<int> sym_pick(
            0, static_cast<int>(pool.size()) - 1);
        return {kind, pos, *pool[sym_pick(rng)]};
      }
    }
  }
  throw InventoryEmpty("no applicable edit for this sequence and inventory");
}

void apply_edit(std::vector<PhonemeSymbol>& symbols, const EditOp& op) {
  switch (op.kind) {
    case EditKind::kInsert:
      symbols.insert(symbols.begin() + op.position, op.symbol);
      break;
    case EditKind::kDelete:
      symbols.erase(symbols.begin() + op.position);
      break;
    case EditKind::kSubstitute:
      symbols[op.position] = op.symbol;
      break;
  }
}

PhonemeSequence minimal_pair(const PhonemeSequence& seq,
                             const PhonemeInventory& inv, std::mt19937& rng) {
  if (seq.empty()) throw std::invalid_argument("minimal_pair: empty sequence");
  PhonemeSequence out;
  out.lang = seq.lang;
  out.symbols = seq.symbols;
  apply_edit(out.symbols, draw_edit(out.symbols, inv, rng));
  out.raw = out.to_utf8();
  return out;
}

int corruption_edit_count(int length, double rate) {
  return std::max(1, static_cast<int>(std::floor(rate * length)));
}

PhonemeSequence corrupt_sentence(const PhonemeSequence& seq,
                                 const PhonemeInventory& inv,
                                 std::mt19937& rng, double rate) {
  if (seq.empty()) {
    throw std::invalid_argument("corrupt_sentence: empty sequence");
  }
  const int k = corruption_edit_count(static_cast<int>(seq.size()), rate);
  PhonemeSequence out;
  out.lang = seq.lang;
  // Sequential edits can cancel out (an inserted symbol deleted again), so
  // redraw the whole chain on the rare identity result.
  for (int attempt = 0; attempt < 1024; ++attempt) {
    out.symbols = seq.symbols;
    for (int i = 0; i < k; ++i) {
      apply_edit(out.symbols, draw_edit(out.symbols, inv, rng));
    }
    if (!out.same_symbols(seq)) {
      out.raw = out.to_utf8();
      return out;
    }
  }
  throw InventoryEmpty("corruption never left the input sequence");
}

}  // namespace phonokws
