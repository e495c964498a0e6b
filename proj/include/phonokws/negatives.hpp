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

#ifndef PHONOKWS_NEGATIVES_HPP_
#define PHONOKWS_NEGATIVES_HPP_

#include <map>
#include <random>
#include <string>
#include <vector>

#include "phonokws/error.hpp"
#include "phonokws/ipa.hpp"

namespace phonokws {

PHONOKWS_DEFINE_ERROR(InventoryEmpty);

enum class EditKind { kInsert, kDelete, kSubstitute };

// A single phoneme-level mutation. Insert places symbol before `position`
// (0..L valid); delete and substitute act on position 0..L-1, and a
// substitute symbol always differs from the one it replaces.
struct EditOp {
  EditKind kind;
  int position = 0;
  PhonemeSymbol symbol;  // insert / substitute payload
};

// Ordered, deduplicated pool of symbols eligible as replacements. Order is
// insertion order so uniform draws are reproducible across platforms.
struct PhonemeInventory {
  std::vector<PhonemeSymbol> symbols;

  void add(const PhonemeSymbol& s);
  void add_sequence(const PhonemeSequence& seq);
  bool contains(const PhonemeSymbol& s) const;
  bool empty() const { return symbols.empty(); }
  std::size_t size() const { return symbols.size(); }
};

// Per-language pools observed in training data; lookup for an unseen
// language falls back to the pooled global inventory.
class InventorySet {
 public:
  void observe(const PhonemeSequence& seq);
  const PhonemeInventory& for_language(const std::string& lang) const;
  const PhonemeInventory& global() const { return global_; }

 private:
  std::map<std::string, PhonemeInventory> by_lang_;
  PhonemeInventory global_;
};

// Draws one edit: kind uniform over insert/delete/substitute, position
// uniform over the valid range, payload uniform over the inventory (minus
// the displaced symbol for substitute). Delete is excluded at length 1, and
// an unsatisfiable substitute (every inventory symbol equals the original)
// is redrawn.
EditOp draw_edit(const std::vector<PhonemeSymbol>& symbols,
                 const PhonemeInventory& inv, std::mt19937& rng);

void apply_edit(std::vector<PhonemeSymbol>& symbols, const EditOp& op);

// One random edit: the result always differs from the input by phoneme edit
// distance exactly 1.
PhonemeSequence minimal_pair(const PhonemeSequence& seq,
                             const PhonemeInventory& inv, std::mt19937& rng);

// Edit count for a corrupted sentence: max(1, floor(rate * length)).
int corruption_edit_count(int length, double rate = 0.10);

// corruption_edit_count(L, rate) sequential random edits: distance from the
// input lands in [1, k] (later edits may partly undo earlier ones) and the
// result never equals the input.
PhonemeSequence corrupt_sentence(const PhonemeSequence& seq,
                                 const PhonemeInventory& inv,
                                 std::mt19937& rng, double rate = 0.10);

}  // namespace phonokws

#endif  // PHONOKWS_NEGATIVES_HPP_
