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

#ifndef PHONOKWS_RETRIEVAL_HPP_
#define PHONOKWS_RETRIEVAL_HPP_

#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "phonokws/encoders.hpp"
#include "phonokws/error.hpp"

namespace phonokws {

PHONOKWS_DEFINE_ERROR(DuplicateId);
PHONOKWS_DEFINE_ERROR(DimMismatch);
PHONOKWS_DEFINE_ERROR(BadMagic);
PHONOKWS_DEFINE_ERROR(VersionUnsupported);
PHONOKWS_DEFINE_ERROR(TruncatedFile);

// Immutable collection of unit-normalized embeddings of one modality.
// Values sit on the float32 grid (normalization happens in double, then the
// result is rounded to float32) so that save/load round trips are bitwise.
class EmbeddingStore {
 public:
  int size() const { return static_cast<int>(ids_.size()); }
  int dim() const { return static_cast<int>(matrix_.cols()); }
  Modality modality() const { return modality_; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }  // N x dim
  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(int row) const { return ids_.at(row); }
  // Row index for an id, or -1 when absent.
  int find(const std::string& id) const;

 private:
  EmbeddingStore() = default;
  friend EmbeddingStore build_store(const std::vector<Embedding>& embeddings);
  friend EmbeddingStore load_store(const std::string& path);

  Eigen::MatrixXd matrix_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, int> index_;
  Modality modality_ = Modality::kSpeech;
};

struct ScoredCandidate {
  std::string id;
  double score;  // cosine, clamped to [-1, 1]
};

// Candidates in non-increasing score order; equal scores break toward the
// lexicographically smaller id so rankings are reproducible.
struct RetrievalResult {
  std::string query_id;
  std::vector<ScoredCandidate> ranked;
};

// L2-normalizes every vector and preserves insertion order. All embeddings
// must share one dimension and one modality and be non-zero; the list must
// be non-empty (std::invalid_argument otherwise).
EmbeddingStore build_store(const std::vector<Embedding>& embeddings);

// Exact top-k cosine search over every row; k is capped at store size.
// Requires k >= 1 and a non-zero query of matching dimension.
RetrievalResult search(const EmbeddingStore& store, const Embedding& query,
                       int k);

// Binary layout: magic "CIPA", u32 version (1), modality byte (0 speech /
// 1 phoneme), u32 dim, u32 count, then per id a u32 byte length plus UTF-8
// bytes, then count*dim float32 little-endian values in row-major order.
// save is atomic (temp file + rename); save -> load reproduces the store
// bitwise. load validates structure only (magic, version, modality byte,
// non-empty sizes, payload length, id uniqueness); values are trusted.
void save_store(const EmbeddingStore& store, const std::string& path);
EmbeddingStore load_store(const std::string& path);

}  // namespace phonokws

#endif  // PHONOKWS_RETRIEVAL_HPP_
