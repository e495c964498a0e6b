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

#include "phonokws/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <stdexcept>

namespace phonokws {

namespace {

constexpr char kMagic[4] = {'C', 'I', 'P', 'A'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

void put_f32(std::string& out, float v) {
  static_assert(sizeof(float) == 4);
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

struct StoreReader {
  const unsigned char* data;
  size_t size;
  size_t pos = 0;
  void need(size_t n) const {
    if (pos + n > size) throw TruncatedFile("embedding store ends early");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
    }
    pos += 4;
    return v;
  }
  float f32() {
    need(4);
    float v;
    std::memcpy(&v, data + pos, 4);
    pos += 4;
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

int EmbeddingStore::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? -1 : it->second;
}

EmbeddingStore build_store(const std::vector<Embedding>& embeddings) {
  if (embeddings.empty()) {
    throw std::invalid_argument("build_store: no embeddings");
  }
  const int dim = static_cast<int>(embeddings.front().vector.size());
  const Modality modality = embeddings.front().modality;
  if (dim < 1) throw std::invalid_argument("build_store: empty vectors");

  EmbeddingStore store;
  store.modality_ = modality;
  store.matrix_.resize(static_cast<int>(embeddings.size()), dim);
  for (int i = 0; i < static_cast<int>(embeddings.size()); ++i) {
    const Embedding& e = embeddings[i];
    if (static_cast<int>(e.vector.size()) != dim) {
      throw DimMismatch("build_store: embedding '" + e.id + "' has dim " +
                        std::to_string(e.vector.size()) + ", expected " +
                        std::to_string(dim));
    }
    if (e.modality != modality) {
      throw std::invalid_argument("build_store: mixed modalities");
    }
    const double norm = e.vector.norm();
    if (norm < 1e-12) {
      throw std::invalid_argument("build_store: zero-norm embedding '" +
                                  e.id + "'");
    }
    if (!store.index_.emplace(e.id, i).second) {
      throw DuplicateId("build_store: duplicate id '" + e.id + "'");
    }
    store.ids_.push_back(e.id);
    for (int j = 0; j < dim; ++j) {
      // Round to the float32 grid so persistence is bitwise.
      store.matrix_(i, j) =
          static_cast<double>(static_cast<float>(e.vector(j) / norm));
    }
  }
  return store;
}

RetrievalResult search(const EmbeddingStore& store, const Embedding& query,
                       int k) {
  if (static_cast<int>(query.vector.size()) != store.dim()) {
    throw DimMismatch("search: query dim " +
                      std::to_string(query.vector.size()) + " vs store dim " +
                      std::to_string(store.dim()));
  }
  if (k < 1) throw std::invalid_argument("search: k must be >= 1");
  const double norm = query.vector.norm();
  if (norm < 1e-12) throw std::invalid_argument("search: zero-norm query");
  const Eigen::VectorXd qn = query.vector / norm;

  const int n = store.size();
  std::vector<double> scores(n);
  for (int i = 0; i < n; ++i) {
    scores[i] = std::clamp(store.matrix().row(i).dot(qn), -1.0, 1.0);
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return store.ids()[a] < store.ids()[b];
  });

  RetrievalResult result;
  result.query_id = query.id;
  const int take = std::min(k, n);
  result.ranked.reserve(take);
  for (int r = 0; r < take; ++r) {
    result.ranked.push_back({store.ids()[order[r]], scores[order[r]]});
  }
  return result;
}

void save_store(const EmbeddingStore& store, const std::string& path) {
  static_assert(std::endian::native == std::endian::little,
                "store writer assumes a little-endian host");
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  out.push_back(static_cast<char>(static_cast<uint8_t>(store.modality())));
  put_u32(out, static_cast<uint32_t>(store.dim()));
  put_u32(out, static_cast<uint32_t>(store.size()));
  for (const std::string& id : store.ids()) {
    put_u32(out, static_cast<uint32_t>(id.size()));
    out += id;
  }
  const Eigen::MatrixXd& m = store.matrix();
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      put_f32(out, static_cast<float>(m(i, j)));
    }
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write store: " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("short write to store: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("cannot rename store into place: " + path);
  }
}

EmbeddingStore load_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TruncatedFile("cannot open store: " + path);
  std::string raw((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  StoreReader r{reinterpret_cast<const unsigned char*>(raw.data()),
                raw.size()};
  if (raw.size() < 4) throw TruncatedFile("store shorter than its magic");
  const std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw BadMagic("not an embedding store: bad magic");
  }
  const uint32_t version = r.u32();
  if (version != kVersion) {
    throw VersionUnsupported("unsupported store version " +
                             std::to_string(version));
  }
  const uint8_t modality_byte = static_cast<uint8_t>(r.bytes(1)[0]);
  if (modality_byte > 1) {
    throw BadMagic("invalid modality byte " + std::to_string(modality_byte));
  }
  const uint32_t dim = r.u32();
  const uint32_t count = r.u32();
  if (dim < 1 || count < 1) throw BadMagic("empty store dimensions");

  EmbeddingStore store;
  store.modality_ = static_cast<Modality>(modality_byte);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t len = r.u32();
    std::string id = r.bytes(len);
    if (!store.index_.emplace(id, static_cast<int>(i)).second) {
      throw DuplicateId("store contains duplicate id '" + id + "'");
    }
    store.ids_.push_back(std::move(id));
  }
  store.matrix_.resize(static_cast<int>(count), static_cast<int>(dim));
  for (uint32_t i = 0; i < count; ++i) {
    for (uint32_t j = 0; j < dim; ++j) {
      store.matrix_(static_cast<int>(i), static_cast<int>(j)) =
          static_cast<double>(r.f32());
    }
  }
  return store;
}

}  // namespace phonokws
