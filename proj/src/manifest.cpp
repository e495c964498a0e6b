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

#include "phonokws/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace phonokws {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

// Shared per-line decoder. Returns false and fills `error` instead of
// throwing so validate_manifest can keep going.
bool parse_record(const std::string& line, ManifestRecord* rec,
                  std::string* error, std::vector<std::string>* unknown) {
  json obj = json::parse(line, nullptr, false);
  if (obj.is_discarded()) {
    *error = "not a valid JSON object";
    return false;
  }
  if (!obj.is_object()) {
    *error = "line is not a JSON object";
    return false;
  }
  for (const char* key : {"audio", "ipa", "split"}) {
    if (!obj.contains(key)) {
      *error = std::string("missing required field \"") + key + "\"";
      return false;
    }
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string& key = it.key();
    if (key == "audio" || key == "ipa" || key == "lang" || key == "split" ||
        key == "text") {
      if (!it.value().is_string()) {
        *error = "field \"" + key + "\" must be a string";
        return false;
      }
    } else if (key == "duration") {
      if (!it.value().is_number()) {
        *error = "field \"duration\" must be a number";
        return false;
      }
    } else if (unknown != nullptr) {
      unknown->push_back(key);
    }
  }
  rec->audio = obj["audio"].get<std::string>();
  rec->ipa = obj["ipa"].get<std::string>();
  rec->lang = obj.value("lang", "und");
  rec->split = obj["split"].get<std::string>();
  rec->text = obj.value("text", "");
  rec->duration = obj.value("duration", -1.0);
  return true;
}

ordered_json to_json(const ManifestRecord& rec) {
  ordered_json obj;
  obj["audio"] = rec.audio;
  obj["ipa"] = rec.ipa;
  obj["lang"] = rec.lang;
  obj["split"] = rec.split;
  if (!rec.text.empty()) obj["text"] = rec.text;
  if (rec.has_duration()) obj["duration"] = rec.duration;
  return obj;
}

bool valid_split(const std::string& split) {
  return split == "train" || split == "dev" || split == "test";
}

}  // namespace

std::vector<ManifestRecord> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ManifestParseError("cannot open manifest: " + path);
  std::vector<ManifestRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    ManifestRecord rec;
    std::string error;
    if (!parse_record(line, &rec, &error, nullptr)) {
      throw ManifestParseError(path + ":" + std::to_string(line_no) + ": " +
                               error);
    }
    if (!valid_split(rec.split)) {
      throw ManifestParseError(path + ":" + std::to_string(line_no) +
                               ": split must be train|dev|test, got \"" +
                               rec.split + "\"");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_manifest(const std::vector<ManifestRecord>& records,
                   const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ManifestParseError("cannot write manifest: " + tmp);
    for (const ManifestRecord& rec : records) out << to_json(rec).dump() << "\n";
    out.flush();
    if (!out) throw ManifestParseError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw ManifestParseError("rename failed: " + path);
  }
}

std::string ManifestReport::to_text() const {
  std::ostringstream out;
  out << "records: " << accepted << "/" << total << " accepted\n";
  for (const LanguageTotal& lt : per_language) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", lt.duration_seconds);
    out << "lang " << lt.lang << ": " << lt.records << " records, " << buf
        << " s\n";
  }
  for (const ManifestIssue& issue : issues) {
    out << "line " << issue.line << ": " << issue.message << "\n";
  }
  return out.str();
}

ManifestReport validate_manifest(const std::string& path,
                                 const IpaTable& table,
                                 const std::string& audio_root) {
  namespace fs = std::filesystem;
  std::ifstream in(path);
  if (!in) throw ManifestParseError("cannot open manifest: " + path);
  const fs::path root =
      audio_root.empty() ? fs::path(path).parent_path() : fs::path(audio_root);

  ManifestReport report;
  std::map<std::string, LanguageTotal> totals;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    ++report.total;
    ManifestRecord rec;
    std::string error;
    std::vector<std::string> unknown;
    if (!parse_record(line, &rec, &error, &unknown)) {
      report.issues.push_back({line_no, error});
      continue;
    }
    bool ok = true;
    auto flag = [&](const std::string& message) {
      report.issues.push_back({line_no, message});
      ok = false;
    };
    for (const std::string& key : unknown) flag("unknown field \"" + key + "\"");
    if (!valid_split(rec.split)) {
      flag("split must be train|dev|test, got \"" + rec.split + "\"");
    }
    if (!valid_language_tag(rec.lang)) {
      flag("invalid language tag \"" + rec.lang + "\"");
    }
    if (rec.audio.empty()) {
      flag("empty audio path");
    } else if (!fs::exists(root / rec.audio)) {
      flag("audio file not found: " + (root / rec.audio).string());
    }
    try {
      normalize_ipa(table, rec.ipa, rec.lang);
    } catch (const std::exception& e) {
      flag("transcription rejected: " + std::string(e.what()));
    }
    if (rec.duration != -1.0 &&
        (!std::isfinite(rec.duration) || rec.duration < 0.0)) {
      flag("duration must be a finite non-negative number");
    }
    if (!ok) continue;
    ++report.accepted;
    LanguageTotal& lt = totals[rec.lang];
    lt.lang = rec.lang;
    ++lt.records;
    if (rec.has_duration()) lt.duration_seconds += rec.duration;
  }
  for (const auto& [lang, lt] : totals) report.per_language.push_back(lt);
  return report;
}

std::vector<ManifestRecord> filter_manifest(
    const std::vector<ManifestRecord>& records, int min_freq, int cap,
    unsigned seed) {
  if (min_freq < 0) throw std::invalid_argument("filter_manifest: min_freq < 0");
  if (cap < 1) throw std::invalid_argument("filter_manifest: cap < 1");

  // Group indices by (lang, ipa) in first-appearance order so the rng
  // consumption order never depends on hash iteration.
  std::vector<std::vector<int>> groups;
  std::unordered_map<std::string, int> group_of;
  for (int i = 0; i < static_cast<int>(records.size()); ++i) {
    const std::string key = records[i].lang + '\x1f' + records[i].ipa;
    auto [it, inserted] = group_of.emplace(key, static_cast<int>(groups.size()));
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }

  std::mt19937 rng(seed);
  std::vector<char> keep(records.size(), 0);
  for (const std::vector<int>& group : groups) {
    const int count = static_cast<int>(group.size());
    if (count < min_freq) continue;
    if (count <= cap) {
      for (int idx : group) keep[idx] = 1;
      continue;
    }
    std::vector<int> order(group.begin(), group.end());
    std::shuffle(order.begin(), order.end(), rng);
    for (int j = 0; j < cap; ++j) keep[order[j]] = 1;
  }

  std::vector<ManifestRecord> out;
  for (size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) out.push_back(records[i]);
  }
  return out;
}

}  // namespace phonokws
