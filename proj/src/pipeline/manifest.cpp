#include "pipeline/manifest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "core/errors.h"

namespace adatta {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> CorpusManifest::speaker_ids() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (seen.insert(r.speaker_id).second) out.push_back(r.speaker_id);
  }
  return out;
}

std::vector<size_t> CorpusManifest::utterances_of(
    const std::string& speaker_id) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < records.size(); ++i)
    if (records[i].speaker_id == speaker_id) out.push_back(i);
  return out;
}

CorpusManifest load_corpus(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw IoError("cannot open manifest: " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  auto resolve = [&base](const std::string& p) {
    fs::path path(p);
    return (path.is_absolute() ? path : base / path).string();
  };

  CorpusManifest m;
  std::set<std::string> ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw ManifestError("manifest line " + std::to_string(line_no) +
                          ": parse error: " + e.what());
    }
    UtteranceRecord r;
    try {
      r.utterance_id = j.at("id").get<std::string>();
      r.audio_path = resolve(j.at("audio").get<std::string>());
      r.speaker_id = j.at("speaker").get<std::string>();
      r.phoneme_ids = j.at("phonemes").get<std::vector<int64_t>>();
      r.durations = j.at("durations").get<std::vector<int64_t>>();
      if (j.contains("landmarks"))
        r.landmark_path = resolve(j.at("landmarks").get<std::string>());
      if (j.contains("transcript"))
        r.transcript = j.at("transcript").get<std::string>();
    } catch (const json::exception& e) {
      throw ManifestError("manifest line " + std::to_string(line_no) +
                          ": missing or malformed key: " + e.what());
    }
    if (!ids.insert(r.utterance_id).second) {
      throw ManifestError("duplicate utterance id '" + r.utterance_id + "'");
    }
    if (r.phoneme_ids.empty()) {
      throw ManifestError("record '" + r.utterance_id + "': empty phonemes");
    }
    if (r.durations.size() != r.phoneme_ids.size()) {
      throw ManifestError("record '" + r.utterance_id + "': durations length " +
                          std::to_string(r.durations.size()) +
                          " != phoneme count " +
                          std::to_string(r.phoneme_ids.size()));
    }
    if (!fs::exists(r.audio_path)) {
      throw ManifestError("record '" + r.utterance_id + "': missing audio " +
                          r.audio_path);
    }
    if (r.landmark_path && !fs::exists(*r.landmark_path)) {
      throw ManifestError("record '" + r.utterance_id +
                          "': missing landmarks " + *r.landmark_path);
    }
    m.records.push_back(std::move(r));
  }
  if (m.records.empty()) throw ManifestError("no records in " + manifest_path);
  return m;
}

void save_corpus(const std::string& manifest_path, const CorpusManifest& m) {
  std::ofstream f(manifest_path);
  if (!f) throw IoError("cannot write manifest: " + manifest_path);
  // stored paths are relative to the manifest's directory whenever the file
  // lives under it, which keeps a corpus directory relocatable
  const fs::path base = fs::absolute(fs::path(manifest_path)).parent_path();
  auto portable = [&base](const std::string& p) {
    std::error_code ec;
    const fs::path rel = fs::relative(fs::absolute(p), base, ec);
    if (ec || rel.empty() || rel.native().rfind("..", 0) == 0)
      return fs::absolute(p).string();
    return rel.string();
  };
  for (const auto& r : m.records) {
    json j;
    j["id"] = r.utterance_id;
    j["audio"] = portable(r.audio_path);
    j["speaker"] = r.speaker_id;
    j["phonemes"] = r.phoneme_ids;
    j["durations"] = r.durations;
    if (r.landmark_path) j["landmarks"] = portable(*r.landmark_path);
    if (r.transcript) j["transcript"] = *r.transcript;
    f << j.dump() << "\n";
  }
  if (!f) throw IoError("short write for manifest: " + manifest_path);
}

}  // namespace adatta
