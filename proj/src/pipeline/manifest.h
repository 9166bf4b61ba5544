#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace adatta {

// One corpus utterance. Paths are stored resolved (relative entries are
// interpreted against the manifest file's directory).
struct UtteranceRecord {
  std::string utterance_id;
  std::string audio_path;
  std::string speaker_id;
  std::vector<int64_t> phoneme_ids;
  std::vector<int64_t> durations;  // frames per phoneme
  std::optional<std::string> landmark_path;
  std::optional<std::string> transcript;
};

struct CorpusManifest {
  std::vector<UtteranceRecord> records;

  size_t size() const { return records.size(); }
  const UtteranceRecord& at(size_t i) const { return records[i]; }
  std::vector<std::string> speaker_ids() const;  // unique, in first-seen order
  std::vector<size_t> utterances_of(const std::string& speaker_id) const;
};

// Manifest file format: one JSON object per line. Keys:
//   id (string, required, unique)     audio (string, required, wav path)
//   speaker (string, required)        phonemes (int array, required)
//   durations (int array, required, same length as phonemes)
//   landmarks (string, optional)      transcript (string, optional)
// Blank lines and lines starting with '#' are skipped.
CorpusManifest load_corpus(const std::string& manifest_path);

void save_corpus(const std::string& manifest_path, const CorpusManifest& m);

}  // namespace adatta
