#pragma once

#include <string>
#include <vector>

#include "covomix/dataprep.hpp"

namespace covomix::pipeline {

// One prepared sample. Paths are relative to the manifest's directory.
struct ManifestEntry {
  std::string id;
  std::string kind;  // dialogue | sim_dialogue | monologue | monologue_short
  std::vector<std::string> speakers;  // sample channel order
  std::string text;                   // serialized transcript
  double duration_s = 0.0;
  std::string wav_mix;
  std::vector<std::string> wav_ch;
  std::string mel_mix;
  std::vector<std::string> mel_ch;
  std::vector<std::string> tokens_ch;          // filled by fit-codebook
  std::vector<prep::LaughterSpan> laughter;    // relative to sample start
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace covomix::pipeline
