#include "covomix/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "covomix/errors.hpp"

namespace covomix::pipeline {

using nlohmann::json;

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path);
  if (!os) throw DataError("manifest: cannot write " + path);
  for (const auto& e : entries) {
    json j;
    j["id"] = e.id;
    j["kind"] = e.kind;
    j["speakers"] = e.speakers;
    j["text"] = e.text;
    j["duration_s"] = e.duration_s;
    if (!e.wav_mix.empty()) j["wav_mix"] = e.wav_mix;
    if (!e.wav_ch.empty()) j["wav_ch"] = e.wav_ch;
    if (!e.mel_mix.empty()) j["mel_mix"] = e.mel_mix;
    if (!e.mel_ch.empty()) j["mel_ch"] = e.mel_ch;
    if (!e.tokens_ch.empty()) j["tokens_ch"] = e.tokens_ch;
    if (!e.laughter.empty()) {
      json spans = json::array();
      for (const auto& l : e.laughter) spans.push_back({l.start_s, l.end_s});
      j["laughter"] = spans;
    }
    os << j.dump() << "\n";
  }
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("manifest: cannot open " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.kind = j.at("kind").get<std::string>();
      e.speakers = j.at("speakers").get<std::vector<std::string>>();
      e.text = j.at("text").get<std::string>();
      e.duration_s = j.at("duration_s").get<double>();
      if (j.contains("wav_mix")) e.wav_mix = j.at("wav_mix").get<std::string>();
      if (j.contains("wav_ch")) e.wav_ch = j.at("wav_ch").get<std::vector<std::string>>();
      if (j.contains("mel_mix")) e.mel_mix = j.at("mel_mix").get<std::string>();
      if (j.contains("mel_ch")) e.mel_ch = j.at("mel_ch").get<std::vector<std::string>>();
      if (j.contains("tokens_ch")) e.tokens_ch = j.at("tokens_ch").get<std::vector<std::string>>();
      if (j.contains("laughter")) {
        for (const auto& span : j.at("laughter")) {
          e.laughter.push_back({span.at(0).get<double>(), span.at(1).get<double>()});
        }
      }
      out.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed manifest: " + ex.what());
    }
  }
  return out;
}

}  // namespace covomix::pipeline
