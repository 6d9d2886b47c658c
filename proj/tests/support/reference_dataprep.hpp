#pragma once

// Independent straight-line re-implementation of the dialogue segmentation
// cache loop, used as an oracle. Kept deliberately primitive: parallel
// arrays, index loops, no shared helpers with the library. It encodes the
// same two documented choices as the implementation: the over-long check
// runs before the flush check, and in both reset branches the arriving
// utterance seeds the fresh cache.

#include <algorithm>
#include <string>
#include <vector>

namespace refprep {

struct RawUtt {
  std::string speaker;
  double start = 0.0;
  double end = 0.0;
  std::string text;
};

// Returns groups of indices into the (sorted) input; sorting is done here.
inline std::vector<std::vector<RawUtt>> segment_dialogues(std::vector<RawUtt> utts,
                                                          double max_duration) {
  std::sort(utts.begin(), utts.end(), [](const RawUtt& a, const RawUtt& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.speaker != b.speaker) return a.speaker < b.speaker;
    return a.end < b.end;
  });

  std::vector<std::vector<RawUtt>> output;
  std::vector<RawUtt> cache;
  std::vector<std::string> spkcache;

  for (std::size_t idx = 0; idx < utts.size(); ++idx) {
    const RawUtt& u = utts[idx];
    if (cache.empty()) {
      cache.push_back(u);
      spkcache.push_back(u.speaker);
      continue;
    }
    const double cache_span = cache[cache.size() - 1].end - cache[0].start;
    if (cache_span > max_duration) {
      cache.clear();
      spkcache.clear();
      cache.push_back(u);
      spkcache.push_back(u.speaker);
      continue;
    }
    int distinct = 0;
    for (std::size_t i = 0; i < spkcache.size(); ++i) {
      bool seen_before = false;
      for (std::size_t j = 0; j < i; ++j) {
        if (spkcache[j] == spkcache[i]) seen_before = true;
      }
      if (!seen_before) ++distinct;
    }
    if (u.start > cache[cache.size() - 1].end && distinct > 1) {
      output.push_back(cache);
      cache.clear();
      spkcache.clear();
      cache.push_back(u);
      spkcache.push_back(u.speaker);
      continue;
    }
    cache.push_back(u);
    spkcache.push_back(u.speaker);
  }
  return output;
}

}  // namespace refprep
