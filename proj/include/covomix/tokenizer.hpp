#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "covomix/dsp.hpp"

namespace covomix::tok {

// Reserved text-token ids. The vocab file lists tokens one per line and the
// id is the line number, so these six always occupy the first six lines.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kSpkChangeId = 4;
inline constexpr int kLaughterId = 5;
inline constexpr int kNumSpecial = 6;

inline constexpr const char* kPadTok = "<pad>";
inline constexpr const char* kBosTok = "<bos>";
inline constexpr const char* kEosTok = "<eos>";
inline constexpr const char* kUnkTok = "<unk>";
inline constexpr const char* kSpkChangeTok = "[spkchange]";
inline constexpr const char* kLaughterTok = "[laughter]";

class TextVocab {
 public:
  TextVocab();  // specials only

  // Specials plus the sorted unique normalized words of the corpus.
  static TextVocab build(const std::vector<std::string>& corpus_texts);

  int id_of(const std::string& token) const;  // kUnkId when unknown
  const std::string& token_of(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  void save(const std::string& path) const;
  static TextVocab load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
  void append(const std::string& token);
};

struct TextTokenSeq {
  std::vector<int> ids;  // BOS ... EOS
};

// Lowercased word-level normalization. "|" maps to [spkchange]; the bracket
// specials pass through atomically; other words keep only [a-z0-9'].
std::vector<std::string> normalize_words(const std::string& transcript);

TextTokenSeq tokenize_text(const std::string& transcript, const TextVocab& vocab);
std::string detokenize(const TextTokenSeq& seq, const TextVocab& vocab);

// ----------------------------- acoustic quantizer -----------------------------

struct Codebook {
  int dim = 0;
  std::vector<double> centroids;  // K × dim, row-major
  int silence_id = -1;            // token of the all-floor mel frame

  int size() const { return dim == 0 ? 0 : static_cast<int>(centroids.size()) / dim; }
  const double* centroid(int k) const { return centroids.data() + static_cast<std::size_t>(k) * dim; }

  void save(const std::string& path) const;
  static Codebook load(const std::string& path);
};

struct SemanticTokenStream {
  std::vector<int> ids;  // one per 20 ms mel frame
  int vocab_size = 0;
  int channel = 0;
};

// Lloyd's k-means over all mel frames with a farthest-point (maximin) init
// seeded at the frame nearest the global mean. The init and the empty-cluster
// rule are deterministic, so the result is independent of `seed` and
// invariant under duplicating every frame; the seed parameter is kept for
// interface stability. K=1 degenerates to the global mean. When
// `objective_trace` is given it receives the k-means objective after every
// Lloyd iteration (a non-increasing sequence).
Codebook fit_codebook(const std::vector<const dsp::MelSpectrogram*>& mels, int k,
                      std::uint64_t seed, double power_floor = 1e-10,
                      std::vector<double>* objective_trace = nullptr);

// Sum of squared frame-to-centroid distances (the k-means objective).
double codebook_objective(const std::vector<const dsp::MelSpectrogram*>& mels,
                          const Codebook& cb);

// Per-frame nearest centroid (squared Euclidean, ties to the lowest id).
SemanticTokenStream speech_to_semantic(const dsp::MelSpectrogram& mel, const Codebook& cb);

// Token file: magic "SEMT", version u32, n_tokens u32, vocab u32, u16 LE ids.
void write_tokens(const std::string& path, const SemanticTokenStream& stream);
SemanticTokenStream read_tokens(const std::string& path);

}  // namespace covomix::tok
