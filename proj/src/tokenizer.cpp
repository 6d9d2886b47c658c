#include "covomix/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "covomix/errors.hpp"

namespace covomix::tok {

// ----------------------------- text -----------------------------

TextVocab::TextVocab() {
  for (const char* t : {kPadTok, kBosTok, kEosTok, kUnkTok, kSpkChangeTok, kLaughterTok}) {
    append(t);
  }
}

void TextVocab::append(const std::string& token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

TextVocab TextVocab::build(const std::vector<std::string>& corpus_texts) {
  TextVocab v;
  std::set<std::string> words;
  for (const auto& text : corpus_texts) {
    for (const auto& w : normalize_words(text)) {
      if (v.index_.count(w) == 0) words.insert(w);
    }
  }
  for (const auto& w : words) v.append(w);
  return v;
}

int TextVocab::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& TextVocab::token_of(int id) const {
  if (id < 0 || id >= size()) throw DataError("vocab: id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

void TextVocab::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("vocab: cannot write " + path);
  for (const auto& t : tokens_) os << t << "\n";
}

TextVocab TextVocab::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("vocab: cannot open " + path);
  TextVocab v;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    if (lineno < kNumSpecial) {
      if (line != v.tokens_[static_cast<std::size_t>(lineno)]) {
        throw DataError("vocab: special token mismatch on line " + std::to_string(lineno));
      }
    } else {
      v.append(line);
    }
    ++lineno;
  }
  if (lineno < kNumSpecial) throw DataError("vocab: missing special tokens in " + path);
  return v;
}

std::vector<std::string> normalize_words(const std::string& transcript) {
  std::vector<std::string> out;
  std::istringstream is(transcript);
  std::string raw;
  while (is >> raw) {
    if (raw == "|") {
      out.push_back(kSpkChangeTok);
      continue;
    }
    std::string lowered;
    lowered.reserve(raw.size());
    for (char c : raw) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lowered == kSpkChangeTok || lowered == kLaughterTok || lowered == kPadTok ||
        lowered == kBosTok || lowered == kEosTok || lowered == kUnkTok) {
      out.push_back(lowered);
      continue;
    }
    std::string word;
    for (char c : lowered) {
      if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'') word.push_back(c);
    }
    if (!word.empty()) out.push_back(word);
  }
  return out;
}

TextTokenSeq tokenize_text(const std::string& transcript, const TextVocab& vocab) {
  TextTokenSeq seq;
  seq.ids.push_back(kBosId);
  for (const auto& w : normalize_words(transcript)) seq.ids.push_back(vocab.id_of(w));
  seq.ids.push_back(kEosId);
  return seq;
}

std::string detokenize(const TextTokenSeq& seq, const TextVocab& vocab) {
  std::string out;
  for (int id : seq.ids) {
    if (id == kBosId || id == kEosId || id == kPadId) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token_of(id);
  }
  return out;
}

// ----------------------------- k-means codebook -----------------------------

namespace {

double sq_dist(const double* a, const double* b, int dim) {
  double acc = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

int nearest_centroid(const double* frame, const Codebook& cb) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cb.size(); ++k) {
    const double d = sq_dist(frame, cb.centroid(k), cb.dim);
    if (d < best_d) {  // strict: ties keep the lowest id
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

Codebook fit_codebook(const std::vector<const dsp::MelSpectrogram*>& mels, int k,
                      std::uint64_t seed, double power_floor,
                      std::vector<double>* objective_trace) {
  (void)seed;
  if (k < 1) throw DataError("fit_codebook: K must be >= 1");
  int dim = -1;
  std::size_t total = 0;
  for (const auto* mel : mels) {
    if (dim < 0) dim = mel->n_mels;
    if (mel->n_mels != dim) throw DimensionError("fit_codebook: inconsistent mel dims");
    total += static_cast<std::size_t>(mel->n_frames);
  }
  if (dim <= 0 || total < static_cast<std::size_t>(k)) {
    throw DataError("fit_codebook: need at least K frames (" + std::to_string(total) +
                    " < " + std::to_string(k) + ")");
  }

  // Deduplicate exact-equal frames into (frame, weight) pairs, ordered by
  // first appearance. Weighted updates make the fit invariant under
  // duplicating the dataset: doubling every weight scales each sum exactly.
  std::map<std::vector<double>, std::size_t> seen;
  std::vector<double> frames;
  std::vector<double> weights;
  std::vector<double> key(static_cast<std::size_t>(dim));
  for (const auto* mel : mels) {
    for (int f = 0; f < mel->n_frames; ++f) {
      std::copy(mel->row(f), mel->row(f) + dim, key.begin());
      auto [it, inserted] = seen.emplace(key, weights.size());
      if (inserted) {
        frames.insert(frames.end(), key.begin(), key.end());
        weights.push_back(1.0);
      } else {
        weights[it->second] += 1.0;
      }
    }
  }
  const std::size_t n_unique = weights.size();
  auto frame_at = [&](std::size_t i) { return frames.data() + i * static_cast<std::size_t>(dim); };

  // Maximin init: first center = frame nearest the weighted global mean,
  // then repeat "farthest remaining frame". Fully deterministic.
  std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
  double weight_total = 0.0;
  for (std::size_t i = 0; i < n_unique; ++i) {
    const double* f = frame_at(i);
    const double w = weights[i];
    for (int d = 0; d < dim; ++d) mean[static_cast<std::size_t>(d)] += w * f[d];
    weight_total += w;
  }
  for (auto& v : mean) v /= weight_total;

  Codebook cb;
  cb.dim = dim;
  cb.centroids.resize(static_cast<std::size_t>(k) * dim);

  std::size_t first = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n_unique; ++i) {
    const double d = sq_dist(frame_at(i), mean.data(), dim);
    if (d < best) {
      best = d;
      first = i;
    }
  }
  std::copy(frame_at(first), frame_at(first) + dim, cb.centroids.begin());

  std::vector<double> min_dist(n_unique, std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    const double* last = cb.centroid(c - 1);
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < n_unique; ++i) {
      min_dist[i] = std::min(min_dist[i], sq_dist(frame_at(i), last, dim));
      if (min_dist[i] > far_d) {
        far_d = min_dist[i];
        far = i;
      }
    }
    std::copy(frame_at(far), frame_at(far) + dim,
              cb.centroids.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c) * dim));
  }

  // Weighted Lloyd iterations until assignments are stable.
  std::vector<int> assign(n_unique, -1);
  std::vector<double> sums(static_cast<std::size_t>(k) * dim);
  std::vector<double> counts(static_cast<std::size_t>(k));
  for (int iter = 0; iter < 200; ++iter) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < n_unique; ++i) {
      const int a = nearest_centroid(frame_at(i), cb);
      objective += weights[i] * sq_dist(frame_at(i), cb.centroid(a), dim);
      if (a != assign[i]) {
        assign[i] = a;
        changed = true;
      }
    }
    if (objective_trace) objective_trace->push_back(objective);
    if (!changed && iter > 0) break;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0.0);
    for (std::size_t i = 0; i < n_unique; ++i) {
      const double* f = frame_at(i);
      const double w = weights[i];
      double* s = sums.data() + static_cast<std::size_t>(assign[i]) * dim;
      for (int d = 0; d < dim; ++d) s[d] += w * f[d];
      counts[static_cast<std::size_t>(assign[i])] += w;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0.0) {
        // Re-seed an empty cluster at the frame farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n_unique; ++i) {
          const double d = sq_dist(frame_at(i), cb.centroid(assign[i]), dim);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        std::copy(frame_at(far), frame_at(far) + dim,
                  cb.centroids.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c) * dim));
        continue;
      }
      const double inv_count = counts[static_cast<std::size_t>(c)];
      const double* s = sums.data() + static_cast<std::size_t>(c) * dim;
      double* ctr = cb.centroids.data() + static_cast<std::size_t>(c) * dim;
      for (int d = 0; d < dim; ++d) ctr[d] = s[d] / inv_count;
    }
  }

  std::vector<double> silence(static_cast<std::size_t>(dim), std::log(power_floor));
  cb.silence_id = nearest_centroid(silence.data(), cb);
  return cb;
}

double codebook_objective(const std::vector<const dsp::MelSpectrogram*>& mels,
                          const Codebook& cb) {
  double acc = 0.0;
  for (const auto* mel : mels) {
    for (int f = 0; f < mel->n_frames; ++f) {
      const int a = nearest_centroid(mel->row(f), cb);
      acc += sq_dist(mel->row(f), cb.centroid(a), cb.dim);
    }
  }
  return acc;
}

SemanticTokenStream speech_to_semantic(const dsp::MelSpectrogram& mel, const Codebook& cb) {
  if (mel.n_mels != cb.dim) {
    throw DimensionError("speech_to_semantic: mel dim " + std::to_string(mel.n_mels) +
                         " vs codebook dim " + std::to_string(cb.dim));
  }
  SemanticTokenStream out;
  out.vocab_size = cb.size();
  out.ids.resize(static_cast<std::size_t>(mel.n_frames));
  for (int f = 0; f < mel.n_frames; ++f) {
    out.ids[static_cast<std::size_t>(f)] = nearest_centroid(mel.row(f), cb);
  }
  return out;
}

// ----------------------------- binary io -----------------------------

namespace {

void wr_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t rd_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("token/codebook file: truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void Codebook::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("codebook: cannot write " + path);
  os.write("CVCB", 4);
  wr_u32(os, 1);
  wr_u32(os, static_cast<std::uint32_t>(dim));
  wr_u32(os, static_cast<std::uint32_t>(size()));
  wr_u32(os, static_cast<std::uint32_t>(silence_id));
  for (double v : centroids) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    wr_u32(os, static_cast<std::uint32_t>(bits & 0xffffffffULL));
    wr_u32(os, static_cast<std::uint32_t>(bits >> 32));
  }
}

Codebook Codebook::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("codebook: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CVCB", 4) != 0) throw DataError("codebook: bad magic");
  if (rd_u32(is) != 1) throw DataError("codebook: unsupported version");
  Codebook cb;
  cb.dim = static_cast<int>(rd_u32(is));
  const int k = static_cast<int>(rd_u32(is));
  cb.silence_id = static_cast<int>(rd_u32(is));
  cb.centroids.resize(static_cast<std::size_t>(k) * cb.dim);
  for (double& v : cb.centroids) {
    const std::uint64_t lo = rd_u32(is);
    const std::uint64_t hi = rd_u32(is);
    const std::uint64_t bits = lo | (hi << 32);
    std::memcpy(&v, &bits, 8);
  }
  return cb;
}

void write_tokens(const std::string& path, const SemanticTokenStream& stream) {
  if (stream.vocab_size > 0xffff) throw DataError("write_tokens: vocab too large for u16 ids");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("write_tokens: cannot write " + path);
  os.write("SEMT", 4);
  wr_u32(os, 1);
  wr_u32(os, static_cast<std::uint32_t>(stream.ids.size()));
  wr_u32(os, static_cast<std::uint32_t>(stream.vocab_size));
  for (int id : stream.ids) {
    if (id < 0 || id >= stream.vocab_size) throw DataError("write_tokens: id out of range");
    unsigned char b[2] = {static_cast<unsigned char>(id & 0xff),
                          static_cast<unsigned char>((id >> 8) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 2);
  }
}

SemanticTokenStream read_tokens(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_tokens: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SEMT", 4) != 0) throw DataError("read_tokens: bad magic");
  if (rd_u32(is) != 1) throw DataError("read_tokens: unsupported version");
  SemanticTokenStream out;
  const std::uint32_t n = rd_u32(is);
  out.vocab_size = static_cast<int>(rd_u32(is));
  out.ids.resize(n);
  for (auto& id : out.ids) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (!is) throw DataError("read_tokens: truncated");
    id = static_cast<int>(b[0]) | (static_cast<int>(b[1]) << 8);
  }
  return out;
}

}  // namespace covomix::tok
