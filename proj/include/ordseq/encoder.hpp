#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ordseq/corpus.hpp"

namespace ordseq {

// Pluggable, frozen post-embedding provider. `hashed_ngram` is the built-in
// signed feature-hashing encoder; `precomputed` looks vectors up by the
// 64-bit FNV-1a content hash of the post text (see encoder docs).
struct EncoderSpec {
  enum class Kind { hashed_ngram, precomputed };

  Kind kind = Kind::hashed_ngram;
  std::size_t dim = 64;
  std::vector<int> ngram_orders = {1, 2};  // hashed_ngram only
  std::uint64_t hash_seed = 0x0ddba11;     // hashed_ngram only
  std::string vectors_path;                // precomputed only

  void validate() const;
};

class Encoder {
 public:
  explicit Encoder(EncoderSpec spec);

  const EncoderSpec& spec() const { return spec_; }
  std::size_t dim() const { return spec_.dim; }

  // hashed_ngram: lowercase, whitespace-tokenize, signed-hash every n-gram
  // into [0, dim), then scale to unit L2 norm (a post with no tokens stays
  // the zero vector). precomputed: exact lookup by content hash; a miss
  // throws, naming the hash.
  std::vector<double> encode_post(const std::string& text) const;

  // Writes 5 row vectors of length dim into `out` (row-major) and the
  // validity mask into `mask`; rows at positions >= n_valid are zero.
  void encode_sequence(const SequenceRecord& rec, double* out, double* mask) const;

 private:
  EncoderSpec spec_;
  std::unordered_map<std::uint64_t, std::vector<double>> table_;
};

// Loads a precomputed-vectors file: one JSON object per line,
// {"hash": "<16 hex digits>", "vector": [dim doubles]}.
std::unordered_map<std::uint64_t, std::vector<double>> load_vector_table(const std::string& path,
                                                                         std::size_t dim);

}  // namespace ordseq
