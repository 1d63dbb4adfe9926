#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ordseq/tensor.hpp"

namespace ordseq {

// Word -> synonyms table with case-insensitive lookup. Keys are stored
// lowercase; entries never map to an empty list.
class SynonymLexicon {
 public:
  SynonymLexicon() = default;

  void add(const std::string& word, std::vector<std::string> synonyms);
  // nullptr when the word has no entry.
  const std::vector<std::string>* lookup(const std::string& word) const;
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::string, std::vector<std::string>> entries_;
};

struct AugmentConfig {
  double apply_probability = 0.5;
  double deletion_rate = 0.10;
  double replacement_rate = 0.10;

  void validate() const;
};

// Deletes floor(rate * n) uniformly chosen distinct words; texts of <= 1 word
// pass through, and at least one word always survives.
std::string random_deletion(const std::string& text, double rate, Rng& rng);

// Swaps one uniformly chosen pair of distinct word positions; texts of < 2
// words pass through. The word multiset is preserved exactly.
std::string random_swap(const std::string& text, Rng& rng);

// Replaces ceil(rate * m) of the m lexicon-covered words (at least one when
// m >= 1 and rate > 0) with a uniformly chosen synonym. Word count is
// preserved exactly.
std::string synonym_replacement(const std::string& text, double rate,
                                const SynonymLexicon& lexicon, Rng& rng);

// With probability cfg.apply_probability picks one of the three operations
// uniformly and applies it; otherwise returns the text unchanged.
std::string augment_post(const std::string& text, const AugmentConfig& cfg,
                         const SynonymLexicon& lexicon, Rng& rng);

}  // namespace ordseq
