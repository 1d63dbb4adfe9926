#include "ordseq/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ordseq/text.hpp"

namespace ordseq {

namespace {

// floor/ceil with a tiny guard so rate * n lands on the intended integer
// (0.1 * 10 must count as 1, not 2).
std::size_t floor_count(double rate, std::size_t n) {
  return static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 1e-9));
}

std::size_t ceil_count(double rate, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9));
}

// k distinct indices drawn uniformly from [0, n), in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  std::vector<std::size_t> picked;
  picked.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(pool[i], pool[j]);
    picked.push_back(pool[i]);
  }
  return picked;
}

}  // namespace

void SynonymLexicon::add(const std::string& word, std::vector<std::string> synonyms) {
  if (synonyms.empty()) {
    throw std::invalid_argument("lexicon entry '" + word + "' has no synonyms");
  }
  entries_[to_lower(word)] = std::move(synonyms);
}

const std::vector<std::string>* SynonymLexicon::lookup(const std::string& word) const {
  auto it = entries_.find(to_lower(word));
  return it == entries_.end() ? nullptr : &it->second;
}

void AugmentConfig::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(apply_probability) || !in01(deletion_rate) || !in01(replacement_rate)) {
    throw std::invalid_argument("augment config: probabilities and rates must lie in [0, 1]");
  }
}

std::string random_deletion(const std::string& text, double rate, Rng& rng) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("random_deletion: rate outside [0, 1]");
  std::vector<std::string> words = split_words(text);
  const std::size_t n = words.size();
  if (n <= 1) return text;
  std::size_t k = floor_count(rate, n);
  if (k == 0) return text;
  k = std::min(k, n - 1);  // never empty the post

  std::vector<std::size_t> drop = sample_without_replacement(n, k, rng);
  std::vector<bool> dead(n, false);
  for (std::size_t i : drop) dead[i] = true;
  std::vector<std::string> kept;
  kept.reserve(n - k);
  for (std::size_t i = 0; i < n; ++i) {
    if (!dead[i]) kept.push_back(std::move(words[i]));
  }
  return join_words(kept);
}

std::string random_swap(const std::string& text, Rng& rng) {
  std::vector<std::string> words = split_words(text);
  const std::size_t n = words.size();
  if (n < 2) return text;
  const std::size_t i = rng.below(n);
  std::size_t j = rng.below(n - 1);
  if (j >= i) ++j;
  std::swap(words[i], words[j]);
  return join_words(words);
}

std::string synonym_replacement(const std::string& text, double rate,
                                const SynonymLexicon& lexicon, Rng& rng) {
  if (rate < 0.0 || rate > 1.0) {
    throw std::invalid_argument("synonym_replacement: rate outside [0, 1]");
  }
  if (rate == 0.0 || lexicon.empty()) return text;
  std::vector<std::string> words = split_words(text);
  std::vector<std::size_t> covered;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (lexicon.lookup(words[i]) != nullptr) covered.push_back(i);
  }
  const std::size_t m = covered.size();
  if (m == 0) return text;
  const std::size_t k = std::max<std::size_t>(1, std::min(m, ceil_count(rate, m)));

  std::vector<std::size_t> picks = sample_without_replacement(m, k, rng);
  for (std::size_t p : picks) {
    const std::size_t widx = covered[p];
    const std::vector<std::string>& syns = *lexicon.lookup(words[widx]);
    words[widx] = syns[rng.below(syns.size())];
  }
  return join_words(words);
}

std::string augment_post(const std::string& text, const AugmentConfig& cfg,
                         const SynonymLexicon& lexicon, Rng& rng) {
  cfg.validate();
  if (rng.uniform01() >= cfg.apply_probability) return text;
  switch (rng.below(3)) {
    case 0:
      return random_deletion(text, cfg.deletion_rate, rng);
    case 1:
      return random_swap(text, rng);
    default:
      return synonym_replacement(text, cfg.replacement_rate, lexicon, rng);
  }
}

}  // namespace ordseq
