#include "ordseq/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ordseq/text.hpp"

namespace ordseq {

void EncoderSpec::validate() const {
  if (dim < 2) throw std::invalid_argument("encoder: dim must be >= 2");
  if (kind == Kind::hashed_ngram) {
    if (ngram_orders.empty()) throw std::invalid_argument("encoder: ngram_orders empty");
    for (int n : ngram_orders) {
      if (n < 1) throw std::invalid_argument("encoder: ngram order must be >= 1");
    }
  } else if (vectors_path.empty()) {
    throw std::invalid_argument("encoder: precomputed kind needs vectors_path");
  }
}

Encoder::Encoder(EncoderSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.kind == EncoderSpec::Kind::precomputed) {
    table_ = load_vector_table(spec_.vectors_path, spec_.dim);
  }
}

std::vector<double> Encoder::encode_post(const std::string& text) const {
  if (spec_.kind == EncoderSpec::Kind::precomputed) {
    const std::uint64_t h = fnv1a64(text);
    auto it = table_.find(h);
    if (it == table_.end()) {
      char buf[17];
      std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
      throw std::runtime_error(std::string("precomputed encoder: no vector for post hash ") + buf);
    }
    return it->second;
  }

  std::vector<double> v(spec_.dim, 0.0);
  const std::vector<std::string> words = split_words(to_lower(text));
  if (words.empty()) return v;  // zero vector for empty text
  for (int order : spec_.ngram_orders) {
    const std::size_t n = static_cast<std::size_t>(order);
    if (words.size() < n) continue;
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
      std::string gram = words[i];
      for (std::size_t j = 1; j < n; ++j) {
        gram.push_back(' ');
        gram += words[i + j];
      }
      const std::uint64_t h = fnv1a64_seeded(gram, spec_.hash_seed);
      const std::size_t slot = static_cast<std::size_t>(h % spec_.dim);
      const double sign = (splitmix64(h) >> 63) != 0 ? 1.0 : -1.0;
      v[slot] += sign;
    }
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    const double inv = 1.0 / std::sqrt(norm);
    for (double& x : v) x *= inv;
  }
  return v;
}

void Encoder::encode_sequence(const SequenceRecord& rec, double* out, double* mask) const {
  rec.validate();
  const std::size_t d = spec_.dim;
  std::memset(out, 0, sizeof(double) * d * kSeqLen);
  for (int i = 0; i < kSeqLen; ++i) {
    if (i < rec.n_valid) {
      const std::vector<double> v = encode_post(rec.posts[i]);
      std::memcpy(out + static_cast<std::size_t>(i) * d, v.data(), sizeof(double) * d);
      mask[i] = 1.0;
    } else {
      mask[i] = 0.0;
    }
  }
}

std::unordered_map<std::uint64_t, std::vector<double>> load_vector_table(const std::string& path,
                                                                         std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vectors file: " + path);
  std::unordered_map<std::uint64_t, std::vector<double>> table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const std::string hex = j.at("hash").get<std::string>();
    const std::uint64_t h = std::stoull(hex, nullptr, 16);
    std::vector<double> v = j.at("vector").get<std::vector<double>>();
    if (v.size() != dim) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": vector has " +
                               std::to_string(v.size()) + " entries, expected " +
                               std::to_string(dim));
    }
    table[h] = std::move(v);
  }
  return table;
}

}  // namespace ordseq
