#include "ordseq/corpus.hpp"

#include <algorithm>
#include <stdexcept>

#include "ordseq/tensor.hpp"

namespace ordseq {

void RawUserStream::validate() const {
  if (posts.size() != timestamps.size()) {
    throw std::invalid_argument("stream '" + user_id + "': posts and timestamps differ in length");
  }
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (timestamps[i] < timestamps[i - 1]) {
      throw std::invalid_argument("stream '" + user_id + "': timestamps not chronological at index " +
                                  std::to_string(i));
    }
  }
}

void SequenceRecord::validate() const {
  if (label < 0 || label >= kNumClasses) {
    throw std::invalid_argument("record '" + record_id + "': label " + std::to_string(label) +
                                " outside {0..3}");
  }
  if (n_valid < 1 || n_valid > kSeqLen) {
    throw std::invalid_argument("record '" + record_id + "': n_valid " + std::to_string(n_valid) +
                                " outside 1..5");
  }
  for (int i = 1; i < n_valid; ++i) {
    if (timestamps[i] < timestamps[i - 1]) {
      throw std::invalid_argument("record '" + record_id + "': timestamps not chronological");
    }
  }
}

std::vector<SequenceRecord> build_sequences(const RawUserStream& stream,
                                            const std::map<int, int>& labels) {
  stream.validate();
  std::vector<SequenceRecord> out;
  const std::size_t n = stream.posts.size();
  const std::size_t groups = n / 6;

  auto make_record = [&](std::size_t g, int n_valid, int label) {
    if (label < 0 || label >= kNumClasses) {
      throw std::invalid_argument("stream '" + stream.user_id + "' group " + std::to_string(g) +
                                  ": label " + std::to_string(label) + " outside {0..3}");
    }
    SequenceRecord rec;
    rec.record_id = stream.user_id + ":" + std::to_string(g);
    rec.label = label;
    rec.n_valid = n_valid;
    const std::size_t base = g * 6;
    for (int i = 0; i < n_valid; ++i) {
      rec.posts[i] = stream.posts[base + i];
      rec.timestamps[i] = stream.timestamps[base + i];
    }
    // Padding slots repeat the last valid timestamp so the stored 5-tuple
    // stays non-decreasing end to end.
    for (int i = n_valid; i < kSeqLen; ++i) {
      rec.posts[i].clear();
      rec.timestamps[i] = rec.timestamps[n_valid - 1];
    }
    return rec;
  };

  for (std::size_t g = 0; g < groups; ++g) {
    auto it = labels.find(static_cast<int>(g));
    if (it == labels.end()) continue;
    out.push_back(make_record(g, kSeqLen, it->second));
  }

  // Trailing group of size s in [2, 5]: its last post plays the label-source
  // role, leaving s-1 valid posts. A single-post group has no sequence left.
  const std::size_t tail = n % 6;
  if (tail >= 2) {
    auto it = labels.find(static_cast<int>(groups));
    if (it != labels.end()) {
      out.push_back(make_record(groups, static_cast<int>(tail) - 1, it->second));
    }
  }
  return out;
}

ClassDistribution class_distribution(const std::vector<SequenceRecord>& records) {
  if (records.empty()) throw std::invalid_argument("class_distribution: no records");
  ClassDistribution dist;
  for (const SequenceRecord& r : records) {
    if (r.label < 0 || r.label >= kNumClasses) {
      throw std::invalid_argument("record '" + r.record_id + "': label outside {0..3}");
    }
    ++dist.counts[r.label];
  }
  const double total = static_cast<double>(records.size());
  for (int c = 0; c < kNumClasses; ++c) {
    dist.proportions[c] = static_cast<double>(dist.counts[c]) / total;
  }
  return dist;
}

FoldAssignment stratified_folds(const std::vector<SequenceRecord>& records, int k,
                                std::uint64_t seed, std::string* warning) {
  if (k < 2) throw std::invalid_argument("stratified_folds: k must be >= 2");
  if (records.empty()) throw std::invalid_argument("stratified_folds: no records");

  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int c = records[i].label;
    if (c < 0 || c >= kNumClasses) {
      throw std::invalid_argument("record '" + records[i].record_id + "': label outside {0..3}");
    }
    by_class[c].push_back(i);
  }

  FoldAssignment folds;
  folds.k = k;
  folds.seed = seed;
  Rng rng(seed);
  for (int c = 0; c < kNumClasses; ++c) {
    auto& idx = by_class[c];
    if (!idx.empty() && idx.size() < static_cast<std::size_t>(k) && warning != nullptr) {
      if (!warning->empty()) *warning += "\n";
      *warning += "class " + std::to_string(c) + " has only " + std::to_string(idx.size()) +
                  " records for k=" + std::to_string(k) + "; some folds will lack it";
    }
    rng.shuffle(idx);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      folds.assignment[records[idx[j]].record_id] = static_cast<int>(j % k);
    }
  }
  if (folds.assignment.size() != records.size()) {
    throw std::invalid_argument("stratified_folds: duplicate record ids");
  }
  return folds;
}

}  // namespace ordseq
