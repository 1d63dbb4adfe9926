#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ordseq {

inline constexpr int kNumClasses = 4;
inline constexpr int kSeqLen = 5;

// One user's chronologically ordered post stream.
struct RawUserStream {
  std::string user_id;
  std::vector<std::string> posts;
  std::vector<long long> timestamps;  // unix epoch seconds, non-decreasing

  void validate() const;  // throws on length mismatch or unsorted timestamps
};

// One training example: five posts, their timestamps, and the ordinal label
// derived from the post that followed them. Positions >= n_valid are padding.
struct SequenceRecord {
  std::string record_id;
  std::array<std::string, kSeqLen> posts;
  std::array<long long, kSeqLen> timestamps;
  int label = 0;    // 0..3
  int n_valid = 0;  // 1..5

  void validate() const;
};

struct ClassDistribution {
  std::array<long, kNumClasses> counts{};
  std::array<double, kNumClasses> proportions{};
};

struct FoldAssignment {
  int k = 0;
  std::uint64_t seed = 0;
  std::map<std::string, int> assignment;  // record_id -> fold in [0, k)
};

// Groups the stream into runs of six consecutive posts: the first five become
// a sequence, the sixth is the (external) label source. `labels` maps group
// index -> label. Incomplete trailing groups of size s are kept only when a
// label exists for them, taking their first s-1 posts (dropped when that
// leaves no valid post). Groups without a label are dropped silently.
std::vector<SequenceRecord> build_sequences(const RawUserStream& stream,
                                            const std::map<int, int>& labels);

ClassDistribution class_distribution(const std::vector<SequenceRecord>& records);

// Deterministic stratified split: per class, records are shuffled with the
// seeded PRNG and dealt round-robin across folds, which keeps every per-fold
// per-class count within +-1 of the even split. When k exceeds the rarest
// class count a warning is appended to *warning (not fatal).
FoldAssignment stratified_folds(const std::vector<SequenceRecord>& records, int k,
                                std::uint64_t seed, std::string* warning = nullptr);

}  // namespace ordseq
