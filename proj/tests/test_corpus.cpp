#include <doctest.h>

#include <stdexcept>

#include <set>

#include "ordseq/corpus.hpp"

using namespace ordseq;

namespace {

RawUserStream make_stream(const std::string& user, std::size_t n_posts) {
  RawUserStream s;
  s.user_id = user;
  for (std::size_t i = 0; i < n_posts; ++i) {
    s.posts.push_back("post " + std::to_string(i));
    s.timestamps.push_back(1000 + static_cast<long long>(i) * 3600);
  }
  return s;
}

std::map<int, int> label_all_groups(std::size_t n_posts, int label) {
  std::map<int, int> labels;
  const std::size_t groups = n_posts / 6 + (n_posts % 6 >= 2 ? 1 : 0);
  for (std::size_t g = 0; g < groups; ++g) labels[static_cast<int>(g)] = label;
  return labels;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("grouping oracle: six posts per group, trailing group loses its label post") {
    for (std::size_t n = 1; n <= 20; ++n) {
      const RawUserStream s = make_stream("u", n);
      const auto records = build_sequences(s, label_all_groups(n, 2));
      // Hand rule: every full group of six becomes one record with five valid
      // posts; a trailing group of size s in [2,5] becomes one record with
      // s-1 valid posts; a single trailing post yields nothing.
      const std::size_t expected = n / 6 + (n % 6 >= 2 ? 1 : 0);
      INFO("n_posts=" << n);
      CHECK(records.size() == expected);
      if (n % 6 >= 2) {
        CHECK(records.back().n_valid == static_cast<int>(n % 6) - 1);
      }
      for (const auto& r : records) CHECK_NOTHROW(r.validate());
    }
  }

  TEST_CASE("twelve posts with two labeled groups give two records") {
    const RawUserStream s = make_stream("alice", 12);
    const auto records = build_sequences(s, {{0, 1}, {1, 3}});
    REQUIRE(records.size() == 2);
    CHECK(records[0].record_id == "alice:0");
    CHECK(records[0].label == 1);
    CHECK(records[0].n_valid == 5);
    CHECK(records[1].record_id == "alice:1");
    CHECK(records[1].label == 3);
    // First record holds posts 0..4; post 5 is the label source, not content.
    for (int i = 0; i < 5; ++i) CHECK(records[0].posts[i] == "post " + std::to_string(i));
    for (int i = 0; i < 5; ++i) CHECK(records[1].posts[i] == "post " + std::to_string(6 + i));
  }

  TEST_CASE("unlabeled groups are skipped") {
    const RawUserStream s = make_stream("bob", 18);
    const auto records = build_sequences(s, {{1, 0}});
    REQUIRE(records.size() == 1);
    CHECK(records[0].record_id == "bob:1");
  }

  TEST_CASE("padding repeats the last valid timestamp and blanks the post") {
    const RawUserStream s = make_stream("carol", 9);  // one full group + tail of 3
    const auto records = build_sequences(s, {{0, 0}, {1, 2}});
    REQUIRE(records.size() == 2);
    const SequenceRecord& tail = records[1];
    CHECK(tail.n_valid == 2);
    for (int i = 2; i < kSeqLen; ++i) {
      CHECK(tail.posts[i].empty());
      CHECK(tail.timestamps[i] == tail.timestamps[1]);
    }
  }

  TEST_CASE("stream validation rejects malformed input") {
    RawUserStream s = make_stream("dave", 4);
    s.timestamps[2] = s.timestamps[1] - 10;
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("not chronological"),
                         std::invalid_argument);

    RawUserStream uneven = make_stream("erin", 3);
    uneven.timestamps.pop_back();
    CHECK_THROWS_AS(uneven.validate(), std::invalid_argument);

    const RawUserStream ok = make_stream("frank", 7);
    CHECK_THROWS_AS(build_sequences(ok, {{0, 9}}), std::invalid_argument);  // label out of range
  }

  TEST_CASE("class distribution matches the hand-computed proportions") {
    std::vector<SequenceRecord> records;
    const std::array<long, 4> counts = {2480, 3536, 1019, 348};
    int id = 0;
    for (int c = 0; c < 4; ++c)
      for (long i = 0; i < counts[c]; ++i) {
        SequenceRecord r;
        r.record_id = "r" + std::to_string(id++);
        r.label = c;
        r.n_valid = 5;
        records.push_back(r);
      }
    const ClassDistribution dist = class_distribution(records);
    CHECK(dist.counts == counts);
    CHECK(dist.proportions[0] == doctest::Approx(0.3359).epsilon(1e-3));
    CHECK(dist.proportions[1] == doctest::Approx(0.4789).epsilon(1e-3));
    CHECK(dist.proportions[2] == doctest::Approx(0.1380).epsilon(1e-3));
    CHECK(dist.proportions[3] == doctest::Approx(0.0471).epsilon(1e-3));
    CHECK(dist.proportions[0] + dist.proportions[1] + dist.proportions[2] + dist.proportions[3] ==
          doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(class_distribution({}), std::invalid_argument);
  }

  TEST_CASE("stratified folds: per-class counts within one of the even split") {
    std::vector<SequenceRecord> records;
    const std::array<long, 4> counts = {2480, 3536, 1019, 348};
    int id = 0;
    for (int c = 0; c < 4; ++c)
      for (long i = 0; i < counts[c]; ++i) {
        SequenceRecord r;
        r.record_id = "r" + std::to_string(id++);
        r.label = c;
        r.n_valid = 5;
        records.push_back(r);
      }
    const int k = 5;
    const FoldAssignment fa = stratified_folds(records, k, 42, nullptr);
    CHECK(fa.k == k);
    CHECK(fa.assignment.size() == records.size());  // union covers everything, no duplicates

    std::array<std::array<long, 4>, 5> per_fold{};
    for (const auto& r : records) {
      const int f = fa.assignment.at(r.record_id);
      REQUIRE(f >= 0);
      REQUIRE(f < k);
      ++per_fold[f][r.label];
    }
    for (int f = 0; f < k; ++f)
      for (int c = 0; c < 4; ++c) {
        const double even = static_cast<double>(counts[c]) / k;
        INFO("fold " << f << " class " << c);
        CHECK(std::abs(per_fold[f][c] - even) <= 1.0);
      }
    // 348 / 5 = 69.6: every fold holds 69 or 70 of the rarest class.
    for (int f = 0; f < k; ++f) CHECK((per_fold[f][3] == 69 || per_fold[f][3] == 70));
  }

  TEST_CASE("stratified folds are deterministic in the seed") {
    std::vector<SequenceRecord> records;
    for (int i = 0; i < 40; ++i) {
      SequenceRecord r;
      r.record_id = "r" + std::to_string(i);
      r.label = i % 4;
      r.n_valid = 5;
      records.push_back(r);
    }
    const FoldAssignment a = stratified_folds(records, 5, 7, nullptr);
    const FoldAssignment b = stratified_folds(records, 5, 7, nullptr);
    const FoldAssignment c = stratified_folds(records, 5, 8, nullptr);
    CHECK(a.assignment == b.assignment);
    CHECK(a.assignment != c.assignment);
  }

  TEST_CASE("stratification warns when a class cannot reach every fold") {
    std::vector<SequenceRecord> records;
    for (int i = 0; i < 20; ++i) {
      SequenceRecord r;
      r.record_id = "r" + std::to_string(i);
      r.label = i < 2 ? 3 : i % 3;  // only two class-3 records for five folds
      r.n_valid = 5;
      records.push_back(r);
    }
    std::string warning;
    stratified_folds(records, 5, 1, &warning);
    CHECK(!warning.empty());
  }
}
