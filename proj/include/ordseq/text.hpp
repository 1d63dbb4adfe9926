#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ordseq {

// Tokenization rule used everywhere text is split: runs of ASCII whitespace
// separate words, punctuation is kept attached.
std::vector<std::string> split_words(const std::string& text);

std::string join_words(const std::vector<std::string>& words);

std::string to_lower(const std::string& s);

// 64-bit FNV-1a over the UTF-8 bytes of `s`. This is the content hash used to
// key precomputed embedding files, so the constants must not change.
std::uint64_t fnv1a64(const std::string& s);

// Seeded variant for feature hashing (seed is folded into the offset basis).
std::uint64_t fnv1a64_seeded(const std::string& s, std::uint64_t seed);

// SplitMix64 finalizer, used to derive independent hash bits (e.g. a sign bit)
// from an existing hash value.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace ordseq
