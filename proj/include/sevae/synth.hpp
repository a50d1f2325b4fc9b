#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sevae/text.hpp"

namespace sevae {

// Synthetic 7-label clause corpus with templated lexical patterns.
//
// Labels come in confusable pairs (STATE/GENERIC, EVENT/GENERALIZING,
// REPORT/QUESTION; IMPERATIVE stands alone). A clause mixes function words,
// genre words, words shared by its label pair, and a few words owned by its
// label. Every clause also carries one marker word and one follower word of
// its pair, each from set a or set b at random. One label of a pair uses
// matching sets (a with a, b with b), the other crosses them. Token by token
// the two labels have the same word distribution; only the combination of
// marker and follower tells them apart.
struct SynthConfig {
  std::size_t train_per_label = 1000;
  std::size_t validation_per_label = 50;
  std::size_t test_per_label = 100;
  std::uint64_t seed = 20210801;

  std::size_t function_words = 24;
  std::size_t genre_words = 6;
  std::size_t pair_words = 10;
  std::size_t own_words = 3;
  std::size_t marker_words = 1;
  std::size_t follower_words = 1;

  std::size_t min_filler = 3;
  std::size_t max_filler = 7;
  double pair_word_prob = 0.35;
  double own_word_prob = 0.15;
  double genre_word_prob = 0.2;
  // Probability that a clause's marker-follower combination is swapped (label noise).
  double pairing_flip_prob = 0.02;

  std::size_t clauses_per_paragraph = 4;
  std::size_t paragraphs_per_doc = 3;
};

// Deterministic in the config. Documents cycle through known_genres().
Dataset generate_synthetic(const SynthConfig& config);

}  // namespace sevae
