#include "sevae/synth.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "sevae/error.hpp"

namespace sevae {
namespace {

constexpr std::array<std::string_view, 32> kFunctionWords = {
    "the", "a",    "an",   "of",   "to",   "in",   "is",   "was",  "it",   "that", "this",
    "on",  "for",  "with", "as",   "by",   "at",   "from", "be",   "has",  "have", "and",
    "or",  "but",  "not",  "all",  "some", "very", "more", "then", "also", "just"};

// Pair index of each label; IMPERATIVE forms a pair of its own.
constexpr std::array<int, kNumLabels> kPairOf = {0, 1, 2, 0, 1, 2, 3};
// Whether the label pairs marker set a with follower set a (and b with b) or crosses them.
constexpr std::array<bool, kNumLabels> kStraight = {true, true, true, false, false, false, true};

class ClauseWriter {
 public:
  ClauseWriter(const SynthConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {}

  std::string sentence(SEType label, std::size_t genre) {
    const auto y = static_cast<std::size_t>(label);
    const int pair = kPairOf[y];
    std::uniform_int_distribution<std::size_t> len(cfg_.min_filler, cfg_.max_filler);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::string> words;
    const std::size_t n = len(rng_);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = u(rng_);
      if (r < cfg_.pair_word_prob) {
        words.push_back("pw" + std::to_string(pair) + "x" + std::to_string(pick(cfg_.pair_words)));
      } else if (r < cfg_.pair_word_prob + cfg_.own_word_prob) {
        words.push_back("ow" + std::to_string(y) + "x" + std::to_string(pick(cfg_.own_words)));
      } else if (r < cfg_.pair_word_prob + cfg_.own_word_prob + cfg_.genre_word_prob) {
        words.push_back("gw" + std::to_string(genre) + "x" + std::to_string(pick(cfg_.genre_words)));
      } else {
        words.emplace_back(kFunctionWords[pick(std::min(cfg_.function_words, kFunctionWords.size()))]);
      }
    }
    bool straight = kStraight[y];
    if (u(rng_) < cfg_.pairing_flip_prob) straight = !straight;
    const std::string p = std::to_string(pair);
    const bool marker_a = u(rng_) < 0.5;
    const bool follower_a = straight ? marker_a : !marker_a;
    const std::string marker = "mk" + p + (marker_a ? "a" : "b") + std::to_string(pick(cfg_.marker_words));
    const std::string follower = "fw" + p + (follower_a ? "a" : "b") + std::to_string(pick(cfg_.follower_words));
    std::array<std::string, 2> placed = {marker, follower};
    if (u(rng_) < 0.5) std::swap(placed[0], placed[1]);
    // Two insertion points i <= j into the filler sequence.
    std::uniform_int_distribution<std::size_t> at(0, words.size());
    std::size_t i = at(rng_), j = at(rng_);
    if (i > j) std::swap(i, j);
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(j), placed[1]);
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(i), placed[0]);
    std::ostringstream os;
    for (const auto& w : words) os << w << ' ';
    os << '.';
    return os.str();
  }

 private:
  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  const SynthConfig& cfg_;
  std::mt19937_64& rng_;
};

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  if (cfg.min_filler > cfg.max_filler || cfg.pair_words == 0 || cfg.own_words == 0 || cfg.genre_words == 0 ||
      cfg.marker_words == 0 || cfg.follower_words == 0 || cfg.function_words == 0 || cfg.clauses_per_paragraph == 0 ||
      cfg.paragraphs_per_doc == 0) {
    throw UsageError("invalid synthetic corpus configuration");
  }
  if (cfg.pair_word_prob + cfg.own_word_prob + cfg.genre_word_prob > 1.0) {
    throw UsageError("synthetic word-source probabilities exceed 1");
  }
  std::mt19937_64 rng(cfg.seed);
  ClauseWriter writer(cfg, rng);
  const auto& genres = known_genres();
  Dataset d;
  auto make_partition = [&](std::string_view name, std::size_t per_label, std::vector<std::size_t>& part) {
    std::vector<SEType> labels;
    for (std::size_t y = 0; y < kNumLabels; ++y) labels.insert(labels.end(), per_label, static_cast<SEType>(y));
    std::shuffle(labels.begin(), labels.end(), rng);
    const std::size_t per_doc = cfg.clauses_per_paragraph * cfg.paragraphs_per_doc;
    for (std::size_t n = 0; n < labels.size(); ++n) {
      const std::size_t doc = n / per_doc;
      const std::size_t genre = doc % genres.size();
      Clause c;
      c.label = labels[n];
      c.genre = genres[genre];
      c.text = writer.sentence(c.label, genre);
      c.tokens = tokenize(c.text);
      c.doc_id = "syn-" + std::string(name) + "-" + std::to_string(doc);
      c.par_id = static_cast<int>((n % per_doc) / cfg.clauses_per_paragraph);
      c.clause_idx = static_cast<int>(n % cfg.clauses_per_paragraph);
      part.push_back(d.clauses.size());
      d.clauses.push_back(std::move(c));
    }
  };
  make_partition("train", cfg.train_per_label, d.split.train);
  make_partition("validation", cfg.validation_per_label, d.split.validation);
  make_partition("test", cfg.test_per_label, d.split.test);
  d.split.provenance = "synthetic: seed=" + std::to_string(cfg.seed);
  return d;
}

}  // namespace sevae
