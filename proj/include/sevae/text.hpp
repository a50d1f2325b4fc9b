#pragma once

// Clause corpora: schema, tokenization, vocabulary, and the split protocols
// (file-given, k-per-label subsampling, leave-one-genre-out).

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sevae {

// Situation entity types. Integer codes are stable and index confusion axes.
enum class SEType : int { state = 0, event, report, generic, generalizing, question, imperative };

inline constexpr std::size_t kNumLabels = 7;
using LabelProbs = std::array<double, kNumLabels>;

std::string_view label_name(SEType label);
inline std::string_view label_name(int code) { return label_name(static_cast<SEType>(code)); }
// Trims surrounding whitespace and matches case-insensitively.
std::optional<SEType> parse_label(std::string_view text);

struct Clause {
  std::string text;
  std::vector<std::string> tokens;
  SEType label = SEType::state;
  std::string genre = "unknown";
  std::string doc_id;
  int par_id = 0;
  int clause_idx = 0;
};

// The genres of the MASC+Wiki corpus, in report order.
const std::vector<std::string>& known_genres();

// Lowercases ASCII, splits on whitespace, and emits every ASCII punctuation
// character as its own token. Throws DataError when nothing remains.
std::vector<std::string> tokenize(std::string_view text);

// JSONL field names. The defaults are the repo's interchange schema.
struct FieldMap {
  std::string text = "text";
  std::string label = "label";
  std::string genre = "genre";
  std::string doc_id = "doc_id";
  std::string par_id = "par_id";
  std::string clause_idx = "clause_idx";
};

// Parses one JSON object per line. Missing coordinates default to record
// order (doc_id "corpus", par_id 0, clause_idx = record index). Any bad record
// fails the whole load with its line number.
std::vector<Clause> read_corpus(std::istream& in, const FieldMap& fields = {}, std::string_view source = "<stream>");
std::vector<Clause> load_corpus(const std::filesystem::path& path, const FieldMap& fields = {});
void write_corpus(std::ostream& out, std::span<const Clause> clauses);
void save_corpus(const std::filesystem::path& path, std::span<const Clause> clauses);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kCls = 4;
  static constexpr int kNumSpecial = 5;

  Vocab();

  // Tokens seen at least min_count times get ids >= 5, ordered by descending
  // frequency then lexicographically.
  static Vocab build(std::span<const Clause> clauses, int min_count);
  static Vocab build(std::span<const Clause> corpus, std::span<const std::size_t> indices, int min_count);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  int min_count() const { return min_count_; }
  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  void save(std::ostream& out) const;
  static Vocab load(std::istream& in);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int min_count_ = 1;
};

// Partitions as indices into a clause vector.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::string provenance;
};

// Three files concatenated into one clause vector with a file-given split.
struct Dataset {
  std::vector<Clause> clauses;
  Split split;
};

Dataset load_dataset(const std::filesystem::path& train, const std::filesystem::path& validation,
                     const std::filesystem::path& test, const FieldMap& fields = {});

// Exactly k training clauses per label, uniformly without replacement.
// Validation and test pass through unchanged.
Split subsample_per_label(std::span<const Clause> corpus, const Split& base, std::size_t k, std::uint64_t seed);

// Train on every genre except `target`, test on `target`; validation is a
// per-label stratified 10% of the non-target clauses.
Split cross_genre_split(std::span<const Clause> corpus, std::string_view target, std::uint64_t seed = 17);

// Empirical label distribution; add-one smoothed when any label is absent.
LabelProbs label_prior(std::span<const Clause> corpus, std::span<const std::size_t> indices);
LabelProbs label_prior(std::span<const Clause> clauses);

struct CorpusStats {
  std::size_t total = 0;
  std::array<std::size_t, kNumLabels> per_label{};
  std::map<std::string, std::size_t> per_genre;
};

CorpusStats corpus_stats(std::span<const Clause> corpus, std::span<const std::size_t> indices);
CorpusStats corpus_stats(std::span<const Clause> clauses);

// JSON manifest: provenance plus clause coordinates of every partition.
std::string split_manifest_json(std::span<const Clause> corpus, const Split& split);

}  // namespace sevae
