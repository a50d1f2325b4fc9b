#include "sevae/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"

#include "sevae/error.hpp"

namespace sevae {
namespace {

constexpr std::array<std::string_view, kNumLabels> kLabelNames = {
    "STATE", "EVENT", "REPORT", "GENERIC", "GENERALIZING", "QUESTION", "IMPERATIVE"};

bool is_ascii_space(unsigned char c) { return c < 0x80 && std::isspace(c); }
bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_ascii_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_ascii_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string field_string(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  return j.dump();
}

int field_int(const nlohmann::json& j, const std::string& name, const std::string& where) {
  if (j.is_number_integer()) return j.get<int>();
  if (j.is_string()) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(j.get<std::string>(), &used);
      if (used == j.get<std::string>().size()) return v;
    } catch (const std::exception&) {
    }
  }
  throw DataError(where + ": field '" + name + "' is not an integer");
}

using Coord = std::tuple<std::string, int, int>;

}  // namespace

std::string_view label_name(SEType label) {
  const auto code = static_cast<std::size_t>(label);
  if (code >= kNumLabels) throw UsageError("invalid SE type code " + std::to_string(code));
  return kLabelNames[code];
}

std::optional<SEType> parse_label(std::string_view text) {
  std::string t = trim(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    if (t == kLabelNames[i]) return static_cast<SEType>(i);
  }
  return std::nullopt;
}

const std::vector<std::string>& known_genres() {
  static const std::vector<std::string> genres = {"blog",    "email",   "essays",    "ficlets", "fiction",
                                                  "gov-docs", "jokes",  "journal",   "letters", "news",
                                                  "technical", "travel", "wiki"};
  return genres;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_ascii_space(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  if (out.empty()) throw DataError("text tokenizes to zero tokens");
  return out;
}

std::vector<Clause> read_corpus(std::istream& in, const FieldMap& fields, std::string_view source) {
  std::vector<Clause> clauses;
  std::set<Coord> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": invalid JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw DataError(where + ": record is not a JSON object");
    Clause c;
    if (!j.contains(fields.text) || !j[fields.text].is_string()) throw DataError(where + ": missing text field '" + fields.text + "'");
    c.text = j[fields.text].get<std::string>();
    if (trim(c.text).empty()) throw DataError(where + ": empty text");
    try {
      c.tokens = tokenize(c.text);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (!j.contains(fields.label)) throw DataError(where + ": missing label field '" + fields.label + "'");
    const std::string raw_label = field_string(j[fields.label]);
    const auto label = parse_label(raw_label);
    if (!label) throw DataError(where + ": unknown label '" + raw_label + "'");
    c.label = *label;
    if (j.contains(fields.genre) && !j[fields.genre].is_null()) c.genre = field_string(j[fields.genre]);
    c.doc_id = j.contains(fields.doc_id) ? field_string(j[fields.doc_id]) : "corpus";
    c.par_id = j.contains(fields.par_id) ? field_int(j[fields.par_id], fields.par_id, where) : 0;
    c.clause_idx = j.contains(fields.clause_idx) ? field_int(j[fields.clause_idx], fields.clause_idx, where)
                                                 : static_cast<int>(clauses.size());
    if (!seen.emplace(c.doc_id, c.par_id, c.clause_idx).second) {
      throw DataError(where + ": duplicate coordinates (" + c.doc_id + ", " + std::to_string(c.par_id) + ", " +
                      std::to_string(c.clause_idx) + ")");
    }
    clauses.push_back(std::move(c));
  }
  return clauses;
}

std::vector<Clause> load_corpus(const std::filesystem::path& path, const FieldMap& fields) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  return read_corpus(in, fields, path.string());
}

void write_corpus(std::ostream& out, std::span<const Clause> clauses) {
  for (const Clause& c : clauses) {
    nlohmann::json j = {{"text", c.text},        {"label", std::string(label_name(c.label))},
                        {"genre", c.genre},      {"doc_id", c.doc_id},
                        {"par_id", c.par_id},    {"clause_idx", c.clause_idx}};
    out << j.dump() << '\n';
  }
}

void save_corpus(const std::filesystem::path& path, std::span<const Clause> clauses) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_corpus(out, clauses);
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() : tokens_{"<pad>", "<unk>", "<bos>", "<eos>", "<cls>"} {
  for (int i = 0; i < kNumSpecial; ++i) index_.emplace(tokens_[i], i);
}

Vocab Vocab::build(std::span<const Clause> clauses, int min_count) {
  std::vector<std::size_t> all(clauses.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return build(clauses, all, min_count);
}

Vocab Vocab::build(std::span<const Clause> corpus, std::span<const std::size_t> indices, int min_count) {
  if (indices.empty()) throw DataError("cannot build a vocabulary from zero clauses");
  if (min_count < 1) throw UsageError("min_count must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (std::size_t i : indices) {
    for (const std::string& t : corpus[i].tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= static_cast<std::size_t>(min_count)) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocab v;
  v.min_count_ = min_count;
  for (auto& [tok, n] : kept) {
    if (v.index_.contains(tok)) continue;
    v.index_.emplace(tok, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(tok);
  }
  return v;
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw UsageError("vocab id out of range");
  return tokens_[id];
}

std::vector<int> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocab::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void Vocab::save(std::ostream& out) const {
  out << "sevae-vocab\t" << min_count_ << '\t' << tokens_.size() << '\n';
  for (std::size_t i = kNumSpecial; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocab Vocab::load(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw DataError("empty vocabulary file");
  std::istringstream hs(header);
  std::string magic;
  std::size_t n = 0;
  Vocab v;
  if (!(hs >> magic >> v.min_count_ >> n) || magic != "sevae-vocab") throw DataError("bad vocabulary header");
  std::string tok;
  while (v.tokens_.size() < n && std::getline(in, tok)) {
    v.index_.emplace(tok, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(tok);
  }
  if (v.tokens_.size() != n) throw DataError("truncated vocabulary file");
  return v;
}

// ---------------------------------------------------------------------------
// Splits

Dataset load_dataset(const std::filesystem::path& train, const std::filesystem::path& validation,
                     const std::filesystem::path& test, const FieldMap& fields) {
  Dataset d;
  auto append = [&](const std::filesystem::path& p, std::vector<std::size_t>& part) {
    for (Clause& c : load_corpus(p, fields)) {
      part.push_back(d.clauses.size());
      d.clauses.push_back(std::move(c));
    }
  };
  append(train, d.split.train);
  append(validation, d.split.validation);
  append(test, d.split.test);
  d.split.provenance = "file-given: train=" + train.filename().string() + " validation=" +
                       validation.filename().string() + " test=" + test.filename().string();
  return d;
}

Split subsample_per_label(std::span<const Clause> corpus, const Split& base, std::size_t k, std::uint64_t seed) {
  if (k < 1) throw UsageError("k must be >= 1");
  std::array<std::vector<std::size_t>, kNumLabels> by_label;
  for (std::size_t i : base.train) by_label[static_cast<std::size_t>(corpus[i].label)].push_back(i);
  for (std::size_t y = 0; y < kNumLabels; ++y) {
    if (by_label[y].size() < k) {
      throw DataError("label " + std::string(label_name(static_cast<int>(y))) + " has only " +
                      std::to_string(by_label[y].size()) + " training clauses, fewer than k=" + std::to_string(k));
    }
  }
  std::mt19937_64 rng(seed);
  Split out;
  for (auto& pool : by_label) {
    std::shuffle(pool.begin(), pool.end(), rng);
    out.train.insert(out.train.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(out.train.begin(), out.train.end());
  out.validation = base.validation;
  out.test = base.test;
  out.provenance = "per-label subsample: k=" + std::to_string(k) + " seed=" + std::to_string(seed) + " of (" +
                   base.provenance + ")";
  return out;
}

Split cross_genre_split(std::span<const Clause> corpus, std::string_view target, std::uint64_t seed) {
  std::set<std::string> genres;
  for (const Clause& c : corpus) genres.insert(c.genre);
  if (!genres.contains(std::string(target))) {
    std::string valid;
    for (const auto& g : genres) valid += (valid.empty() ? "" : ", ") + g;
    throw DataError("unknown genre '" + std::string(target) + "'; valid genres: " + valid);
  }
  Split out;
  std::array<std::vector<std::size_t>, kNumLabels> rest;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].genre == target) {
      out.test.push_back(i);
    } else {
      rest[static_cast<std::size_t>(corpus[i].label)].push_back(i);
    }
  }
  std::mt19937_64 rng(seed);
  for (auto& pool : rest) {
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t n_val = pool.size() / 10;
    out.validation.insert(out.validation.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_val));
    out.train.insert(out.train.end(), pool.begin() + static_cast<std::ptrdiff_t>(n_val), pool.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  out.provenance = "leave-one-genre-out: held-out genre=" + std::string(target) + " seed=" + std::to_string(seed);
  return out;
}

LabelProbs label_prior(std::span<const Clause> corpus, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("label prior of an empty training set");
  std::array<double, kNumLabels> counts{};
  for (std::size_t i : indices) counts[static_cast<std::size_t>(corpus[i].label)] += 1.0;
  const bool any_missing = std::any_of(counts.begin(), counts.end(), [](double c) { return c == 0.0; });
  double n = static_cast<double>(indices.size());
  if (any_missing) {
    for (double& c : counts) c += 1.0;
    n += static_cast<double>(kNumLabels);
  }
  LabelProbs p{};
  for (std::size_t y = 0; y < kNumLabels; ++y) p[y] = counts[y] / n;
  return p;
}

LabelProbs label_prior(std::span<const Clause> clauses) {
  std::vector<std::size_t> all(clauses.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return label_prior(clauses, all);
}

CorpusStats corpus_stats(std::span<const Clause> corpus, std::span<const std::size_t> indices) {
  CorpusStats s;
  for (std::size_t i : indices) {
    ++s.total;
    ++s.per_label[static_cast<std::size_t>(corpus[i].label)];
    ++s.per_genre[corpus[i].genre];
  }
  return s;
}

CorpusStats corpus_stats(std::span<const Clause> clauses) {
  std::vector<std::size_t> all(clauses.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return corpus_stats(clauses, all);
}

std::string split_manifest_json(std::span<const Clause> corpus, const Split& split) {
  auto coords = [&](const std::vector<std::size_t>& part) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i : part) arr.push_back({corpus[i].doc_id, corpus[i].par_id, corpus[i].clause_idx});
    return arr;
  };
  nlohmann::json j = {{"provenance", split.provenance},
                      {"coordinate_fields", {"doc_id", "par_id", "clause_idx"}},
                      {"train", coords(split.train)},
                      {"validation", coords(split.validation)},
                      {"test", coords(split.test)}};
  return j.dump(1);
}

}  // namespace sevae
