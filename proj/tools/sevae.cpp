// Command-line entry point. Every flag --some-key mirrors the config-file key
// some_key; flags override the file given with --config.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sevae/checkpoint.hpp"
#include "sevae/config.hpp"
#include "sevae/error.hpp"
#include "sevae/protocols.hpp"
#include "sevae/synth.hpp"
#include "sevae/train.hpp"
#include "sevae/vae.hpp"
#include "sevae/verify.hpp"

#ifndef SEVAE_VERSION
#define SEVAE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace sevae;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

std::string fnv_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return hash_hex(h);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long n = std::stoull(v, &used);
    if (used == v.size() && v.find('-') == std::string::npos) return n;
  } catch (const std::exception&) {
  }
  throw UsageError("config key '" + key + "' expects an unsigned integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config key '" + key + "' expects true/false, got '" + v + "'");
}

std::string dashed(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return key;
}

// Key lists shared by several subcommands.
const std::vector<std::pair<std::string, std::string>> kDataKeys = {
    {"data_dir", "directory holding train.jsonl, validation.jsonl, test.jsonl"},
    {"synthetic", "use the built-in synthetic corpus (true/false)"},
    {"synth_seed", "synthetic corpus seed"},
    {"synth_train_per_label", "synthetic training clauses per label"},
    {"synth_validation_per_label", "synthetic validation clauses per label"},
    {"synth_test_per_label", "synthetic test clauses per label"},
};

std::vector<std::pair<std::string, std::string>> spec_keys(bool with_model) {
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& [k, v] : ModelSpec{}.to_kv()) {
    if (k == "model" && !with_model) continue;
    keys.emplace_back(k, k == "model" ? "model kind: disc, gen, lat, ctx, vae-bow, vae-lstm, vae-xfmr"
                                      : "model spec (default " + v + ")");
  }
  return keys;
}

std::vector<std::pair<std::string, std::string>> train_keys() {
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& k : train_config_keys()) keys.emplace_back(k, "training setting");
  return keys;
}

// A subcommand whose options are config keys.
struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> store;
  std::vector<std::pair<std::string, CLI::Option*>> options;
  std::set<std::string> allowed;

  void keys(const std::vector<std::pair<std::string, std::string>>& list) {
    for (const auto& [key, help] : list) {
      if (!allowed.insert(key).second) continue;
      options.emplace_back(key, app->add_option("--" + dashed(key), store[key], help));
    }
  }

  // File values overlaid with flag values; unknown file keys are rejected.
  KeyValues effective() const {
    KeyValues kv;
    if (!config_path.empty()) kv = load_config(config_path);
    for (const auto& [key, value] : kv) {
      if (!allowed.count(key)) throw UsageError("unknown config key '" + key + "' for '" + app->get_name() + "'");
    }
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) kv[key] = store.at(key);
    }
    return kv;
  }
};

Command make_command(CLI::App& root, const std::string& name, const std::string& help) {
  Command c;
  c.app = root.add_subcommand(name, help);
  return c;
}

std::string get(const KeyValues& kv, const std::string& key, const std::string& fallback = "") {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

std::string require(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end() || it->second.empty()) throw UsageError("missing required setting '" + key + "' (--" + dashed(key) + ")");
  return it->second;
}

struct Data {
  Dataset dataset;
  std::string source;
};

Data load_data(const KeyValues& kv) {
  const std::string dir = get(kv, "data_dir");
  const bool synthetic = to_bool("synthetic", get(kv, "synthetic", "false"));
  if (!dir.empty() && synthetic) throw UsageError("set either data_dir or synthetic, not both");
  if (!dir.empty()) {
    const fs::path root(dir);
    Data d{load_dataset(root / "train.jsonl", root / "validation.jsonl", root / "test.jsonl"), "data_dir=" + dir};
    d.dataset.split.provenance = "files: " + dir;
    return d;
  }
  if (synthetic) {
    SynthConfig sc;
    if (kv.count("synth_seed")) sc.seed = to_u64("synth_seed", kv.at("synth_seed"));
    if (kv.count("synth_train_per_label")) sc.train_per_label = to_u64("synth_train_per_label", kv.at("synth_train_per_label"));
    if (kv.count("synth_validation_per_label")) {
      sc.validation_per_label = to_u64("synth_validation_per_label", kv.at("synth_validation_per_label"));
    }
    if (kv.count("synth_test_per_label")) sc.test_per_label = to_u64("synth_test_per_label", kv.at("synth_test_per_label"));
    return {generate_synthetic(sc), "synthetic seed=" + std::to_string(sc.seed)};
  }
  throw UsageError("no data: pass --data-dir DIR or --synthetic true");
}

fs::path prepare_out(const KeyValues& kv) {
  const fs::path out(require(kv, "out"));
  fs::create_directories(out);
  return out;
}

// Output files are fixed names directly under the run directory.
std::ofstream open_out(const fs::path& out, const std::string& name) {
  std::ofstream f(out / name, std::ios::binary);
  if (!f) throw DataError("cannot write '" + (out / name).string() + "'");
  return f;
}

struct Manifest {
  std::string command_line;
  std::string config_digest;
};

void write_manifest(const fs::path& out, const Manifest& m, const KeyValues& kv, const std::string& data_digest,
                    const std::string& seed) {
  json j;
  j["command_line"] = m.command_line;
  j["config_file_digest"] = m.config_digest.empty() ? json(nullptr) : json(m.config_digest);
  j["data_manifest_digest"] = data_digest.empty() ? json(nullptr) : json(data_digest);
  j["seed"] = seed.empty() ? json(nullptr) : json(seed);
  j["tool_version"] = SEVAE_VERSION;
  j["timestamp"] = utc_timestamp();
  j["effective_config"] = json(kv);
  std::ofstream f = open_out(out, "manifest.json");
  f << j.dump(2) << "\n";
}

std::string with_manifest(const std::string& report, const std::string& extra_key = "", const json& extra = {}) {
  json j = json::parse(report);
  j["manifest"] = "manifest.json";
  if (!extra_key.empty()) j[extra_key] = extra;
  return j.dump(2);
}

std::vector<std::size_t> partition(const Split& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "validation") return split.validation;
  if (name == "test") return split.test;
  throw UsageError("partition must be train, validation, or test");
}

ModelSpec spec_from(const KeyValues& kv, ModelKind kind) {
  KeyValues rest = kv;
  std::vector<std::string> names;
  for (const auto& [k, v] : ModelSpec{}.to_kv()) {
    if (k != "model") names.push_back(k);
  }
  return ModelSpec::from_kv(take_keys(rest, names), ModelSpec::defaults_for(kind));
}

TrainConfig train_from(const KeyValues& kv, ModelKind kind) {
  KeyValues rest = kv;
  TrainConfig cfg = TrainConfig::from_kv(take_keys(rest, train_config_keys()), default_train_config(kind));
  cfg.validate();
  return cfg;
}

std::vector<ModelKind> models_from(const KeyValues& kv) {
  std::vector<ModelKind> out;
  for (const auto& name : split_list(require(kv, "models"))) out.push_back(parse_model_kind(name));
  if (out.empty()) throw UsageError("models list is empty");
  return out;
}

// ---- subcommands -----------------------------------------------------------

int cmd_convert(const KeyValues& kv, const Manifest& m) {
  const fs::path input(require(kv, "input"));
  const std::string format = get(kv, "format", "jsonl");
  FieldMap fields;
  fields.text = get(kv, "field_text", fields.text);
  fields.label = get(kv, "field_label", fields.label);
  fields.genre = get(kv, "field_genre", fields.genre);
  fields.doc_id = get(kv, "field_doc_id", fields.doc_id);
  fields.par_id = get(kv, "field_par_id", fields.par_id);
  fields.clause_idx = get(kv, "field_clause_idx", fields.clause_idx);

  std::vector<Clause> clauses;
  if (format == "jsonl") {
    clauses = load_corpus(input, fields);
  } else if (format == "tsv") {
    // Header row names the columns; each data row becomes one JSON record.
    std::istringstream in(read_file(input));
    std::string line;
    if (!std::getline(in, line)) throw DataError(input.string() + ": empty TSV file");
    std::vector<std::string> header;
    {
      std::istringstream h(line);
      std::string col;
      while (std::getline(h, col, '\t')) header.push_back(col);
    }
    std::ostringstream lines;
    std::size_t row = 1;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::istringstream r(line);
      std::string cell;
      while (std::getline(r, cell, '\t')) cells.push_back(cell);
      if (cells.size() != header.size()) {
        throw DataError(input.string() + ":" + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                        " columns, found " + std::to_string(cells.size()));
      }
      json rec = json::object();
      for (std::size_t i = 0; i < header.size(); ++i) {
        const bool numeric = header[i] == fields.par_id || header[i] == fields.clause_idx;
        if (numeric) {
          try {
            rec[header[i]] = std::stoi(cells[i]);
          } catch (const std::exception&) {
            throw DataError(input.string() + ":" + std::to_string(row) + ": column '" + header[i] + "' is not an integer");
          }
        } else {
          rec[header[i]] = cells[i];
        }
      }
      lines << rec.dump() << "\n";
    }
    std::istringstream records(lines.str());
    clauses = read_corpus(records, fields, input.string());
  } else {
    throw UsageError("format must be jsonl or tsv");
  }

  const fs::path out = prepare_out(kv);
  std::ostringstream body;
  write_corpus(body, clauses);
  write_manifest(out, m, kv, fnv_hex(body.str()), "");
  const std::string name = get(kv, "output_name", "corpus.jsonl");
  if (name.empty() || fs::path(name).has_parent_path() || name == "." || name == "..") {
    throw UsageError("output_name must be a plain file name");
  }
  open_out(out, name) << body.str();
  std::cout << "wrote " << clauses.size() << " clauses to " << (out / name).string() << "\n";
  return kExitOk;
}

void print_stats(std::ostream& os, const Dataset& d) {
  const CorpusStats tr = corpus_stats(d.clauses, d.split.train);
  const CorpusStats va = corpus_stats(d.clauses, d.split.validation);
  const CorpusStats te = corpus_stats(d.clauses, d.split.test);
  os << "label\ttrain\tvalidation\ttest\ttotal\n";
  for (std::size_t y = 0; y < kNumLabels; ++y) {
    os << label_name(static_cast<int>(y)) << "\t" << tr.per_label[y] << "\t" << va.per_label[y] << "\t"
       << te.per_label[y] << "\t" << tr.per_label[y] + va.per_label[y] + te.per_label[y] << "\n";
  }
  os << "TOTAL\t" << tr.total << "\t" << va.total << "\t" << te.total << "\t" << tr.total + va.total + te.total << "\n\n";
  os << "genre\ttrain\tvalidation\ttest\ttotal\n";
  std::set<std::string> genres;
  for (const auto* s : {&tr, &va, &te}) {
    for (const auto& [g, n] : s->per_genre) genres.insert(g);
  }
  auto count = [](const CorpusStats& s, const std::string& g) {
    auto it = s.per_genre.find(g);
    return it == s.per_genre.end() ? std::size_t{0} : it->second;
  };
  std::vector<std::string> ordered;
  for (const auto& g : known_genres()) {
    if (genres.erase(g)) ordered.push_back(g);
  }
  ordered.insert(ordered.end(), genres.begin(), genres.end());
  for (const auto& g : ordered) {
    const std::size_t a = count(tr, g), b = count(va, g), c = count(te, g);
    os << g << "\t" << a << "\t" << b << "\t" << c << "\t" << a + b + c << "\n";
  }
}

int cmd_stats(const KeyValues& kv, const Manifest& m) {
  const Data data = load_data(kv);
  print_stats(std::cout, data.dataset);
  if (!get(kv, "out").empty()) {
    const fs::path out = prepare_out(kv);
    write_manifest(out, m, kv, fnv_hex(split_manifest_json(data.dataset.clauses, data.dataset.split)), "");
    std::ofstream f = open_out(out, "stats.tsv");
    print_stats(f, data.dataset);
  }
  return kExitOk;
}

int cmd_synth(const KeyValues& kv, const Manifest& m) {
  KeyValues with_flag = kv;
  with_flag["synthetic"] = "true";
  const Data data = load_data(with_flag);
  const fs::path out = prepare_out(kv);
  const Dataset& d = data.dataset;
  write_manifest(out, m, kv, fnv_hex(split_manifest_json(d.clauses, d.split)), get(kv, "synth_seed"));
  auto dump = [&](const std::string& name, const std::vector<std::size_t>& idx) {
    std::vector<Clause> part;
    for (std::size_t i : idx) part.push_back(d.clauses[i]);
    std::ofstream f = open_out(out, name);
    write_corpus(f, part);
  };
  dump("train.jsonl", d.split.train);
  dump("validation.jsonl", d.split.validation);
  dump("test.jsonl", d.split.test);
  std::cout << "wrote " << d.clauses.size() << " synthetic clauses to " << out.string() << "\n";
  return kExitOk;
}

int cmd_train(const KeyValues& kv, const Manifest& m) {
  const ModelKind kind = parse_model_kind(require(kv, "model"));
  const ModelSpec spec = spec_from(kv, kind);
  const TrainConfig cfg = train_from(kv, kind);
  Data data = load_data(kv);
  Split split = data.dataset.split;
  const std::size_t k = to_u64("k", get(kv, "k", "0"));
  if (k > 0) split = subsample_per_label(data.dataset.clauses, split, k, cfg.seed);

  const fs::path out = prepare_out(kv);
  const std::string split_json = split_manifest_json(data.dataset.clauses, split);
  write_manifest(out, m, kv, fnv_hex(split_json), std::to_string(cfg.seed));
  {
    std::ofstream f = open_out(out, "config.txt");
    write_config(f, kv);
  }
  open_out(out, "split.json") << split_json << "\n";

  std::ofstream log = open_out(out, "train_log.jsonl");
  TrainedModel tm = train(spec, data.dataset.clauses, split, cfg, &log);
  save_checkpoint(*tm.model, out / "model.ckpt");
  {
    std::ofstream f = open_out(out, "vocab.txt");
    tm.vocab.save(f);
  }
  EvalReport rep = evaluate(*tm.model, tm.vocab, data.dataset.clauses, split.test);
  rep.provenance = split.provenance;
  rep.seed = cfg.seed;
  json extra;
  extra["best_epoch"] = tm.best_epoch;
  extra["epochs"] = tm.log.size();
  extra["best_val_macro_f1"] = tm.best_val_macro_f1;
  extra["train_config"] = json(cfg.to_kv());
  open_out(out, "report.json") << with_manifest(report_json(rep), "training", extra) << "\n";
  std::cout << model_kind_name(kind) << ": test accuracy " << rep.accuracy << ", macro-F1 " << rep.macro_f1 << " ("
            << tm.log.size() << " epochs, best " << tm.best_epoch << ")\n";
  return kExitOk;
}

struct LoadedRun {
  std::unique_ptr<Model> model;
  Vocab vocab;
  KeyValues config;
};

LoadedRun load_run(const fs::path& dir) {
  LoadedRun r;
  r.model = load_checkpoint(dir / "model.ckpt");
  std::ifstream v(dir / "vocab.txt");
  if (!v) throw DataError("missing vocabulary '" + (dir / "vocab.txt").string() + "'");
  r.vocab = Vocab::load(v);
  if (fs::exists(dir / "config.txt")) r.config = load_config(dir / "config.txt");
  return r;
}

// Data settings of the training run unless given explicitly.
KeyValues data_keys_with_fallback(const KeyValues& kv, const KeyValues& run_config) {
  KeyValues out = kv;
  const bool explicit_data = kv.count("data_dir") || kv.count("synthetic");
  if (!explicit_data) {
    for (const auto& [key, help] : kDataKeys) {
      if (run_config.count(key)) out[key] = run_config.at(key);
    }
  }
  return out;
}

int cmd_eval(const KeyValues& kv, const Manifest& m) {
  const fs::path run(require(kv, "run"));
  LoadedRun lr = load_run(run);
  const KeyValues dkv = data_keys_with_fallback(kv, lr.config);
  const Data data = load_data(dkv);
  const std::string part = get(kv, "partition", "test");
  const auto idx = partition(data.dataset.split, part);
  const fs::path out = prepare_out(kv);
  write_manifest(out, m, kv, fnv_hex(split_manifest_json(data.dataset.clauses, data.dataset.split)),
                 get(lr.config, "seed"));
  EvalReport rep = evaluate(*lr.model, lr.vocab, data.dataset.clauses, idx);
  rep.provenance = data.dataset.split.provenance + " [" + part + "]";
  if (lr.config.count("seed")) rep.seed = to_u64("seed", lr.config.at("seed"));
  const std::string body = with_manifest(report_json(rep), "checkpoint", (run / "model.ckpt").string());
  open_out(out, "report.json") << body << "\n";
  std::cout << body << "\n";
  return kExitOk;
}

int cmd_export_latents(const KeyValues& kv, const Manifest& m) {
  const fs::path run(require(kv, "run"));
  LoadedRun lr = load_run(run);
  const auto* vae = dynamic_cast<const VaeModel*>(lr.model.get());
  if (vae == nullptr) throw UsageError("export-latents needs a vae-* checkpoint");
  const Data data = load_data(data_keys_with_fallback(kv, lr.config));
  const std::string part = get(kv, "partition", "train");
  std::vector<Clause> clauses;
  for (std::size_t i : partition(data.dataset.split, part)) clauses.push_back(data.dataset.clauses[i]);
  const fs::path out = prepare_out(kv);
  write_manifest(out, m, kv, fnv_hex(split_manifest_json(data.dataset.clauses, data.dataset.split)),
                 get(lr.config, "seed"));
  const auto rows = export_latents(*vae, clauses, lr.vocab);
  std::ofstream f = open_out(out, "latents.tsv");
  write_latents_tsv(f, rows);
  std::cout << "wrote " << rows.size() << " latent means to " << (out / "latents.tsv").string() << "\n";
  return kExitOk;
}

std::vector<ProtocolModel> protocol_models(const KeyValues& kv) {
  std::vector<ProtocolModel> models;
  for (ModelKind kind : models_from(kv)) models.push_back({spec_from(kv, kind), train_from(kv, kind)});
  return models;
}

int cmd_sweep(const KeyValues& kv, const Manifest& m) {
  SweepOptions opt;
  opt.models = protocol_models(kv);
  if (kv.count("ks")) {
    opt.ks.clear();
    for (const auto& s : split_list(kv.at("ks"))) opt.ks.push_back(to_u64("ks", s));
  }
  if (kv.count("seeds")) {
    opt.seeds.clear();
    for (const auto& s : split_list(kv.at("seeds"))) opt.seeds.push_back(to_u64("seeds", s));
  }
  opt.jobs = to_u64("jobs", get(kv, "jobs", "1"));
  const Data data = load_data(kv);
  const fs::path out = prepare_out(kv);
  std::string seeds;
  for (auto s : opt.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  write_manifest(out, m, kv, fnv_hex(split_manifest_json(data.dataset.clauses, data.dataset.split)), seeds);
  fs::create_directories(out / "runs");
  std::mutex io;
  opt.on_run = [&](const SweepRun& r) {
    const std::string name = std::string(model_kind_name(r.model)) + "-k" + std::to_string(r.k) + "-s" +
                             std::to_string(r.seed) + ".json";
    open_out(out / "runs", name) << with_manifest(sweep_run_json(r)) << "\n";
    std::lock_guard lock(io);
    std::cerr << model_kind_name(r.model) << " k=" << r.k << " seed=" << r.seed << " accuracy=" << r.report.accuracy
              << " macro_f1=" << r.report.macro_f1 << "\n";
  };
  const auto runs = run_low_resource_sweep(data.dataset.clauses, data.dataset.split, opt);
  {
    std::ofstream f = open_out(out, "sweep.tsv");
    write_sweep_tsv(f, runs);
  }
  const auto agg = aggregate_sweep(runs);
  {
    std::ofstream f = open_out(out, "aggregate.tsv");
    write_aggregate_tsv(f, agg);
  }
  write_aggregate_tsv(std::cout, agg);
  return kExitOk;
}

int cmd_crossgenre(const KeyValues& kv, const Manifest& m) {
  CrossGenreOptions opt;
  opt.models = protocol_models(kv);
  if (kv.count("genres")) opt.genres = split_list(kv.at("genres"));
  opt.seed = to_u64("seed", get(kv, "seed", "1"));
  opt.jobs = to_u64("jobs", get(kv, "jobs", "1"));
  const Data data = load_data(kv);
  const fs::path out = prepare_out(kv);
  write_manifest(out, m, kv, fnv_hex(split_manifest_json(data.dataset.clauses, data.dataset.split)),
                 std::to_string(opt.seed));
  fs::create_directories(out / "runs");
  std::mutex io;
  opt.on_row = [&](const CrossGenreRow& r) {
    EvalReport rep = r.report;
    rep.provenance = r.split_provenance;
    open_out(out / "runs", std::string(model_kind_name(r.model)) + "-" + r.genre + ".json")
        << with_manifest(report_json(rep)) << "\n";
    std::lock_guard lock(io);
    std::cerr << model_kind_name(r.model) << " " << r.genre << " macro_f1=" << r.report.macro_f1 << "\n";
  };
  const auto rows = run_cross_genre(data.dataset.clauses, opt);
  {
    std::ofstream f = open_out(out, "crossgenre.tsv");
    write_cross_genre_tsv(f, rows);
  }
  write_cross_genre_tsv(std::cout, rows);
  return kExitOk;
}

int cmd_gradcheck(const KeyValues& kv, const Manifest& m) {
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(get(kv, "seeds", "1,2,3"))) seeds.push_back(to_u64("seeds", s));
  GradCheckOptions opt;
  if (kv.count("step")) opt.step = std::stod(kv.at("step"));
  if (kv.count("tolerance")) opt.tolerance = std::stod(kv.at("tolerance"));
  std::ofstream file;
  if (!get(kv, "out").empty()) {
    const fs::path out = prepare_out(kv);
    write_manifest(out, m, kv, "", get(kv, "seeds", "1,2,3"));
    file = open_out(out, "gradcheck.tsv");
  }
  const auto rows = run_gradient_suite(seeds, opt);
  bool ok = true;
  auto emit = [&](std::ostream& os) {
    os << "objective\tseed\tparams\tmax_rel_error\ttolerance\tstatus\n";
    for (const auto& r : rows) {
      char err[32];
      std::snprintf(err, sizeof err, "%.3e", r.max_rel_error);
      os << r.objective << "\t" << r.seed << "\t" << r.params << "\t" << err << "\t" << r.tolerance << "\t"
         << (r.passed() ? "ok" : "FAIL") << "\n";
    }
  };
  for (const auto& r : rows) ok = ok && r.passed();
  emit(std::cout);
  if (file.is_open()) emit(file);
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Situation entity classification with a variational latent model and baselines"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SEVAE_VERSION);

  std::vector<std::pair<std::string, std::string>> out_key = {{"out", "output directory (all files go here)"}};
  std::vector<std::pair<std::string, std::string>> run_key = {{"run", "directory of a finished train run"}};
  std::vector<std::pair<std::string, std::string>> part_key = {{"partition", "train, validation, or test"}};

  std::map<std::string, Command> cmds;
  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    Command& c = cmds[name] = make_command(app, name, help);
    c.app->add_option("--config", c.config_path, "flat key = value config file")->check(CLI::ExistingFile);
    return c;
  };

  add("convert", "convert a JSONL or TSV corpus to the interchange schema")
      .keys({{"input", "source file"},
             {"format", "jsonl or tsv"},
             {"output_name", "output file name inside out (default corpus.jsonl)"},
             {"field_text", "source field holding the clause text"},
             {"field_label", "source field holding the label"},
             {"field_genre", "source field holding the genre"},
             {"field_doc_id", "source field holding the document id"},
             {"field_par_id", "source field holding the paragraph index"},
             {"field_clause_idx", "source field holding the clause index"}});
  cmds["convert"].keys(out_key);

  add("stats", "label and genre tables").keys(kDataKeys);
  cmds["stats"].keys(out_key);

  add("synth", "write the synthetic corpus as train/validation/test JSONL").keys(out_key);
  cmds["synth"].keys(std::vector<std::pair<std::string, std::string>>(kDataKeys.begin() + 2, kDataKeys.end()));

  Command& tr = add("train", "train one model and evaluate it on the test partition");
  tr.keys(kDataKeys);
  tr.keys({{"k", "training clauses per label (0 keeps the full training split)"}});
  tr.keys(spec_keys(true));
  tr.keys(train_keys());
  tr.keys(out_key);

  Command& ev = add("eval", "evaluate a trained run");
  ev.keys(run_key);
  ev.keys(part_key);
  ev.keys(kDataKeys);
  ev.keys(out_key);

  for (const std::string name : {"sweep", "crossgenre"}) {
    Command& c = add(name, name == "sweep" ? "k-per-label low-resource sweep" : "leave-one-genre-out evaluation");
    c.keys({{"models", "comma-separated model kinds"}, {"jobs", "parallel runs"}});
    if (name == "sweep") {
      c.keys({{"ks", "comma-separated clauses-per-label grid"}, {"seeds", "comma-separated seeds"}});
    } else {
      c.keys({{"genres", "comma-separated target genres (default: all present)"}});
    }
    c.keys(kDataKeys);
    c.keys(spec_keys(false));
    c.keys(train_keys());
    c.keys(out_key);
  }

  add("gradcheck", "finite-difference check of every objective")
      .keys({{"seeds", "comma-separated seeds (default 1,2,3)"},
             {"step", "central-difference step (default 1e-5)"},
             {"tolerance", "max relative error (default 1e-4)"}});
  cmds["gradcheck"].keys(out_key);

  Command& ex = add("export-latents", "write posterior means of a vae-* run as TSV");
  ex.keys(run_key);
  ex.keys(part_key);
  ex.keys(kDataKeys);
  ex.keys(out_key);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  std::string command_line;
  for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);

  try {
    for (auto& [name, cmd] : cmds) {
      if (!cmd.app->parsed()) continue;
      const KeyValues kv = cmd.effective();
      Manifest m{command_line, cmd.config_path.empty() ? "" : fnv_hex(read_file(cmd.config_path))};
      if (name == "convert") return cmd_convert(kv, m);
      if (name == "stats") return cmd_stats(kv, m);
      if (name == "synth") return cmd_synth(kv, m);
      if (name == "train") return cmd_train(kv, m);
      if (name == "eval") return cmd_eval(kv, m);
      if (name == "sweep") return cmd_sweep(kv, m);
      if (name == "crossgenre") return cmd_crossgenre(kv, m);
      if (name == "gradcheck") return cmd_gradcheck(kv, m);
      if (name == "export-latents") return cmd_export_latents(kv, m);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    // Data, checkpoint, and I/O problems.
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
