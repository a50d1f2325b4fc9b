#include "sevae/train.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <tuple>

#include "json.hpp"
#include "sevae/error.hpp"
#include "sevae/vae.hpp"

namespace sevae {
namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_unsigned(const std::string& key, const std::string& v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw UsageError("config key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
  return out;
}

double parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw UsageError("config key '" + key + "' expects a number, got '" + v + "'");
}

struct TrainField {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

const std::vector<TrainField>& train_fields() {
  static const std::vector<TrainField> fields = {
      {"lr", [](const TrainConfig& c) { return fmt(c.adam.lr); },
       [](TrainConfig& c, const std::string& v) { c.adam.lr = parse_number("lr", v); }},
      {"adam_beta1", [](const TrainConfig& c) { return fmt(c.adam.beta1); },
       [](TrainConfig& c, const std::string& v) { c.adam.beta1 = parse_number("adam_beta1", v); }},
      {"adam_beta2", [](const TrainConfig& c) { return fmt(c.adam.beta2); },
       [](TrainConfig& c, const std::string& v) { c.adam.beta2 = parse_number("adam_beta2", v); }},
      {"adam_eps", [](const TrainConfig& c) { return fmt(c.adam.eps); },
       [](TrainConfig& c, const std::string& v) { c.adam.eps = parse_number("adam_eps", v); }},
      {"weight_decay", [](const TrainConfig& c) { return fmt(c.adam.weight_decay); },
       [](TrainConfig& c, const std::string& v) { c.adam.weight_decay = parse_number("weight_decay", v); }},
      {"grad_clip", [](const TrainConfig& c) { return fmt(c.adam.grad_clip); },
       [](TrainConfig& c, const std::string& v) { c.adam.grad_clip = parse_number("grad_clip", v); }},
      {"logical_batch", [](const TrainConfig& c) { return std::to_string(c.logical_batch); },
       [](TrainConfig& c, const std::string& v) { c.logical_batch = parse_unsigned<std::size_t>("logical_batch", v); }},
      {"max_epochs", [](const TrainConfig& c) { return std::to_string(c.max_epochs); },
       [](TrainConfig& c, const std::string& v) { c.max_epochs = parse_unsigned<std::size_t>("max_epochs", v); }},
      {"patience", [](const TrainConfig& c) { return std::to_string(c.patience); },
       [](TrainConfig& c, const std::string& v) { c.patience = parse_unsigned<std::size_t>("patience", v); }},
      {"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
       [](TrainConfig& c, const std::string& v) { c.seed = parse_unsigned<std::uint64_t>("seed", v); }},
      {"min_count", [](const TrainConfig& c) { return std::to_string(c.min_count); },
       [](TrainConfig& c, const std::string& v) { c.min_count = parse_unsigned<int>("min_count", v); }},
      {"stop_at_accuracy", [](const TrainConfig& c) { return fmt(c.stop_at_accuracy); },
       [](TrainConfig& c, const std::string& v) { c.stop_at_accuracy = parse_number("stop_at_accuracy", v); }},
  };
  return fields;
}

void check_indices(std::span<const Clause> corpus, std::span<const std::size_t> indices) {
  for (std::size_t i : indices) {
    if (i >= corpus.size()) throw UsageError("split index " + std::to_string(i) + " outside corpus");
  }
}

}  // namespace

std::map<std::string, std::string> TrainConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  for (const auto& f : train_fields()) kv.emplace(f.key, f.get(*this));
  return kv;
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv, TrainConfig base) {
  for (const auto& [key, value] : kv) {
    const auto& fields = train_fields();
    auto it = std::find_if(fields.begin(), fields.end(), [&](const TrainField& f) { return key == f.key; });
    if (it == fields.end()) throw UsageError("unknown training key '" + key + "'");
    it->set(base, value);
  }
  return base;
}

std::vector<std::string> train_config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : train_fields()) keys.emplace_back(f.key);
  return keys;
}

void TrainConfig::validate() const {
  if (!(adam.lr > 0.0)) throw UsageError("lr must be > 0");
  if (patience < 1) throw UsageError("patience must be >= 1");
  if (logical_batch < 1) throw UsageError("logical_batch must be >= 1");
  if (max_epochs < 1) throw UsageError("max_epochs must be >= 1");
  if (adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0) {
    throw UsageError("Adam betas must lie in [0, 1)");
  }
}

TrainConfig default_train_config(ModelKind kind) {
  TrainConfig cfg;
  cfg.adam.lr = is_vae(kind) ? 5e-4 : 1e-3;
  return cfg;
}

std::vector<Unit> make_units(std::span<const Clause> corpus, std::span<const std::size_t> indices, const Vocab& vocab,
                             bool paragraph_level) {
  check_indices(corpus, indices);
  auto example = [&](std::size_t i) {
    return Example{vocab.encode(corpus[i].tokens), static_cast<int>(corpus[i].label)};
  };
  std::vector<Unit> units;
  if (!paragraph_level) {
    units.reserve(indices.size());
    for (std::size_t i : indices) units.push_back(Unit{{i}, {example(i)}});
    return units;
  }
  std::vector<std::size_t> order(indices.begin(), indices.end());
  auto key = [&](std::size_t i) {
    const Clause& c = corpus[i];
    return std::tie(c.doc_id, c.par_id, c.clause_idx);
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  for (std::size_t n = 0; n < order.size(); ++n) {
    const Clause& c = corpus[order[n]];
    bool fresh = n == 0;
    if (!fresh) {
      const Clause& prev = corpus[order[n - 1]];
      fresh = prev.doc_id != c.doc_id || prev.par_id != c.par_id || prev.clause_idx + 1 != c.clause_idx;
    }
    if (fresh) units.emplace_back();
    units.back().indices.push_back(order[n]);
    units.back().examples.push_back(example(order[n]));
  }
  return units;
}

int argmax_label(const LabelProbs& probs) { return static_cast<int>(num::argmax(probs)); }

std::vector<int> predict_labels(const Model& model, const Vocab& vocab, std::span<const Clause> corpus,
                                std::span<const std::size_t> indices) {
  std::map<std::size_t, int> by_index;
  for (const Unit& u : make_units(corpus, indices, vocab, model.paragraph_level())) {
    const std::vector<LabelProbs> probs = model.predict(u.examples);
    for (std::size_t j = 0; j < u.indices.size(); ++j) by_index[u.indices[j]] = argmax_label(probs[j]);
  }
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(by_index.at(i));
  return out;
}

EvalReport evaluate(const Model& model, const Vocab& vocab, std::span<const Clause> corpus,
                    std::span<const std::size_t> indices) {
  if (indices.empty()) throw UsageError("cannot evaluate on an empty clause set");
  std::vector<int> gold;
  gold.reserve(indices.size());
  for (std::size_t i : indices) gold.push_back(static_cast<int>(corpus[i].label));
  EvalReport r = score_predictions(gold, predict_labels(model, vocab, corpus, indices));
  r.spec_hash = hash_hex(model.spec().hash());
  return r;
}

std::string epoch_json(const EpochRecord& e) {
  nlohmann::ordered_json j;
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr); };
  j["epoch"] = e.epoch;
  j["steps"] = e.steps;
  j["loss"] = num(e.loss);
  j["classification"] = num(e.classification);
  j["reconstruction"] = num(e.reconstruction);
  j["kl"] = num(e.kl);
  j["beta"] = num(e.beta);
  j["val_accuracy"] = e.val_accuracy;
  j["val_macro_f1"] = e.val_macro_f1;
  j["improved"] = e.improved;
  j["seconds"] = e.seconds;
  return j.dump();
}

TrainedModel train(const ModelSpec& base_spec, std::span<const Clause> corpus, const Split& split,
                   const TrainConfig& cfg, std::ostream* jsonl) {
  cfg.validate();
  if (split.train.empty()) throw DataError("empty training split");
  check_indices(corpus, split.train);
  check_indices(corpus, split.validation);
  check_indices(corpus, split.test);

  TrainedModel result;
  int min_count = cfg.min_count;
  if (min_count == 0) min_count = split.train.size() <= 100 * kNumLabels ? 1 : 2;
  result.vocab = Vocab::build(corpus, split.train, min_count);

  // Lengths never truncate: the limits grow to fit every clause in the split.
  ModelSpec spec = base_spec;
  spec.vocab_size = result.vocab.size();
  std::size_t longest = 0;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (std::size_t i : *part) longest = std::max(longest, corpus[i].tokens.size());
  }
  spec.max_len = std::max(spec.max_len, longest);

  const LabelProbs prior = label_prior(corpus, split.train);
  result.model = make_model(spec, cfg.seed, prior);
  Model& model = *result.model;

  const std::vector<Unit> units = make_units(corpus, split.train, result.vocab, model.paragraph_level());
  if (model.paragraph_level()) {
    std::size_t widest = 0;
    for (const Unit& u : units) {
      std::size_t n = 0;
      for (const Example& ex : u.examples) n += ex.ids.size();
      widest = std::max(widest, n);
    }
    if (widest > spec.ctx_max_len) {
      throw DataError("paragraph of " + std::to_string(widest) + " tokens exceeds ctx_max_len " +
                      std::to_string(spec.ctx_max_len));
    }
  }
  const std::vector<std::size_t>& val = split.validation.empty() ? split.train : split.validation;

  Adam optimizer(model.params().trainable(), cfg.adam);
  Rng rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 0x5851f42d4c957f2dULL);
  std::vector<std::size_t> order(units.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<Tensor> best = model.params().snapshot();
  std::size_t since_best = 0;
  model.params().zero_grad();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double cls = 0.0, recon = 0.0, kl = 0.0;
    bool has_cls = false, has_recon = false, has_kl = false;
    std::size_t clauses = 0;
    std::size_t pending = 0;

    auto flush = [&] {
      if (pending == 0) return;
      const double inv = 1.0 / static_cast<double>(pending);
      for (Parameter* p : model.params().trainable()) {
        for (double& g : p->grad().data()) g *= inv;
      }
      optimizer.step();
      model.params().zero_grad();
      pending = 0;
    };

    for (std::size_t u : order) {
      const Unit& unit = units[u];
      model.set_step(optimizer.steps());
      Tape tape(Tape::Mode::train);
      LossParts parts = model.loss(tape, unit.examples, rng);
      rec.loss += parts.total.item();
      if (!std::isnan(parts.classification)) has_cls = true, cls += parts.classification;
      if (!std::isnan(parts.reconstruction)) has_recon = true, recon += parts.reconstruction;
      if (!std::isnan(parts.kl)) has_kl = true, kl += parts.kl;
      tape.backward(parts.total);
      pending += unit.examples.size();
      clauses += unit.examples.size();
      if (pending >= cfg.logical_batch) flush();
    }
    flush();

    const double n = static_cast<double>(clauses);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rec.loss /= n;
    rec.classification = has_cls ? cls / n : nan;
    rec.reconstruction = has_recon ? recon / n : nan;
    rec.kl = has_kl ? kl / n : nan;
    if (const auto* vae = dynamic_cast<const VaeModel*>(&model); vae != nullptr) {
      model.set_step(optimizer.steps());
      rec.beta = vae->current_beta();
    } else {
      rec.beta = nan;
    }
    rec.steps = optimizer.steps();

    const EvalReport v = evaluate(model, result.vocab, corpus, val);
    rec.val_accuracy = v.accuracy;
    rec.val_macro_f1 = v.macro_f1;
    if (v.macro_f1 > result.best_val_macro_f1) {
      result.best_val_macro_f1 = v.macro_f1;
      result.best_epoch = epoch;
      best = model.params().snapshot();
      since_best = 0;
      rec.improved = true;
    } else {
      ++since_best;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(rec);
    if (jsonl != nullptr) *jsonl << epoch_json(rec) << '\n' << std::flush;
    if (since_best >= cfg.patience) break;
    if (rec.improved && v.accuracy >= cfg.stop_at_accuracy) break;
  }
  model.params().restore(best);
  return result;
}

}  // namespace sevae
