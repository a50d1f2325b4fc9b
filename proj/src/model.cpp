#include "sevae/model.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>

#include "sevae/baselines.hpp"
#include "sevae/error.hpp"
#include "sevae/vae.hpp"

namespace sevae {
namespace {

struct KindName {
  ModelKind kind;
  std::string_view name;
};

constexpr KindName kKinds[] = {{ModelKind::disc, "disc"},         {ModelKind::gen, "gen"},
                               {ModelKind::lat, "lat"},           {ModelKind::ctx, "ctx"},
                               {ModelKind::vae_bow, "vae-bow"},   {ModelKind::vae_lstm, "vae-lstm"},
                               {ModelKind::vae_xfmr, "vae-xfmr"}};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw UsageError("config key '" + key + "' expects an unsigned integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw UsageError("config key '" + key + "' expects a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config key '" + key + "' expects true/false, got '" + v + "'");
}

// One table drives serialization, parsing, and hashing.
struct Field {
  std::string_view key;
  std::function<std::string(const ModelSpec&)> get;
  std::function<void(ModelSpec&, const std::string&)> set;
};

#define SIZE_FIELD(name)                                                               \
  Field {                                                                              \
    #name, [](const ModelSpec& s) { return std::to_string(s.name); },                  \
        [](ModelSpec& s, const std::string& v) { s.name = parse_size(#name, v); }      \
  }
#define DOUBLE_FIELD(name)                                                             \
  Field {                                                                              \
    #name, [](const ModelSpec& s) { return fmt_double(s.name); },                      \
        [](ModelSpec& s, const std::string& v) { s.name = parse_double(#name, v); }    \
  }
#define BOOL_FIELD(name)                                                               \
  Field {                                                                              \
    #name, [](const ModelSpec& s) { return std::string(s.name ? "true" : "false"); },  \
        [](ModelSpec& s, const std::string& v) { s.name = parse_bool(#name, v); }      \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"model", [](const ModelSpec& s) { return std::string(model_kind_name(s.kind)); },
            [](ModelSpec& s, const std::string& v) { s.kind = parse_model_kind(v); }},
      SIZE_FIELD(vocab_size),
      SIZE_FIELD(max_len),
      DOUBLE_FIELD(dropout),
      SIZE_FIELD(embed_dim),
      SIZE_FIELD(hidden_dim),
      SIZE_FIELD(label_dim),
      SIZE_FIELD(latent_classes),
      SIZE_FIELD(latent_class_dim),
      BOOL_FIELD(feed_label_input),
      SIZE_FIELD(ctx_word_hidden),
      SIZE_FIELD(ctx_clause_hidden),
      SIZE_FIELD(ctx_max_len),
      Field{"encoder", [](const ModelSpec& s) { return std::string(encoder_kind_name(s.encoder)); },
            [](ModelSpec& s, const std::string& v) { s.encoder = parse_encoder_kind(v); }},
      SIZE_FIELD(enc_dim),
      SIZE_FIELD(enc_layers),
      SIZE_FIELD(enc_heads),
      SIZE_FIELD(enc_ffn),
      SIZE_FIELD(latent_dim),
      SIZE_FIELD(dec_dim),
      SIZE_FIELD(dec_layers),
      SIZE_FIELD(dec_heads),
      SIZE_FIELD(dec_ffn),
      BOOL_FIELD(tie_embeddings),
      DOUBLE_FIELD(beta),
      Field{"beta_schedule",
            [](const ModelSpec& s) { return std::string(s.beta_schedule == BetaSchedule::fixed ? "fixed" : "linear"); },
            [](ModelSpec& s, const std::string& v) {
              if (v == "fixed") {
                s.beta_schedule = BetaSchedule::fixed;
              } else if (v == "linear") {
                s.beta_schedule = BetaSchedule::linear;
              } else {
                throw UsageError("beta_schedule must be 'fixed' or 'linear'");
              }
            }},
      SIZE_FIELD(beta_warmup),
      DOUBLE_FIELD(cls_weight),
      DOUBLE_FIELD(logvar_min),
      DOUBLE_FIELD(logvar_max),
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD

}  // namespace

std::string_view model_kind_name(ModelKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k.name;
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  for (const auto& k : kKinds) {
    if (k.name == name) return k.kind;
  }
  throw UsageError("unknown model '" + std::string(name) + "' (expected disc, gen, lat, ctx, vae-bow, vae-lstm, vae-xfmr)");
}

const std::vector<ModelKind>& all_model_kinds() {
  static const std::vector<ModelKind> kinds = {ModelKind::disc,    ModelKind::gen,      ModelKind::lat,
                                               ModelKind::ctx,     ModelKind::vae_bow,  ModelKind::vae_lstm,
                                               ModelKind::vae_xfmr};
  return kinds;
}

bool is_vae(ModelKind kind) {
  return kind == ModelKind::vae_bow || kind == ModelKind::vae_lstm || kind == ModelKind::vae_xfmr;
}

std::map<std::string, std::string> ModelSpec::to_kv() const {
  std::map<std::string, std::string> kv;
  for (const Field& f : fields()) kv.emplace(std::string(f.key), f.get(*this));
  return kv;
}

ModelSpec ModelSpec::from_kv(const std::map<std::string, std::string>& kv, ModelSpec base) {
  for (const auto& [key, value] : kv) {
    auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return f.key == key; });
    if (it == fields().end()) throw UsageError("unknown model spec key '" + key + "'");
    it->set(base, value);
  }
  return base;
}

ModelSpec ModelSpec::defaults_for(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  return s;
}

void ModelSpec::validate() const {
  if (vocab_size <= static_cast<std::size_t>(Vocab::kNumSpecial)) throw UsageError("model spec needs vocab_size > 5");
  if (embed_dim == 0 || hidden_dim == 0 || label_dim == 0 || latent_class_dim == 0 || enc_dim == 0 ||
      dec_dim == 0 || latent_dim == 0 || ctx_word_hidden == 0 || ctx_clause_hidden == 0) {
    throw UsageError("model dimensions must be >= 1");
  }
  if (latent_classes < 1) throw UsageError("latent_classes must be >= 1");
  if (beta < 0.0 || beta > 1.0) throw UsageError("beta must lie in [0, 1]");
  if (dropout < 0.0 || dropout >= 1.0) throw UsageError("dropout must lie in [0, 1)");
  if (enc_heads == 0 || enc_dim % enc_heads != 0) throw UsageError("enc_heads must divide enc_dim");
  if (dec_heads == 0 || dec_dim % dec_heads != 0) throw UsageError("dec_heads must divide dec_dim");
  if (logvar_min > logvar_max) throw UsageError("logvar_min exceeds logvar_max");
}

std::uint64_t ModelSpec::hash() const {
  // FNV-1a over the canonical "key=value\n" listing.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : to_kv()) {
    for (char c : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::unique_ptr<Model> make_model(const ModelSpec& spec, std::uint64_t seed, const LabelProbs& prior) {
  switch (spec.kind) {
    case ModelKind::disc: return std::make_unique<DiscriminativeModel>(spec, seed);
    case ModelKind::gen: return std::make_unique<ClassLmModel>(spec, seed, prior);
    case ModelKind::lat: return std::make_unique<LatentClassLmModel>(spec, seed, prior);
    case ModelKind::ctx: return std::make_unique<ContextAwareModel>(spec, seed);
    case ModelKind::vae_bow:
    case ModelKind::vae_lstm:
    case ModelKind::vae_xfmr: return std::make_unique<VaeModel>(spec, seed);
  }
  throw UsageError("unknown model kind");
}

}  // namespace sevae
